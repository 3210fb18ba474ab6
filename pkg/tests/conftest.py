import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, after the normal report."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m is None or rep.when not in ("call", "setup"):
                continue
            status = "PASS" if outcome == "passed" else "FAIL"
            lines[int(m.group(1))] = f"criterion {m.group(1)} {status} ({m.group(2)}, {rep.duration:.1f}s)"
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
