import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippopt import cli
from ippopt.benchfns import BENCHMARKS, make_benchmark
from ippopt.cli import SUMMARY_COLUMNS, ConfigError, RunConfig, main, prox_study, run_bench, tt_demo


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def without_wallclock(rows):
    return [{k: v for k, v in r.items() if k != "wallclock"} for r in rows]


configs = st.builds(
    RunConfig,
    function=st.sampled_from(sorted(n for n, s in BENCHMARKS.items() if s.min_dim <= 2)),
    dim=st.integers(2, 6),
    solver=st.sampled_from(["tt-ipp", "mc-ipp", "prs-baseline"]),
    shift_seed=st.none() | st.integers(0, 1000),
    params=st.fixed_dictionaries({}, optional={"t0": st.floats(0.5, 2.0), "m": st.integers(1, 6)}),
    max_evals=st.none() | st.integers(1, 10**6),
    k_max=st.none() | st.integers(1, 500),
    target_tol=st.none() | st.floats(1e-6, 1.0),
    seeds=st.lists(st.integers(0, 2**31), min_size=1, max_size=5, unique=True),
    out_dir=st.none() | st.just("runs/x"),
)


@settings(max_examples=50, deadline=None)
@given(configs)
def test_config_round_trip(cfg):
    cfg.validate()
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@pytest.mark.parametrize("data, field", [
    ({"function": "nope", "dim": 2}, "function"),
    ({"dim": 2}, "function"),
    ({"function": "ackley", "dim": 0}, "dim"),
    ({"function": "rosenbrock", "dim": 1}, "dim"),
    ({"function": "ackley", "dim": 2, "solver": "annealing"}, "solver"),
    ({"function": "ackley", "dim": 2, "seeds": []}, "seeds"),
    ({"function": "ackley", "dim": 2, "seeds": [1, 1]}, "seeds"),
    ({"function": "ackley", "dim": 2, "max_evals": -5}, "max_evals"),
    ({"function": "ackley", "dim": 2, "params": {"bogus": 1}}, "params.bogus"),
    ({"function": "ackley", "dim": 2, "params": {"delta0": 2.0}}, "params"),
    ({"function": "ackley", "dim": 2, "colour": "red"}, "colour"),
])
def test_config_errors_name_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict(data)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_unknown_function_exits_nonzero_naming_field(tmp_path, capsys):
    code = main(["bench", "--function", "nope", "--dim", "2", "--out", str(tmp_path)])
    assert code != 0
    assert "function" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["bench", "--config", str(bad)]) != 0


def test_bench_five_seeds_writes_traces_and_summary(tmp_path):
    cfg_path = tmp_path / "griewank.json"
    cfg_path.write_text(json.dumps({"function": "griewank", "dim": 2, "solver": "tt-ipp",
                                    "max_evals": 3000, "seeds": [4, 0, 3, 1, 2]}))
    out = tmp_path / "out"
    assert main(["bench", "--config", str(cfg_path), "--out", str(out)]) == 0
    traces = sorted(out.glob("*.jsonl"))
    assert len(traces) == 5
    rows = read_csv(out / "griewank-d2-tt-ipp-summary.csv")
    assert len(rows) == 5
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert [int(r["seed"]) for r in rows] == [0, 1, 2, 3, 4]
    for r in rows:
        assert int(r["evals"]) <= 3000
        assert float(r["final_error_inf"]) >= 0
    lines = traces[0].read_text().splitlines()
    head = json.loads(lines[0])
    assert head["record"] == "run" and head["solver"] == "tt-ipp"
    assert all(json.loads(line)["record"] == "iter" for line in lines[1:])
    saved = RunConfig.from_json((out / "griewank-d2-tt-ipp-config.json").read_text())
    assert saved.seeds == [4, 0, 3, 1, 2]


def test_single_ackley_row_is_populated(tmp_path):
    cfg = RunConfig("ackley", 5, "tt-ipp", seeds=[1], max_evals=5000)
    rows = read_csv(run_bench(cfg, tmp_path))
    assert len(rows) == 1
    f = make_benchmark("ackley", 5, seed=1)
    assert float(rows[0]["final_error_inf"]) <= f.error_inf(f.lower)
    assert 0 < int(rows[0]["evals"]) <= 5000


@pytest.mark.parametrize("solver", ["tt-ipp", "mc-ipp", "prs-baseline"])
def test_same_config_gives_identical_outputs(tmp_path, solver):
    cfg = RunConfig("rastrigin", 3, solver, seeds=[0, 7], max_evals=2000)
    a = run_bench(cfg, tmp_path / "a")
    b = run_bench(cfg, tmp_path / "b", workers=2)
    assert without_wallclock(read_csv(a)) == without_wallclock(read_csv(b))
    for trace in sorted((tmp_path / "a").glob("*.jsonl")):
        assert trace.read_bytes() == (tmp_path / "b" / trace.name).read_bytes()
    assert all(int(r["evals"]) <= 2000 for r in read_csv(a))


def test_flags_override_config(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"function": "sphere", "dim": 3, "max_evals": 100, "params": {"m": 2}}))
    args = cli.build_parser().parse_args(
        ["bench", "--config", str(cfg_path), "--max-evals", "250", "--seed", "3", "--seed", "5",
         "--param", "t0=2.0", "--solver", "mc-ipp"])
    cfg = cli.build_config(args)
    assert cfg.max_evals == 250 and cfg.seeds == [3, 5] and cfg.solver == "mc-ipp"
    assert cfg.params == {"m": 2, "t0": 2.0}
    assert cfg.ipp_params().max_evals == 250


def test_output_directory_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUT_ENV, raising=False)
    assert str(cli.resolve_out_dir(None)) == cli.DEFAULT_OUT
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.resolve_out_dir(None) == tmp_path / "env"
    assert cli.resolve_out_dir(None, "cfg") == cli.Path("cfg")
    assert cli.resolve_out_dir("flag", "cfg") == cli.Path("flag")
    assert main(["bench", "--function", "sphere", "--dim", "2", "--max-evals", "200"]) == 0
    assert (tmp_path / "env" / "sphere-d2-tt-ipp-summary.csv").exists()


def test_prox_study_row_count_and_quadratic_exactness():
    anchors = [[0.5, 0.5], [-1.0, 2.0]]
    rows = prox_study("ackley", 2, anchors, 2.0, [0.4, 0.2, 0.1, 0.05], ["dense"])
    assert len(rows) == 4 * len(anchors)
    rows = prox_study("quadratic", 2, [[1.0, 1.0]], 1.0, [0.2, 0.05], ["dense", "tt"])
    assert all(float(r["error"]) <= 1e-4 for r in rows)
    with pytest.raises(ConfigError, match="dim"):
        prox_study("ackley", 4, [[0.0] * 4], 1.0, [0.1], ["dense"])


def test_prox_study_command_writes_csv(tmp_path, capsys):
    code = main(["prox-study", "--function", "double_well", "--dim", "1", "--anchors", "0.2",
                 "--t", "5", "--deltas", "0.2,0.1", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "prox-study-double_well-d1.csv")
    assert len(rows) == 2
    assert float(rows[1]["error"]) < float(rows[0]["error"])


def test_tt_demo_cache_reuse(tmp_path):
    cache = tmp_path / "psi.json"
    first = tt_demo("griewank", 3, 0.5, 0.2, 1e-6, 10, seed=0, cache=cache)
    assert cache.exists() and not first["cached"] and first["calls"] > 0
    second = tt_demo("griewank", 3, 0.5, 0.2, 1e-6, 10, seed=0, cache=cache)
    assert second["cached"] and second["calls"] == 0
    assert second["ranks"] == first["ranks"]
    assert second["probe_error"] == first["probe_error"]
    assert second["probe_error"] <= 1e-4
    # a different request ignores the stale cache
    third = tt_demo("griewank", 3, 0.25, 0.2, 1e-6, 10, seed=0, cache=cache)
    assert not third["cached"]


def test_hj_command(tmp_path):
    code = main(["hj", "--function", "quadratic", "--dim", "2", "--points", "3", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "hj-quadratic-d2.csv")
    assert len(rows) == 3
    assert all(float(r["residual"]) <= 1e-5 for r in rows)
