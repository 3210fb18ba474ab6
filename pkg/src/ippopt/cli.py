"""Command-line experiment runner.

Subcommands::

    ippopt bench      --config run.json [--seed N ...] [--max-evals N] [--solver NAME] [--out DIR]
    ippopt prox-study --function ackley --dim 2 --anchors "0.5,0.5;1,-1" --t 2 --deltas 0.4,0.2
    ippopt tt-demo    --function griewank --dim 4 --delta 0.1
    ippopt hj         --function shifted_sine --dim 4 --points 100

Precedence for every setting is command-line flag, then config file, then
built-in defaults. Artifacts go to ``--out``, else the config's ``out_dir``,
else ``$IPPOPT_OUT``, else ``./ippopt-out``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import benchfns
from .gibbs import ProxQuery, gibbs_mean_dense, prox_dense, prox_mc
from .hj import HJProblem, shifted_sine_sum, solve_with_residual, sqrt_abs_sum
from .ipp import IPPParams, mc_ipp, random_search, tt_ipp
from .tt import CrossWarning, EntryOracle, MeshGrid, RankConfig, load, save, tt_cross, tt_eval, tt_prox

log = logging.getLogger("ippopt")

OUT_ENV = "IPPOPT_OUT"
DEFAULT_OUT = "ippopt-out"
SOLVERS = ("tt-ipp", "mc-ipp", "prs-baseline")
SUMMARY_COLUMNS = ("name", "d", "solver", "seed", "final_error_inf", "evals", "termination", "wallclock")
PRS_DEFAULT_EVALS = 10_000


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    """One benchmark experiment: a function instance, a solver and a list of seeds.

    ``shift_seed=None`` draws a fresh shift per run seed, so every seed is a
    different instance of the same function family.
    """

    function: str
    dim: int
    solver: str = "tt-ipp"
    shift_seed: int | None = None
    params: dict = field(default_factory=dict)
    max_evals: int | None = None
    k_max: int | None = None
    target_tol: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown config field")
        for key in ("function", "dim"):
            if key not in data:
                raise ConfigError(key, "required field is missing")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc})") from None
        return cls.from_dict(data)

    def validate(self) -> None:
        if not isinstance(self.function, str):
            raise ConfigError("function", "must be a string")
        if self.function not in benchfns.BENCHMARKS and self.function not in benchfns.ANALYTIC:
            choices = sorted(benchfns.BENCHMARKS) + sorted(benchfns.ANALYTIC)
            raise ConfigError("function", f"unknown function {self.function!r}; choose from {choices}")
        if not isinstance(self.dim, int) or isinstance(self.dim, bool) or self.dim < 1:
            raise ConfigError("dim", f"must be a positive integer, got {self.dim!r}")
        spec = benchfns.BENCHMARKS.get(self.function)
        if spec is not None and self.dim < spec.min_dim:
            raise ConfigError("dim", f"{self.function} requires dim >= {spec.min_dim}")
        if self.solver not in SOLVERS:
            raise ConfigError("solver", f"unknown solver {self.solver!r}; choose from {list(SOLVERS)}")
        if self.shift_seed is not None and not isinstance(self.shift_seed, int):
            raise ConfigError("shift_seed", "must be an integer or null")
        if self.max_evals is not None and (not isinstance(self.max_evals, int) or self.max_evals < 1):
            raise ConfigError("max_evals", "must be a positive integer or null")
        if self.k_max is not None and (not isinstance(self.k_max, int) or self.k_max < 1):
            raise ConfigError("k_max", "must be a positive integer or null")
        if self.target_tol is not None and not (isinstance(self.target_tol, (int, float)) and self.target_tol > 0):
            raise ConfigError("target_tol", "must be a positive number or null")
        if not isinstance(self.seeds, list) or not self.seeds or not all(
                isinstance(s, int) and not isinstance(s, bool) for s in self.seeds):
            raise ConfigError("seeds", "must be a nonempty list of integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds", "seeds must be distinct")
        if not isinstance(self.params, dict):
            raise ConfigError("params", "must be an object of parameter overrides")
        if self.solver != "prs-baseline":
            try:
                self.ipp_params().validate("tt" if self.solver == "tt-ipp" else "mc")
            except (TypeError, ValueError) as exc:
                bad = sorted(set(self.params) - {f.name for f in fields(IPPParams)})
                name = f"params.{bad[0]}" if bad else "params"
                raise ConfigError(name, str(exc)) from None

    def ipp_params(self) -> IPPParams:
        base = IPPParams.tt() if self.solver == "tt-ipp" else IPPParams.mc()
        overrides = dict(self.params)
        if self.max_evals is not None:
            overrides["max_evals"] = self.max_evals
        if self.k_max is not None:
            overrides["k_max"] = self.k_max
        return base.updated(**overrides)

    def objective(self, seed: int):
        shift_seed = seed if self.shift_seed is None else self.shift_seed
        return benchfns.make_objective(self.function, self.dim, seed=shift_seed)


def resolve_out_dir(flag: str | None, config_value: str | None = None) -> Path:
    return Path(flag or config_value or os.environ.get(OUT_ENV) or DEFAULT_OUT)


# --- bench --------------------------------------------------------------------

def run_one(cfg_dict: dict, seed: int):
    """Run one seed; returns ``(summary_row, jsonl_text)``. Top level so it pickles."""
    cfg = RunConfig.from_dict(cfg_dict)
    f = cfg.objective(seed)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CrossWarning)
        if cfg.solver == "prs-baseline":
            report = random_search(f, cfg.max_evals or PRS_DEFAULT_EVALS, rng=seed)
        else:
            driver = tt_ipp if cfg.solver == "tt-ipp" else mc_ipp
            kwargs = {}
            if cfg.target_tol is not None and f.x_min is not None:
                kwargs = dict(x_star=f.x_min, target_tol=cfg.target_tol)
            report = driver(f, cfg.ipp_params(), rng=seed, **kwargs)
    wall = time.perf_counter() - start
    err = f.error_inf(report.x) if f.x_min is not None and report.x is not None else math.nan
    row = {
        "name": cfg.function,
        "d": cfg.dim,
        "solver": cfg.solver,
        "seed": seed,
        "final_error_inf": f"{err:.6e}",
        "evals": report.evals,
        "termination": report.termination,
        "wallclock": f"{wall:.3f}",
    }
    data = report.to_dict()
    trace = data.pop("trace")
    head = {"record": "run", "name": cfg.function, "d": cfg.dim, "final_error_inf": err, **data}
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps({"record": "iter", **rec}, sort_keys=True) for rec in trace]
    return row, "\n".join(lines) + "\n"


def run_bench(cfg: RunConfig, out_dir: Path, workers: int = 1) -> Path:
    """Runs every seed, then writes traces and ``summary.csv`` from this process only."""
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = sorted(cfg.seeds)
    payload = cfg.to_dict()
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, [payload] * len(seeds), seeds))
    else:
        results = [run_one(payload, s) for s in seeds]
    stem = f"{cfg.function}-d{cfg.dim}-{cfg.solver}"
    for seed, (_, text) in zip(seeds, results):
        (out_dir / f"{stem}-seed{seed}.jsonl").write_text(text)
    summary = out_dir / f"{stem}-summary.csv"
    with summary.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row, _ in results:
            writer.writerow(row)
    (out_dir / f"{stem}-config.json").write_text(cfg.to_json() + "\n")
    return summary


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigError("params", f"expected KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_config(args) -> RunConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "expected a JSON object")
    flag_values = {
        "function": args.function,
        "dim": args.dim,
        "solver": args.solver,
        "shift_seed": args.shift_seed,
        "max_evals": args.max_evals,
        "k_max": args.k_max,
        "target_tol": args.target_tol,
        "seeds": args.seed,
        "out_dir": args.out,
    }
    for key, value in flag_values.items():
        if value is not None:
            data[key] = value
    if args.param:
        params = dict(data.get("params", {}))
        for text in args.param:
            k, v = _parse_param(text)
            params[k] = v
        data["params"] = params
    return RunConfig.from_dict(data)


def cmd_bench(args) -> int:
    cfg = build_config(args)
    out = resolve_out_dir(args.out, cfg.out_dir)
    summary = run_bench(cfg, out, workers=args.workers)
    sys.stdout.write(summary.read_text())
    log.info("wrote %s", summary)
    return 0


# --- prox-study -----------------------------------------------------------------

def _parse_floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {text!r}") from None


def _tt_prox_estimate(f, x, t, delta, h, rng):
    """Cross ``exp(-(f - c)/delta)`` on a mesh around ``x`` and integrate."""
    half = 6.0 * math.sqrt(t * delta) + 2.0 * h
    mesh = MeshGrid(x - half, x + half, h)
    probe = mesh.points(np.stack([rng.integers(0, n, 256) for n in mesh.mode_sizes], axis=1))
    c = float(np.min(f(probe)))

    def psi(idx):
        return np.exp(-(f(mesh.points(idx)) - c) / delta)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CrossWarning)
        tt = tt_cross(EntryOracle(psi, mesh.mode_sizes), mesh.mode_sizes, 1e-8, RankConfig(2, 2, 20), rng)
    return tt_prox(tt, mesh, x, t, delta)


def prox_study(function: str, d: int, anchors, t: float, deltas, methods, n_samples: int = 10**5,
               h: float = 0.01, seed: int = 0) -> list[dict]:
    """Error of each Gibbs-mean estimate against the exact prox point."""
    if d > 3:
        raise ConfigError("dim", f"the dense reference needs d <= 3, got {d}")
    for m in methods:
        if m not in ("mc", "tt", "dense"):
            raise ConfigError("methods", f"unknown method {m!r}; choose from mc, tt, dense")
    f = benchfns.make_objective(function, d, seed=None) if function in benchfns.ANALYTIC else \
        benchfns.make_benchmark(function, d)
    rng = np.random.default_rng(seed)
    rows = []
    for x in anchors:
        x = np.asarray(x, dtype=float)
        if x.size != d:
            raise ConfigError("anchors", f"anchor {x.tolist()} does not have dimension {d}")
        if function == "quadratic":
            ref = x / (1.0 + t)
        else:
            ref = prox_dense(f, x, t, half_width=4.0 + 2.0 * math.sqrt(t))
        for delta in deltas:
            for m in methods:
                if m == "mc":
                    est = prox_mc(f, ProxQuery(x, t, delta), n_samples, rng).point
                elif m == "tt":
                    est = _tt_prox_estimate(f, x, t, delta, h, rng)
                else:
                    est = gibbs_mean_dense(f, x, t, delta)
                rows.append({
                    "x": " ".join(f"{v:g}" for v in x),
                    "t": t,
                    "delta": delta,
                    "method": m,
                    "error": f"{float(np.max(np.abs(est - ref))):.6e}",
                })
    return rows


def _write_rows(rows, path: Path | None, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    sys.stdout.write(text)


def cmd_prox_study(args) -> int:
    anchors = [_parse_floats(a, "anchors") for a in args.anchors.split(";") if a.strip()]
    if not anchors:
        raise ConfigError("anchors", "at least one anchor is needed")
    rows = prox_study(args.function, args.dim, anchors, args.t, _parse_floats(args.deltas, "deltas"),
                      [m.strip() for m in args.methods.split(",")], n_samples=args.samples, h=args.h,
                      seed=args.seed[0] if args.seed else 0)
    out = resolve_out_dir(args.out) / f"prox-study-{args.function}-d{args.dim}.csv"
    _write_rows(rows, out, ["x", "t", "delta", "method", "error"])
    return 0


# --- tt-demo --------------------------------------------------------------------

def tt_demo(function: str, d: int, delta: float, h: float, tau_stop: float, r_max: int, seed: int,
            probes: int = 1000, cache: Path | None = None) -> dict:
    """Cross-approximate ``exp(-(f - c)/delta)`` on the box mesh; report ranks and probe error."""
    f = benchfns.make_objective(function, d, seed=seed)
    mesh = MeshGrid(f.lower, f.upper, h)
    rng = np.random.default_rng(seed)
    meta_key = dict(function=function, d=d, delta=delta, h=h, tau_stop=tau_stop, r_max=r_max, seed=seed)
    idx = np.stack([rng.integers(0, n, 2000) for n in mesh.mode_sizes], axis=1)
    c = float(np.min(f(mesh.points(idx))))

    def psi(ix):
        return np.exp(-(f(mesh.points(ix)) - c) / delta)

    cached = False
    if cache is not None and cache.exists():
        tt, meta = load(cache)
        cached = {k: meta.get(k) for k in meta_key} == meta_key
        c = meta.get("shift", c)
    if not cached:
        oracle = EntryOracle(psi, mesh.mode_sizes)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CrossWarning)
            tt = tt_cross(oracle, mesh.mode_sizes, tau_stop, RankConfig(2, 2, r_max), rng)
        calls = oracle.calls
        if cache is not None:
            save(tt, cache, shift=c, calls=calls, **meta_key)
    else:
        calls = 0
    pidx = np.stack([rng.integers(0, n, probes) for n in mesh.mode_sizes], axis=1)
    exact = psi(pidx)
    approx = tt_eval(tt, pidx)
    scale = max(float(np.max(np.abs(exact))), 1e-300)
    return {
        "function": function,
        "d": d,
        "delta": delta,
        "h": h,
        "mode_size": mesh.mode_sizes[0],
        "ranks": list(tt.ranks),
        "max_rank": tt.max_rank,
        "calls": calls,
        "cached": cached,
        "probe_error": float(np.max(np.abs(approx - exact)) / scale),
    }


def cmd_tt_demo(args) -> int:
    out = resolve_out_dir(args.out)
    cache = Path(args.cache) if args.cache else None
    result = tt_demo(args.function, args.dim, args.delta, args.h, args.tau_stop, args.r_max,
                     args.seed[0] if args.seed else 0, cache=cache)
    out.mkdir(parents=True, exist_ok=True)
    line = json.dumps(result, sort_keys=True)
    (out / f"tt-demo-{args.function}-d{args.dim}.jsonl").write_text(line + "\n")
    print(line)
    return 0


# --- hj -------------------------------------------------------------------------

HJ_FUNCTIONS = {
    "sqrt_abs": sqrt_abs_sum,
    "shifted_sine": shifted_sine_sum,
    "quadratic": lambda y: 0.5 * np.sum(np.atleast_2d(y) ** 2, axis=1),
}


def hj_table(function: str, d: int, p: float, t: float, n_points: int, seed: int, fd_step: float = 1e-3,
             solver: str | None = None, box: float = 2.0, max_evals: int | None = None) -> list[dict]:
    if function not in HJ_FUNCTIONS:
        raise ConfigError("function", f"unknown initial condition {function!r}; choose from {sorted(HJ_FUNCTIONS)}")
    inner = None
    if max_evals is not None:
        inner = (IPPParams.mc() if solver == "mc" else IPPParams.tt()).updated(max_evals=max_evals)
    prob = HJProblem(HJ_FUNCTIONS[function], d, p=p, fd_step=fd_step, seed=seed, solver=solver, inner=inner)
    xs = np.random.default_rng(seed).uniform(-box, box, (n_points, d))
    rows = []
    for x in xs:
        s = solve_with_residual(prob, x, t)
        rows.append({"x": " ".join(f"{v:.6f}" for v in x), "t": t, "u": f"{s.u_tilde:.10e}",
                     "residual": f"{s.residual:.6e}"})
    return rows


def cmd_hj(args) -> int:
    rows = hj_table(args.function, args.dim, args.p, args.t, args.points, args.seed[0] if args.seed else 0,
                    fd_step=args.fd_step, solver=args.solver, max_evals=args.max_evals)
    out = resolve_out_dir(args.out) / f"hj-{args.function}-d{args.dim}.csv"
    _write_rows(rows, out, ["x", "t", "u", "residual"])
    res = np.array([float(r["residual"]) for r in rows])
    log.info("L2-average residual %.3e over %d points", float(np.sqrt(np.mean(res**2))), len(rows))
    return 0


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ippopt", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, action="append", help="seed; repeat for several")

    b = sub.add_parser("bench", help="run a solver on a benchmark over several seeds")
    common(b)
    b.add_argument("--config", help="JSON run configuration")
    b.add_argument("--function")
    b.add_argument("--dim", type=int)
    b.add_argument("--solver", choices=SOLVERS)
    b.add_argument("--shift-seed", type=int)
    b.add_argument("--max-evals", type=int)
    b.add_argument("--k-max", type=int)
    b.add_argument("--target-tol", type=float, help="stop once ||x - x*||_inf <= this")
    b.add_argument("--param", action="append", metavar="KEY=VALUE", help="solver parameter override")
    b.add_argument("--workers", type=int, default=1, help="processes for the seed fan-out")
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("prox-study", help="prox-estimate errors against the exact prox point (d <= 3)")
    common(p)
    p.add_argument("--function", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--anchors", required=True, help='points separated by ";", coordinates by ","')
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--deltas", default="0.4,0.2,0.1,0.05")
    p.add_argument("--methods", default="dense")
    p.add_argument("--samples", type=int, default=10**5, help="Monte Carlo sample size")
    p.add_argument("--h", type=float, default=0.01, help="TT mesh size")
    p.set_defaults(func=cmd_prox_study)

    t = sub.add_parser("tt-demo", help="cross-approximate exp(-f/delta) and report ranks")
    common(t)
    t.add_argument("--function", required=True)
    t.add_argument("--dim", type=int, required=True)
    t.add_argument("--delta", type=float, default=0.1)
    t.add_argument("--h", type=float, default=0.1)
    t.add_argument("--tau-stop", type=float, default=1e-4)
    t.add_argument("--r-max", type=int, default=20)
    t.add_argument("--cache", help="JSON file to reuse (or create) the tensor train")
    t.set_defaults(func=cmd_tt_demo)

    h = sub.add_parser("hj", help="Hopf-Lax values and residuals at random points")
    common(h)
    h.add_argument("--function", default="shifted_sine", choices=sorted(HJ_FUNCTIONS))
    h.add_argument("--dim", type=int, default=4)
    h.add_argument("--p", type=float, default=2.0)
    h.add_argument("--t", type=float, default=1.0)
    h.add_argument("--points", type=int, default=100)
    h.add_argument("--fd-step", type=float, default=1e-3)
    h.add_argument("--solver", choices=("tt", "mc"))
    h.add_argument("--max-evals", type=int, help="evaluation cap per inner solve")
    h.set_defaults(func=cmd_hj)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ippopt: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"ippopt: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
