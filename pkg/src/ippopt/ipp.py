"""Inexact proximal point drivers.

Both drivers share the step-size rule for ``t`` and the non-monotone
sufficient-decrease test; they differ in how the prox point is estimated:

* :func:`tt_ipp` cross-approximates ``psi = exp(-(f - c)/delta)`` once on a
  mesh and reuses it, squaring it (Hadamard product, no new evaluations)
  whenever ``delta`` halves and re-crossing only when the mesh is refined.
* :func:`mc_ipp` draws fresh Gaussian samples every iteration, damps the
  estimate with an EWMA and adapts sample size, damping and ``delta``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .gibbs import ProxQuery, ewma_combine, prox_mc
from .tt import (
    EntryOracle,
    MeshGrid,
    ProxEstimationError,
    RankConfig,
    tt_cross,
    tt_hadamard,
    tt_mean,
    tt_normalize,
    tt_prox,
    tt_round,
)
from .tt.cross import CrossWarning

log = logging.getLogger(__name__)

__all__ = [
    "IPPParams",
    "IterRecord",
    "RunReport",
    "BudgetExhausted",
    "t_update",
    "decrease_check",
    "warm_start",
    "tt_ipp",
    "mc_ipp",
    "random_search",
    "evals_to_accuracy",
]


@dataclass
class IPPParams:
    """Control parameters. Defaults are the TT-IPP column of the reference setup;
    use :meth:`mc` for the MC-IPP column."""

    delta0: float = 0.1
    eta_minus: float = 0.5
    eta_plus: float = 2.0
    theta1: float = 0.25
    theta2: float = 0.75
    eps_bar: float = 0.2
    eta: float = 1e-3
    T: float = 20.0
    tau: float = 0.5
    t0: float = 1.0
    m: int = 4
    k_max: int = 200
    eps_stop: float = 1e-5
    max_evals: int | None = None
    delta_floor: float = 1e-8
    warm_start: bool = True
    # TT-IPP
    h0: float = 0.1
    gamma: float = 1.1
    C_mesh: float = 1.0
    tau_stop: float = 1e-3
    r_init: int = 2
    kick: int = 2
    r_max: int = 20
    max_sweeps: int = 12
    round_tol: float = 1e-8
    shift_probe: int = 1000
    refine_window: bool = True
    # MC-IPP
    alpha_min: float = 0.2
    alpha0: float = 0.3
    alpha_max: float = 0.3
    p_reject: float = 0.8
    N0: int | None = None
    C_growth: float = 1.1
    c_decay: float = 0.9
    init_box: float = 3.0
    max_rejections: int = 10

    @classmethod
    def tt(cls, **overrides) -> "IPPParams":
        return cls(**overrides)

    @classmethod
    def mc(cls, **overrides) -> "IPPParams":
        base = dict(eta_minus=0.9)
        base.update(overrides)
        return cls(**base)

    def updated(self, **overrides) -> "IPPParams":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return replace(self, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self, solver: str = "tt") -> None:
        checks = [
            (0 < self.delta0 < 1, "delta0 must lie in (0, 1)"),
            (0 < self.eta_minus < 1, "eta_minus must lie in (0, 1)"),
            (self.eta_plus > 1, "eta_plus must exceed 1"),
            (0 < self.theta1 <= self.theta2 < 1, "need 0 < theta1 <= theta2 < 1"),
            (self.eps_bar > 0, "eps_bar must be positive"),
            (0 < self.eta < 1, "eta must lie in (0, 1)"),
            (0 < self.tau <= self.t0 <= self.T, "need 0 < tau <= t0 <= T"),
            (self.m >= 1, "m must be >= 1"),
            (self.k_max >= 1, "k_max must be >= 1"),
            (self.eps_stop >= 0, "eps_stop must be non-negative (0 disables it)"),
            (self.max_evals is None or self.max_evals >= 1, "max_evals must be positive"),
        ]
        if solver == "tt":
            checks += [
                (self.h0 > 0, "h0 must be positive"),
                (self.gamma > 1, "gamma must exceed 1"),
                (self.C_mesh > 0, "C_mesh must be positive"),
                (self.tau_stop > 0, "tau_stop must be positive"),
                (1 <= self.r_init <= self.r_max, "need 1 <= r_init <= r_max"),
            ]
        elif solver == "mc":
            checks += [
                (0 < self.alpha_min <= self.alpha0 <= self.alpha_max <= 1,
                 "need 0 < alpha_min <= alpha0 <= alpha_max <= 1"),
                (self.alpha_min > 1 - self.eta_minus, "convergence requires alpha_min > 1 - eta_minus"),
                (0 < self.p_reject < 1, "p_reject must lie in (0, 1)"),
                (self.N0 is None or self.N0 >= 1, "N0 must be positive"),
                (self.C_growth > 1, "C_growth must exceed 1"),
                (0 < self.c_decay < 1, "c_decay must lie in (0, 1)"),
            ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


@dataclass
class IterRecord:
    k: int
    x: list
    f_x: float
    t: float
    delta: float
    q: float | None
    evals: int
    N: int | None = None
    alpha: float | None = None
    h: float | None = None
    tt_rank: int | None = None
    delta_halved: bool = False
    mesh_refined: bool = False
    rejected_count: int = 0


@dataclass
class RunReport:
    x: np.ndarray
    f: float
    trace: list[IterRecord]
    termination: str
    evals: int
    seed: int | None
    solver: str
    params: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "x": np.asarray(self.x).tolist(),
            "f": self.f,
            "termination": self.termination,
            "evals": self.evals,
            "seed": self.seed,
            "solver": self.solver,
            "params": self.params,
            "message": self.message,
            "trace": [asdict(r) for r in self.trace],
        }


def evals_to_accuracy(report: RunReport, x_star, tol: float) -> int | None:
    """Cumulative evaluations when an iterate first met ``||x - x*||_inf <= tol``."""
    x_star = np.asarray(x_star, dtype=float)
    for rec in report.trace:
        if np.max(np.abs(np.asarray(rec.x) - x_star)) <= tol:
            return rec.evals
    return None


# --- shared rules -------------------------------------------------------------

def t_update(q_k: float, q_prev: float | None, t_k: float, params: IPPParams) -> float:
    """Step-size rule: grow ``t`` when the step shrank, cut it when the step grew."""
    if q_prev is None:
        return t_k
    if q_k <= params.theta1 * q_prev + params.eps_bar:
        return min(params.eta_plus * t_k, params.T)
    if q_k > params.theta2 * q_prev + params.eps_bar:
        return max(params.eta_minus * t_k, params.tau)
    return t_k


def decrease_check(f_new: float, window, k: int, eta: float, m: int | None = None) -> bool:
    """True when the new value fails the non-monotone decrease test.

    ``window`` holds the last ``m`` objective values (most recent last);
    the test is skipped while ``k < m - 1``.
    """
    window = list(window)
    if not window:
        raise ValueError("window must be nonempty")
    m = len(window) if m is None else m
    if k < m - 1:
        return False
    return f_new > max(window[-m:]) - eta / max(k, 1)


class BudgetExhausted(RuntimeError):
    pass


class _Budget:
    """Evaluation guard: refuses batches that would overrun ``max_evals``."""

    def __init__(self, f, max_evals):
        self.f = f
        self.max_evals = max_evals
        self.start = f.eval_count if hasattr(f, "eval_count") else 0
        self.used = 0

    @property
    def remaining(self):
        return math.inf if self.max_evals is None else self.max_evals - self.used

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = 1 if x.ndim == 1 else x.shape[0]
        if n > self.remaining:
            raise BudgetExhausted(f"evaluation budget {self.max_evals} exhausted")
        self.used += n
        return self.f(x)


class _PointCache:
    """Memoizes objective values at mesh nodes across meshes and deltas."""

    def __init__(self, f):
        self.f = f
        self.values: dict[bytes, float] = {}

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        keys = [row.tobytes() for row in np.rint(pts * 1e9).astype(np.int64)]
        out = np.empty(len(keys))
        todo: dict[bytes, list[int]] = {}
        for p, k in enumerate(keys):
            v = self.values.get(k)
            if v is None:
                todo.setdefault(k, []).append(p)
            else:
                out[p] = v
        if todo:
            rows = np.array([ps[0] for ps in todo.values()])
            vals = np.asarray(self.f(pts[rows]), dtype=float).reshape(-1)
            for (k, ps), v in zip(todo.items(), vals):
                self.values[k] = float(v)
                out[ps] = v
        return out


def _mc_warm_start(f, delta0, n, lower, upper, rng):
    x = rng.uniform(lower, upper, size=(n, len(lower)))
    fx = np.asarray(f(x), dtype=float)
    w = np.exp(-(fx - fx.min()) / delta0)
    return (w @ x) / w.sum()


def warm_start(f, delta0: float, mode: str = "mc", rng=None, *, n_samples: int | None = None,
               lower=None, upper=None, psi_tt=None, mesh: MeshGrid | None = None):
    """Gibbs mean of ``exp(-f/delta0)`` over a box, used as ``x^0``.

    ``mode="mc"`` averages ``n_samples`` uniform draws on ``[lower, upper]``;
    ``mode="tt"`` integrates an already built ``psi_tt`` on ``mesh``.
    """
    if mode == "mc":
        rng = np.random.default_rng(rng)
        d = len(lower)
        return _mc_warm_start(f, delta0, n_samples or 40 * d, np.asarray(lower, float), np.asarray(upper, float), rng)
    if mode == "tt":
        if psi_tt is None or mesh is None:
            raise ValueError("tt warm start needs psi_tt and mesh")
        return tt_mean(psi_tt, mesh)
    raise ValueError(f"unknown warm-start mode {mode!r}")


def _record(k, x, fx, t, delta, q, evals, **extra):
    return IterRecord(k=k, x=np.asarray(x, dtype=float).tolist(), f_x=float(fx), t=float(t), delta=float(delta),
                      q=None if q is None else float(q), evals=int(evals), **extra)


# --- TT-IPP -------------------------------------------------------------------

class _ShiftTooHigh(Exception):
    """A sampled value lies so far below the shift that ``psi`` would overflow."""


class _PsiBuilder:
    """Builds ``exp(-(f - c)/delta)`` on a mesh by TT cross, reusing cached values."""

    OVERFLOW_MARGIN = 600.0
    MAX_RESTARTS = 8

    def __init__(self, values: _PointCache, params: IPPParams, rng):
        self.values = values
        self.params = params
        self.rng = rng
        self.c = math.inf
        self.last_info = None

    def probe(self, mesh: MeshGrid):
        """Latin-hypercube probe of mesh nodes; sets the shift ``c``."""
        n = np.asarray(mesh.mode_sizes)
        k = max(1, int(self.params.shift_probe))
        strata = (np.arange(k)[:, None] + self.rng.random((k, mesh.d))) / k
        idx = np.floor(strata * n).astype(np.int64)
        for j in range(mesh.d):
            idx[:, j] = self.rng.permutation(idx[:, j])
        idx = np.minimum(idx, n - 1)
        fv = self.values(mesh.points(idx))
        self.c = min(self.c, float(fv.min()))
        order = np.argsort(fv)[: self.params.r_init]
        return idx[order]

    def build(self, mesh: MeshGrid, delta: float, seed_indices=None):
        values = self.values
        cfg = RankConfig(self.params.r_init, self.params.kick, self.params.r_max)
        for _ in range(self.MAX_RESTARTS):
            c = self.c

            def psi(idx):
                fv = values(mesh.points(idx))
                if not np.all(np.isfinite(fv)):
                    bad = mesh.points(idx[~np.isfinite(fv)][:1])[0]
                    raise ProxEstimationError(f"objective is not finite at {bad.tolist()}")
                low = float(fv.min())
                if low < c - self.OVERFLOW_MARGIN * delta:
                    raise _ShiftTooHigh(low)
                return np.exp(-(fv - c) / delta)

            oracle = EntryOracle(psi, mesh.mode_sizes)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", CrossWarning)
                    tt = tt_cross(oracle, mesh.mode_sizes, self.params.tau_stop, cfg, self.rng,
                                  max_sweeps=self.params.max_sweeps, seed_indices=seed_indices)
                break
            except _ShiftTooHigh as exc:
                # values seen so far are cached, so restarting costs no evaluations
                self.c = exc.args[0]
        else:
            raise ProxEstimationError("could not find a shift keeping psi in floating-point range")
        self.last_info = tt.info
        if not tt.info.converged:
            log.info("TT cross did not converge (rel change %.2e, ranks %s)", tt.info.rel_change, tt.ranks)
        return tt


def _on_target(x, x_star, target_tol) -> bool:
    if x_star is None or target_tol is None:
        return False
    return float(np.max(np.abs(np.asarray(x) - np.asarray(x_star, dtype=float)))) <= target_tol


def tt_ipp(f, params: IPPParams | None = None, rng=None, x0=None, lower=None, upper=None, *,
           x_star=None, target_tol: float | None = None) -> RunReport:
    """Tensor-train inexact proximal point method on the box of ``f``.

    With ``x_star`` and ``target_tol`` the run also stops (termination
    ``"target"``) once ``||x - x_star||_inf <= target_tol``.
    """
    params = params or IPPParams.tt()
    params.validate("tt")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    lower = np.asarray(f.lower if lower is None else lower, dtype=float)
    upper = np.asarray(f.upper if upper is None else upper, dtype=float)
    budget = _Budget(f, params.max_evals)
    values = _PointCache(budget)
    builder = _PsiBuilder(values, params, rng)

    mesh = MeshGrid(lower, upper, params.h0)
    delta = params.delta0
    t = params.t0
    trace: list[IterRecord] = []
    x = np.asarray(x0, dtype=float) if x0 is not None else 0.5 * (lower + upper)
    fx = math.nan

    def report(termination, message=""):
        return RunReport(np.asarray(x, dtype=float), float(fx), trace, termination, budget.used, seed, "tt-ipp",
                         params.to_dict(), message)

    try:
        seeds = builder.probe(mesh)
        psi = builder.build(mesh, delta, seeds)
        if params.warm_start and x0 is None:
            x = tt_mean(psi, mesh)
        fx = float(budget(x))
    except BudgetExhausted as exc:
        return report("budget", str(exc))
    except ProxEstimationError as exc:
        return report("error", str(exc))
    builder.c = min(builder.c, fx)
    history = [fx]
    q_prev = None
    trace.append(_record(0, x, fx, t, delta, None, budget.used, h=mesh.h, tt_rank=psi.max_rank))
    termination = "k_max"

    for k in range(params.k_max):
        try:
            x_new = tt_prox(psi, mesh, x, t, delta)
            f_new = float(budget(x_new))
        except BudgetExhausted as exc:
            return report("budget", str(exc))
        except ProxEstimationError as exc:
            return report("error", str(exc))

        halved = refined = False
        if decrease_check(f_new, history[-params.m:], k, params.eta, params.m) and delta > params.delta_floor:
            halved = True
            builder.c = min(builder.c, f_new, min(history))
            delta_new = max(delta / 2.0, params.delta_floor)
            # the prox estimate is scale free; normalizing keeps the square in range
            try:
                psi = tt_normalize(psi)
            except FloatingPointError as exc:
                x, fx = x_new, f_new
                return report("error", str(exc))
            psi = tt_round(tt_hadamard(psi, psi), params.round_tol)
            if mesh.h > params.C_mesh * delta**params.gamma:
                factor = 2 ** math.floor(params.gamma)
                if params.refine_window:
                    mesh = mesh.refine_window(x_new if f_new <= fx else x, factor, lower, upper)
                else:
                    mesh = mesh.refine(factor)
                seeds = [mesh.nearest_index(x_new), mesh.nearest_index(x)]
                if (not params.refine_window and builder.last_info is not None
                        and len(builder.last_info.right_sets) > 1):
                    # old column sets map onto the refined mesh by index * factor
                    cols = builder.last_info.right_sets[1] * factor
                    head = np.full((cols.shape[0], 1), seeds[0][0])
                    seeds.append(np.hstack([head, cols]))
                try:
                    psi = builder.build(mesh, delta_new, np.vstack(seeds))
                except BudgetExhausted as exc:
                    x, fx = x_new, f_new
                    return report("budget", str(exc))
                except ProxEstimationError as exc:
                    x, fx = x_new, f_new
                    return report("error", str(exc))
                refined = True
            delta = delta_new

        step = float(np.linalg.norm(x_new - x))
        q = step / t
        t = t_update(q, q_prev, t, params)
        q_prev = q
        x, fx = x_new, f_new
        history.append(fx)
        trace.append(_record(k + 1, x, fx, t, delta, q, budget.used, h=mesh.h, tt_rank=psi.max_rank,
                             delta_halved=halved, mesh_refined=refined))
        if _on_target(x, x_star, target_tol):
            termination = "target"
            break
        if step < params.eps_stop:
            termination = "eps_stop"
            break
        if budget.remaining <= 0:
            termination = "budget"
            break
    return report(termination)


# --- MC-IPP -------------------------------------------------------------------

def mc_ipp(f, params: IPPParams | None = None, rng=None, x0=None, *,
           x_star=None, target_tol: float | None = None) -> RunReport:
    """Monte Carlo inexact proximal point method on R^d."""
    params = params or IPPParams.mc()
    params.validate("mc")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    d = f.dim
    budget = _Budget(f, params.max_evals)
    n0 = params.N0 if params.N0 is not None else 40 * d
    box = np.full(d, params.init_box)

    delta, t, alpha, N = params.delta0, params.t0, params.alpha0, float(n0)
    trace: list[IterRecord] = []
    x = np.asarray(x0, dtype=float) if x0 is not None else np.zeros(d)
    fx = math.nan

    def report(termination, message=""):
        return RunReport(np.asarray(x, dtype=float), float(fx), trace, termination, budget.used, seed, "mc-ipp",
                         params.to_dict(), message)

    try:
        if params.warm_start and x0 is None:
            n_ws = int(min(n0, budget.remaining - 1)) if budget.max_evals else n0
            if n_ws >= 1:
                x = _mc_warm_start(budget, params.delta0, n_ws, -box, box, rng)
        fx = float(budget(x))
    except BudgetExhausted as exc:
        return report("budget", str(exc))
    history = [fx]
    q_prev = None
    trace.append(_record(0, x, fx, t, delta, None, budget.used, N=int(math.ceil(N)), alpha=alpha))
    termination = "k_max"

    for k in range(params.k_max):
        n_k = int(math.ceil(N))
        if budget.remaining < 2:
            termination = "budget"
            break
        rejected = 0
        while True:
            n_draw = int(min(n_k, budget.remaining - 1))
            est = prox_mc(budget, ProxQuery(x, t, delta), n_draw, rng)
            y = ewma_combine(est.point, x, alpha)
            fy = float(budget(y))
            window = history[-params.m:]
            insufficient = decrease_check(fy, window, k, params.eta, params.m)
            if (insufficient and fy >= max(window) and rejected < params.max_rejections
                    and budget.remaining >= 2 and rng.random() < params.p_reject):
                rejected += 1
                continue
            break
        if insufficient:
            delta = max(params.c_decay * delta, params.delta_floor)
            alpha = max(params.alpha_min, params.c_decay * alpha)
            N = params.C_growth * N
        else:
            alpha = min(alpha / params.c_decay, params.alpha_max)

        step = float(np.linalg.norm(y - x))
        q = step / t
        t = t_update(q, q_prev, t, params)
        q_prev = q
        x, fx = y, fy
        history.append(fx)
        trace.append(_record(k + 1, x, fx, t, delta, q, budget.used, N=int(math.ceil(N)), alpha=alpha,
                             rejected_count=rejected))
        if _on_target(x, x_star, target_tol):
            termination = "target"
            break
        if step < params.eps_stop:
            termination = "eps_stop"
            break
    else:
        termination = "k_max"
    if termination == "k_max" and budget.remaining < 2:
        termination = "budget"
    return report(termination)


# --- baseline -----------------------------------------------------------------

def random_search(f, max_evals: int, rng=None, lower=None, upper=None, batch: int = 1000) -> RunReport:
    """Pure random search: uniform samples on the box, keep the best."""
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    lower = np.asarray(f.lower if lower is None else lower, dtype=float)
    upper = np.asarray(f.upper if upper is None else upper, dtype=float)
    best_x, best_f, used = None, math.inf, 0
    trace = []
    while used < max_evals:
        n = min(batch, max_evals - used)
        pts = rng.uniform(lower, upper, size=(n, lower.size))
        vals = np.asarray(f(pts), dtype=float)
        used += n
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_x, best_f = pts[j], float(vals[j])
        trace.append(_record(len(trace), best_x, best_f, 0.0, 0.0, None, used))
    return RunReport(best_x, best_f, trace, "budget", used, seed, "prs-baseline", {"max_evals": max_evals})
