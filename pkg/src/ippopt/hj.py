"""Hopf-Lax solutions of ``u_t + H(grad u) = 0, u(x, 0) = f(x)``.

For ``H(v) = ||v||_p^p / p`` the solution is the inf-convolution

    u(x, t) = min_y f(y) + t H*((y - x) / t),   H*(w) = ||w||_q^q / q,

with ``1/p + 1/q = 1``. Each value of ``u`` is one global minimization, done
here by an IPP driver followed by a local polish. The residual
``|u_t + H(grad u)|`` is estimated by central differences of these values.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .benchfns import Objective
from .ipp import IPPParams, mc_ipp, tt_ipp

__all__ = [
    "HJProblem",
    "HJSample",
    "HJError",
    "hamiltonian_value",
    "conjugate_value",
    "hopf_lax",
    "residual",
    "solve_with_residual",
    "sqrt_abs_sum",
    "shifted_sine_sum",
]

TT_MAX_DIM = 16


class HJError(RuntimeError):
    """An inner minimization failed; the message names the ``(x, t)`` sample."""


def hamiltonian_value(v, p: float) -> float:
    """``sum |v_i|^p / p``."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    v = np.asarray(v, dtype=float)
    return float(np.sum(np.abs(v) ** p, axis=-1) / p)


def conjugate_value(v, q: float):
    """``sum |v_i|^q / q``; works row-wise on a batch ``(n, d)``."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    v = np.asarray(v, dtype=float)
    out = np.sum(np.abs(v) ** q, axis=-1) / q
    return float(out) if np.ndim(out) == 0 else out


def sqrt_abs_sum(x):
    """``sum sqrt|x_i|``: nonsmooth initial condition, minimum 0 at the origin."""
    x = np.atleast_2d(x)
    return np.sum(np.sqrt(np.abs(x)), axis=1)


def shifted_sine_sum(x):
    """``sum (sin(pi x_i) + 1)``: smooth, nonconvex, minimum 0 on a lattice."""
    x = np.atleast_2d(x)
    return np.sum(np.sin(np.pi * x) + 1.0, axis=1)


@dataclass
class HJProblem:
    """Initial condition ``f`` (batch callable), Hamiltonian exponent ``p`` and solver settings.

    ``q`` defaults to the conjugate exponent ``p / (p - 1)``. ``solver`` is
    ``"tt"`` or ``"mc"``; by default TT-IPP is used up to dimension 16.
    ``fd_global=True`` re-runs the global solver at every difference
    stencil point instead of continuing from the central minimizer.
    """

    f: object
    dim: int
    p: float = 2.0
    q: float | None = None
    inner: IPPParams | None = None
    fd_step: float = 1e-3
    seed: int = 0
    solver: str | None = None
    box: float = 5.0
    polish: bool = True
    fd_global: bool = False
    polish_options: dict = field(default_factory=lambda: {"xatol": 1e-11, "fatol": 1e-15})

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.q is None:
            self.q = self.p / (self.p - 1.0)
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > 1e-12:
            raise ValueError(f"p={self.p} and q={self.q} are not conjugate exponents")
        if not self.fd_step > 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")
        if self.solver is None:
            self.solver = "tt" if self.dim <= TT_MAX_DIM else "mc"
        if self.solver not in ("tt", "mc"):
            raise ValueError(f"solver must be 'tt' or 'mc', got {self.solver!r}")
        if self.inner is None:
            self.inner = IPPParams.tt() if self.solver == "tt" else IPPParams.mc(max_evals=20000)


@dataclass
class HJSample:
    x: np.ndarray
    t: float
    u_tilde: float
    y_tilde: np.ndarray
    residual: float = math.nan


def _sample_seed(x, t, seed) -> int:
    """Deterministic 64-bit seed from the sample coordinates and the master seed."""
    payload = np.concatenate([np.asarray(x, dtype=float).ravel(), [float(t)]]).tobytes()
    digest = hashlib.blake2b(payload + int(seed).to_bytes(8, "little", signed=True), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _inner_value_fn(prob: HJProblem, x, t):
    x = np.asarray(x, dtype=float)

    def g(y):
        y = np.atleast_2d(y)
        return np.asarray(prob.f(y), dtype=float).reshape(-1) + t * conjugate_value((y - x) / t, prob.q)

    return g


def _polish(g, y0, options):
    y0 = np.asarray(y0, dtype=float)
    best_y, best_v = y0, float(g(y0)[0])
    start = y0
    # one restart: the simplex often stalls on a kink before the first exit
    for _ in range(2):
        res = minimize(lambda y: float(g(y)[0]), start, method="Nelder-Mead",
                       options={**options, "maxfev": 2000 * y0.size, "adaptive": y0.size > 2})
        if res.fun < best_v:
            best_y, best_v = np.asarray(res.x, dtype=float), float(res.fun)
        start = best_y
    return best_y, best_v


def _global_minimizer(prob: HJProblem, g, x, t):
    d = prob.dim
    lo, hi = np.full(d, -prob.box), np.full(d, prob.box)
    obj = Objective("hopf-lax-inner", d, g, lo, hi)
    rng = _sample_seed(x, t, prob.seed)
    try:
        if prob.solver == "tt":
            report = tt_ipp(obj, prob.inner, rng=rng)
        else:
            report = mc_ipp(obj, prob.inner, rng=rng)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        raise HJError(f"inner {prob.solver}-ipp failed at x={np.asarray(x).tolist()}, t={t}: {exc}") from exc
    if report.termination == "error" or not np.all(np.isfinite(report.x)):
        raise HJError(f"inner {prob.solver}-ipp failed at x={np.asarray(x).tolist()}, t={t}: {report.message}")
    # the driver's final iterate is not always its best one
    best = min(report.trace, key=lambda r: r.f_x)
    return np.asarray(best.x, dtype=float)


def hopf_lax(prob: HJProblem, x, t: float, starts=None, global_solve: bool = True) -> HJSample:
    """Approximate ``u(x, t)`` and its minimizer ``y``.

    ``starts`` are extra candidate minimizers (e.g. from a neighbouring
    sample); the smallest polished value among all candidates wins.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != prob.dim:
        raise ValueError(f"x has dimension {x.size}, problem has {prob.dim}")
    g = _inner_value_fn(prob, x, t)
    candidates = [np.asarray(s, dtype=float) for s in (starts or [])]
    if global_solve or not candidates:
        candidates.insert(0, _global_minimizer(prob, g, x, t))
    best_y, best_v = None, math.inf
    for y0 in candidates:
        if prob.polish:
            y, v = _polish(g, y0, prob.polish_options)
        else:
            y, v = y0, float(g(y0)[0])
        if v < best_v:
            best_y, best_v = y, v
    # assemble exactly as evaluated: f(y) + t H*((y - x)/t)
    u = float(np.asarray(prob.f(best_y[None, :]), dtype=float).reshape(-1)[0]) + t * conjugate_value(
        (best_y - x) / t, prob.q)
    return HJSample(x, float(t), u, best_y)


def solve_with_residual(prob: HJProblem, x, t: float) -> HJSample:
    """``hopf_lax`` at ``(x, t)`` plus the central-difference residual ``|u_t + H(grad u)|``."""
    h = prob.fd_step
    if not t > h:
        raise ValueError(f"t={t} must exceed fd_step={h}")
    x = np.asarray(x, dtype=float).reshape(-1)
    center = hopf_lax(prob, x, t)

    def value(xs, ts, shift):
        # continue from the central minimizer, moved with the sample
        starts = [center.y_tilde + shift, center.y_tilde]
        return hopf_lax(prob, xs, ts, starts=starts, global_solve=prob.fd_global).u_tilde

    u_t = (value(x, t + h, 0.0) - value(x, t - h, 0.0)) / (2.0 * h)
    grad = np.empty(prob.dim)
    for i in range(prob.dim):
        e = np.zeros(prob.dim)
        e[i] = h
        grad[i] = (value(x + e, t, e) - value(x - e, t, -e)) / (2.0 * h)
    center.residual = abs(u_t + hamiltonian_value(grad, prob.p))
    return center


def residual(prob: HJProblem, x, t: float) -> float:
    """Central-difference residual ``|u_t + H(grad u)|`` at ``(x, t)``."""
    return solve_with_residual(prob, x, t).residual
