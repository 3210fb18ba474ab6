"""Gibbs-mean estimates of the proximal operator.

``prox_tf(x) = argmin_z f(z) + |z - x|^2 / (2t)`` is approximated by the mean
of the density proportional to ``exp(-(f(z) + |z - x|^2/(2t)) / delta)``.
Sampling ``z`` from ``N(x, t delta I)`` absorbs the quadratic term, leaving
self-normalized weights ``exp(-f(z)/delta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProxQuery",
    "ProxEstimate",
    "prox_mc",
    "ewma_combine",
    "sample_size_hint",
    "gibbs_mean_dense",
    "prox_dense",
]


@dataclass(frozen=True)
class ProxQuery:
    x: np.ndarray
    t: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class ProxEstimate:
    point: np.ndarray
    effective_sample_size: float
    log_normalizer: float


def prox_mc(f, q: ProxQuery, n_samples: int, rng) -> ProxEstimate:
    """Self-normalized Monte Carlo estimate of the Gibbs mean.

    Uses exactly ``n_samples`` evaluations of ``f``. Weights are shifted by
    the smallest sampled value, so the largest weight is 1 and the sum never
    underflows.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(rng)
    x = q.x
    z = x + math.sqrt(q.delta * q.t) * rng.standard_normal((int(n_samples), x.size))
    fz = np.asarray(f(z), dtype=float).reshape(-1)
    bad = ~np.isfinite(fz)
    if bad.any():
        raise FloatingPointError(f"objective returned {fz[bad][0]} at sample point {z[bad][0].tolist()}")
    c = fz.min()
    w = np.exp(-(fz - c) / q.delta)
    sw = w.sum()
    point = (w @ z) / sw
    ess = sw**2 / np.dot(w, w)
    return ProxEstimate(point, float(ess), float(np.log(sw) - c / q.delta))


def ewma_combine(est, x_prev, alpha: float):
    """``alpha * est + (1 - alpha) * x_prev``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha * np.asarray(est, dtype=float) + (1.0 - alpha) * np.asarray(x_prev, dtype=float)


def sample_size_hint(delta: float, alpha: float, scale: float = 1.0) -> int:
    """Advisory sample size ``ceil(scale * delta^{-1/2} * alpha / (2 - alpha))``."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    # round away float noise before ceil, e.g. 10 * 10 * (0.2/1.8) = 11.1111...
    return max(1, math.ceil(round(scale * delta**-0.5 * alpha / (2.0 - alpha), 9)))


def _grid(center, half_width, n_nodes):
    axes = [np.linspace(c - half_width, c + half_width, n_nodes) for c in np.atleast_1d(center)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def gibbs_mean_dense(f, x, t: float, delta: float, n_nodes: int | None = None, half_width: float | None = None):
    """Gibbs mean by tensor-product trapezoid on ``x +- half_width`` (d <= 3).

    Defaults: ``half_width = 6 sqrt(t delta)``; ``n_nodes`` per axis is
    20001 in 1-D, 1001 in 2-D and 151 in 3-D.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    if d > 3:
        raise ValueError(f"dense quadrature is limited to d <= 3, got d={d}")
    if half_width is None:
        half_width = 6.0 * math.sqrt(t * delta)
    if n_nodes is None:
        n_nodes = {1: 20001, 2: 1001, 3: 151}[d]
    axes, pts = _grid(x, half_width, n_nodes)
    phi = np.asarray(f(pts), dtype=float) + np.sum((pts - x) ** 2, axis=1) / (2.0 * t)
    w = np.exp(-(phi - phi.min()) / delta).reshape((n_nodes,) * d)
    tw = [np.full(n_nodes, a[1] - a[0]) for a in axes]
    for v in tw:
        v[[0, -1]] *= 0.5
    for j in range(d):
        shape = [1] * d
        shape[j] = n_nodes
        w = w * tw[j].reshape(shape)
    total = w.sum()
    grids = np.meshgrid(*axes, indexing="ij")
    return np.array([np.sum(w * g) / total for g in grids])


def prox_dense(f, x, t: float, half_width: float = 4.0, n_nodes: int | None = None):
    """Exact prox point (d <= 3): grid argmin of ``f + |z-x|^2/(2t)`` plus a Nelder-Mead polish."""
    from scipy.optimize import minimize

    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    if d > 3:
        raise ValueError(f"dense prox reference is limited to d <= 3, got d={d}")
    if n_nodes is None:
        n_nodes = {1: 200001, 2: 1001, 3: 151}[d]
    _, pts = _grid(x, half_width, n_nodes)

    def phi(z):
        z = np.atleast_2d(z)
        return np.asarray(f(z), dtype=float) + np.sum((z - x) ** 2, axis=1) / (2.0 * t)

    z0 = pts[np.argmin(phi(pts))]
    res = minimize(lambda z: float(phi(z)[0]), z0, method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    return res.x if res.fun <= float(phi(z0)[0]) else z0
