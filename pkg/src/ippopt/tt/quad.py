"""Trapezoidal quadrature of tensor trains against a separable Gaussian.

The prox estimate is a ratio of two integrals of ``psi(z) exp(-|z-x|^2/(2 t delta))``.
Both are computed as chained products of per-mode ``r x r`` matrices; the
chains are renormalized step by step, so the common scale of ``psi`` and of
the Gaussian cancels without ever being formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TensorTrain

__all__ = [
    "MeshGrid",
    "ProxEstimationError",
    "gaussian_factors",
    "tt_integrate",
    "tt_prox",
    "tt_mean",
]


class ProxEstimationError(ArithmeticError):
    """Raised when the quadrature normalizer is not a usable positive number."""


@dataclass(frozen=True)
class MeshGrid:
    """Uniform tensor mesh on a box with trapezoidal weights."""

    lower: np.ndarray
    upper: np.ndarray
    h: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("mesh box needs lower < upper in every dimension")
        if not self.h > 0:
            raise ValueError(f"mesh size must be positive, got {self.h}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(int(round((hi - lo) / self.h)) + 1 for lo, hi in zip(self.lower, self.upper))

    @property
    def nodes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.mode_sizes)]

    @property
    def weights(self) -> list[np.ndarray]:
        out = []
        for z in self.nodes:
            w = np.full(z.size, z[1] - z[0] if z.size > 1 else 1.0)
            if z.size > 1:
                w[0] *= 0.5
                w[-1] *= 0.5
            out.append(w)
        return out

    def points(self, idx) -> np.ndarray:
        """Coordinates of multi-indices ``(m, d)``."""
        idx = np.atleast_2d(idx)
        nodes = self.nodes
        return np.stack([nodes[j][idx[:, j]] for j in range(self.d)], axis=1)

    def nearest_index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.asarray(self.mode_sizes)
        return np.clip(np.rint((x - self.lower) / self.h).astype(np.int64), 0, n - 1)

    def refine(self, factor: int) -> "MeshGrid":
        """Mesh with ``h / factor``; old nodes keep index ``factor * i``."""
        return MeshGrid(self.lower, self.upper, self.h / factor)

    def refine_window(self, center, factor: int, lower=None, upper=None) -> "MeshGrid":
        """Mesh with ``h / factor`` and the same mode sizes, placed around ``center``.

        The window is anchored at the node nearest to ``center`` and shifted
        back inside ``[lower, upper]`` (default: this mesh's box), so its
        nodes stay on the finer lattice and cached values remain reusable.
        """
        lo_dom = self.lower if lower is None else np.asarray(lower, dtype=float)
        hi_dom = self.upper if upper is None else np.asarray(upper, dtype=float)
        h = self.h / factor
        span = (np.asarray(self.mode_sizes) - 1) * h
        anchor = self.points(self.nearest_index(center)[None, :])[0]
        lo = np.maximum(np.minimum(anchor - 0.5 * span, hi_dom - span), lo_dom)
        return MeshGrid(lo, lo + span, h)


def gaussian_factors(mesh: MeshGrid, x, t: float, delta: float, normalize: bool = False):
    """Per-mode vectors ``u_j(k) = exp(-(z_jk - x_j)^2 / (2 t delta))``.

    With ``normalize=True`` each vector is divided by its largest entry and
    the total log of the removed factors is returned as well.
    """
    x = np.asarray(x, dtype=float)
    s = 2.0 * t * delta
    out, log_scale = [], 0.0
    for z, xj in zip(mesh.nodes, x):
        e = (z - xj) ** 2 / s
        if normalize:
            m = e.min()
            log_scale -= m
            e = e - m
        out.append(np.exp(-e))
    return (out, log_scale) if normalize else out


def _mode_sums(tt, mesh, factors, with_moment):
    weights = mesh.weights
    nodes = mesh.nodes
    sums, moments = [], []
    for j, core in enumerate(tt.cores):
        lw = factors[j] * weights[j]
        sums.append(np.einsum("aib,i->ab", core, lw))
        if with_moment:
            moments.append(np.einsum("aib,i->ab", core, lw * nodes[j]))
    return sums, moments


def _check_mesh(tt, mesh):
    if tt.mode_sizes != mesh.mode_sizes:
        raise ValueError(f"tensor mode sizes {tt.mode_sizes} do not match mesh {mesh.mode_sizes}")


def tt_integrate(tt: TensorTrain, mesh: MeshGrid, x, t: float, delta: float) -> float:
    """Trapezoidal approximation of ``int psi(z) exp(-|z - x|^2 / (2 t delta)) dz``."""
    _check_mesh(tt, mesh)
    factors, log_scale = gaussian_factors(mesh, x, t, delta, normalize=True)
    sums, _ = _mode_sums(tt, mesh, factors, with_moment=False)
    v = np.ones((1, 1))
    for s in sums:
        v = v @ s
        nrm = np.abs(v).max()
        if not np.isfinite(nrm):
            raise ProxEstimationError("non-finite partial product; refresh the shift of psi")
        if nrm > 0:
            v /= nrm
            log_scale += np.log(nrm)
        else:
            return 0.0
    value = float(v[0, 0])
    out = np.sign(value) * np.exp(np.log(abs(value)) + log_scale) if value != 0 else 0.0
    if not np.isfinite(out):
        raise ProxEstimationError("quadrature overflowed; refresh the shift of psi")
    return float(out)


def _ratio(tt, mesh, factors):
    sums, moments = _mode_sums(tt, mesh, factors, with_moment=True)
    d = tt.d
    left = [np.ones((1, 1))]
    for s in sums[:-1]:
        v = left[-1] @ s
        nrm = np.abs(v).max()
        left.append(v / nrm if nrm > 0 else v)
    right = [np.ones((1, 1))]
    for s in sums[:0:-1]:
        v = s @ right[-1]
        nrm = np.abs(v).max()
        right.append(v / nrm if nrm > 0 else v)
    right = right[::-1]
    out = np.empty(d)
    for j in range(d):
        den = (left[j] @ sums[j] @ right[j]).item()
        num = (left[j] @ moments[j] @ right[j]).item()
        scale = float(np.abs(left[j]).sum() * np.abs(sums[j]).sum() * np.abs(right[j]).sum())
        if not np.isfinite(den) or den <= 1e-300 or den <= 1e-14 * scale:
            raise ProxEstimationError(
                f"quadrature normalizer vanished in mode {j} (den={den:.3e}); "
                "refine the mesh, enlarge delta or refresh the shift of psi"
            )
        out[j] = num / den
    return out


def tt_prox(psi_tt: TensorTrain, mesh: MeshGrid, x, t: float, delta: float) -> np.ndarray:
    """Gibbs-mean prox estimate from a TT of ``psi = exp(-(f - c)/delta)`` on ``mesh``."""
    _check_mesh(psi_tt, mesh)
    factors, _ = gaussian_factors(mesh, x, t, delta, normalize=True)
    return _ratio(psi_tt, mesh, factors)


def tt_mean(psi_tt: TensorTrain, mesh: MeshGrid) -> np.ndarray:
    """Mean of the density proportional to ``psi`` on the mesh box (no Gaussian factor)."""
    _check_mesh(psi_tt, mesh)
    factors = [np.ones(n) for n in mesh.mode_sizes]
    return _ratio(psi_tt, mesh, factors)
