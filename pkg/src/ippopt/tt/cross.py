"""Randomized TT cross approximation of black-box tensors.

Alternates right-to-left and left-to-right sweeps. Each sweep samples the
fibers ``A(I_k, :, J_{k+1})`` of the unfolding matrices, takes a truncated
SVD basis of the fiber matrix and picks interpolation rows with maxvol, so
every core satisfies the skeleton formula ``A ~ A(:, J) A(I, J)^{-1} A(I, :)``.
Between sweeps the index sets are extended with random multi-indices, which
is how the ranks grow.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, qr, solve_triangular

from .core import TensorTrain, tt_norm

log = logging.getLogger(__name__)

__all__ = ["EntryOracle", "RankConfig", "CrossInfo", "tt_cross", "maxvol", "CrossWarning"]


class CrossWarning(UserWarning):
    pass


class EntryOracle:
    """Cached black-box tensor ``(m, d) int multi-indices -> (m,) values``.

    ``calls`` counts distinct multi-indices passed to ``func``; repeated
    requests are served from the cache.
    """

    def __init__(self, func, mode_sizes, cache: bool = True):
        self.func = func
        self.mode_sizes = tuple(int(n) for n in mode_sizes)
        self.calls = 0
        self._cache: dict[bytes, float] | None = {} if cache else None

    def __call__(self, idx) -> np.ndarray:
        idx = np.ascontiguousarray(np.atleast_2d(idx), dtype=np.int64)
        if self._cache is None:
            self.calls += idx.shape[0]
            return np.asarray(self.func(idx), dtype=float)
        out = np.empty(idx.shape[0])
        keys = [row.tobytes() for row in idx]
        todo: dict[bytes, list[int]] = {}
        for p, k in enumerate(keys):
            v = self._cache.get(k)
            if v is None:
                todo.setdefault(k, []).append(p)
            else:
                out[p] = v
        if todo:
            rows = np.array([positions[0] for positions in todo.values()])
            vals = np.asarray(self.func(idx[rows]), dtype=float)
            self.calls += len(rows)
            for (k, positions), v in zip(todo.items(), vals):
                self._cache[k] = float(v)
                out[positions] = v
        return out


@dataclass
class RankConfig:
    r_init: int = 2
    kick: int = 2
    r_max: int = 20


@dataclass
class CrossInfo:
    converged: bool
    sweeps: int
    calls: int
    rel_change: float
    rank_capped: bool
    left_sets: list = field(default_factory=list, repr=False)
    right_sets: list = field(default_factory=list, repr=False)


def maxvol(a, tol: float = 1.01, max_iters: int = 100) -> np.ndarray:
    """Rows of a tall ``m x r`` matrix spanning a quasi-maximal-volume submatrix.

    Seeds with the pivots of a row-pivoted LU, then swaps single rows while
    some coefficient of ``a @ inv(a[piv])`` exceeds ``tol`` in modulus.
    """
    a = np.asarray(a, dtype=float)
    m, r = a.shape
    if m <= r:
        return np.arange(m)
    _, ipiv = lu_factor(a, check_finite=False)
    perm = np.arange(m)
    for i, p in enumerate(ipiv[:r]):
        perm[i], perm[p] = perm[p], perm[i]
    piv = perm[:r].copy()
    b = _interp_matrix(a, piv)
    for _ in range(max_iters):
        i, j = np.unravel_index(np.argmax(np.abs(b)), b.shape)
        if abs(b[i, j]) <= tol:
            break
        piv[j] = i
        # rank-1 update of a @ inv(a[piv]) after replacing pivot row j by row i
        bj = b[:, j].copy()
        row = b[i, :].copy()
        row[j] -= 1.0
        b -= np.outer(bj, row) / bj[i]
    return piv


def _interp_matrix(a, piv):
    """``a @ inv(a[piv])`` with a guarded solve of the pivot block."""
    block = a[piv]
    q, rr, perm = qr(block.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(rr))
    if diag.size and (diag[-1] == 0.0 or diag[0] / diag[-1] > 1e14):
        block = block + 1e-14 * np.linalg.norm(block) * np.eye(block.shape[0])
        q, rr, perm = qr(block.T, pivoting=True, mode="economic")
        diag = np.abs(np.diag(rr))
        if diag[-1] == 0.0:
            raise np.linalg.LinAlgError("singular pivot block in cross approximation")
    # block.T[:, perm] = q rr  =>  x block = a  solved as block.T x.T = a.T
    y = q.T @ a.T
    z = solve_triangular(rr, y)
    x_t = np.empty_like(z)
    x_t[perm] = z
    return x_t.T


def _basis(c, rank_tol, r_max):
    u, s, _ = np.linalg.svd(c, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :1]
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
    keep = np.nonzero(tail > rank_tol * tail[0])[0]
    r = int(keep[-1]) + 1 if keep.size else 1
    return u[:, : max(1, min(r, r_max))]


def _fiber_indices(left, k, n, right):
    """All multi-indices ``(left[a], i, right[b])`` as an ``(ra*n*rb, d)`` array."""
    ra, rb = left.shape[0], right.shape[0]
    d = left.shape[1] + 1 + right.shape[1]
    idx = np.empty((ra, n, rb, d), dtype=np.int64)
    idx[..., :k] = left[:, None, None, :]
    idx[..., k] = np.arange(n)[None, :, None]
    idx[..., k + 1:] = right[None, None, :, :]
    return idx.reshape(-1, d)


def _unique_rows(a):
    if a.shape[0] == 0:
        return a
    _, first = np.unique(a, axis=0, return_index=True)
    return a[np.sort(first)]


def _sweep_lr(oracle, n, right, rank_tol, r_max):
    d = len(n)
    left = [np.zeros((1, 0), dtype=np.int64)]
    cores = []
    for k in range(d - 1):
        ra, rb = left[k].shape[0], right[k + 1].shape[0]
        vals = oracle(_fiber_indices(left[k], k, n[k], right[k + 1]))
        c = vals.reshape(ra * n[k], rb)
        u = _basis(c, rank_tol, r_max)
        piv = maxvol(u)
        cores.append(_interp_matrix(u, piv).reshape(ra, n[k], -1))
        a, i = np.divmod(piv, n[k])
        left.append(np.hstack([left[k][a], i[:, None]]))
    ra = left[d - 1].shape[0]
    vals = oracle(_fiber_indices(left[d - 1], d - 1, n[d - 1], np.zeros((1, 0), dtype=np.int64)))
    cores.append(vals.reshape(ra, n[d - 1], 1))
    return TensorTrain(cores), left


def _sweep_rl(oracle, n, left, rank_tol, r_max):
    d = len(n)
    right = [None] * (d + 1)
    right[d] = np.zeros((1, 0), dtype=np.int64)
    cores = [None] * d
    for k in range(d - 1, 0, -1):
        ra, rb = left[k].shape[0], right[k + 1].shape[0]
        vals = oracle(_fiber_indices(left[k], k, n[k], right[k + 1]))
        c = vals.reshape(ra, n[k] * rb).T
        u = _basis(c, rank_tol, r_max)
        piv = maxvol(u)
        cores[k] = _interp_matrix(u, piv).T.reshape(-1, n[k], rb)
        i, b = np.divmod(piv, rb)
        right[k] = np.hstack([i[:, None], right[k + 1][b]])
    rb = right[1].shape[0]
    vals = oracle(_fiber_indices(np.zeros((1, 0), dtype=np.int64), 0, n[0], right[1]))
    cores[0] = vals.reshape(1, n[0], rb)
    return TensorTrain(cores), right


def _random_left(rng, n, k, size):
    return np.stack([rng.integers(0, n[j], size=size) for j in range(k)], axis=1).astype(np.int64) \
        if k else np.zeros((size, 0), dtype=np.int64)


def _random_right(rng, n, k, size):
    d = len(n)
    cols = [rng.integers(0, n[j], size=size) for j in range(k, d)]
    return np.stack(cols, axis=1).astype(np.int64) if cols else np.zeros((size, 0), dtype=np.int64)


def tt_cross(
    oracle: EntryOracle,
    mode_sizes,
    tau_stop: float = 1e-4,
    rank_cfg: RankConfig | None = None,
    rng=None,
    max_sweeps: int = 12,
    rank_tol: float | None = None,
    seed_indices=None,
) -> TensorTrain:
    """Cross-approximate the tensor behind ``oracle``.

    Parameters
    ----------
    oracle : EntryOracle
        Black-box entries.
    mode_sizes : sequence of int
    tau_stop : float
        Stop once two consecutive sweeps differ by less than
        ``tau_stop * ||G||_F``.
    rank_cfg : RankConfig
        Initial rank, random multi-indices added per sweep, rank cap.
    rng : seed or Generator
    max_sweeps : int
        Hard cap on right-to-left/left-to-right sweep pairs.
    rank_tol : float, optional
        Relative singular-value cutoff inside each sweep; defaults to
        ``tau_stop``.
    seed_indices : array_like, optional
        Multi-indices (e.g. the best points of a probe) whose suffixes are
        placed in the initial column sets.

    Returns
    -------
    TensorTrain
        With a :class:`CrossInfo` attached as ``.info``.
    """
    if not tau_stop > 0:
        raise ValueError(f"tau_stop must be positive, got {tau_stop}")
    cfg = rank_cfg or RankConfig()
    rng = np.random.default_rng(rng)
    n = tuple(int(v) for v in mode_sizes)
    d = len(n)
    rank_tol = tau_stop if rank_tol is None else rank_tol
    calls0 = oracle.calls

    if d == 1:
        vals = oracle(np.arange(n[0])[:, None])
        tt = TensorTrain([vals.reshape(1, n[0], 1)])
        tt.info = CrossInfo(True, 0, oracle.calls - calls0, 0.0, False)
        return tt

    seeds = None if seed_indices is None else np.asarray(seed_indices, dtype=np.int64).reshape(-1, d)
    right = [None] * (d + 1)
    right[d] = np.zeros((1, 0), dtype=np.int64)
    for k in range(1, d):
        parts = []
        if seeds is not None:
            parts.append(seeds[:, k:])
        parts.append(_random_right(rng, n, k, cfg.r_init))
        right[k] = _unique_rows(np.vstack(parts))

    g, left = _sweep_lr(oracle, n, right, rank_tol, cfg.r_max)
    converged = False
    capped_sweeps = 0
    rel = np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        ext_left = [left[0]] + [
            _unique_rows(np.vstack([left[k], _random_left(rng, n, k, cfg.kick)])) for k in range(1, d)
        ]
        h, right = _sweep_rl(oracle, n, ext_left, rank_tol, cfg.r_max)
        ext_right = [None] + [
            _unique_rows(np.vstack([right[k], _random_right(rng, n, k, cfg.kick)])) for k in range(1, d)
        ] + [right[d]]
        g, left = _sweep_lr(oracle, n, ext_right, rank_tol, cfg.r_max)
        gnorm = tt_norm(g)
        rel = tt_norm(h - g) / gnorm if gnorm > 0 else 0.0
        log.debug("cross sweep %d: ranks=%s rel_change=%.3e calls=%d", sweeps, g.ranks, rel, oracle.calls - calls0)
        if rel < tau_stop:
            converged = True
            break
        if g.max_rank >= cfg.r_max:
            capped_sweeps += 1
            if capped_sweeps >= 2:
                break

    capped = not converged and g.max_rank >= cfg.r_max
    if not converged:
        warnings.warn(
            f"TT cross stopped without meeting tau_stop={tau_stop:g} (rel change {rel:.2e}, ranks {g.ranks})",
            CrossWarning,
            stacklevel=2,
        )
    g.info = CrossInfo(converged, sweeps, oracle.calls - calls0, float(rel), capped, left, right)
    return g
