"""Tensor-train container and algebra."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class TensorTrain:
    """A d-way tensor stored as a chain of 3-axis cores.

    Core ``j`` has shape ``(r_{j-1}, n_j, r_j)`` with ``r_0 = r_d = 1``; the
    entry at ``(i_1, ..., i_d)`` is the 1x1 matrix product
    ``G_1[:, i_1, :] @ ... @ G_d[:, i_d, :]``.
    """

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for j, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {j} must be 3-dimensional, got shape {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for j in range(len(cores) - 1):
            if cores[j].shape[2] != cores[j + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {j} and {j + 1}: {cores[j].shape} vs {cores[j + 1].shape}"
                )
        self.cores = cores
        self.info = None

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def __repr__(self):
        return f"TensorTrain(d={self.d}, n={self.mode_sizes}, ranks={self.ranks})"

    def copy(self) -> "TensorTrain":
        return TensorTrain([c.copy() for c in self.cores])

    def __mul__(self, alpha: float) -> "TensorTrain":
        cores = [c.copy() for c in self.cores]
        cores[0] = cores[0] * alpha
        return TensorTrain(cores)

    __rmul__ = __mul__

    def __add__(self, other: "TensorTrain") -> "TensorTrain":
        return tt_add(self, other)

    def __sub__(self, other: "TensorTrain") -> "TensorTrain":
        return tt_add(self, other * -1.0)

    def __getitem__(self, idx):
        return tt_eval(self, idx)

    def full(self) -> np.ndarray:
        """Dense reconstruction; only for small tensors."""
        out = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for c in self.cores[1:]:
            out = (out @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
        return out.reshape(self.mode_sizes)


def ones(mode_sizes) -> TensorTrain:
    return TensorTrain([np.ones((1, n, 1)) for n in mode_sizes])


def rank1(vectors) -> TensorTrain:
    """Outer product of one vector per mode."""
    return TensorTrain([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])


def random_tt(mode_sizes, rank, rng=None) -> TensorTrain:
    rng = np.random.default_rng(rng)
    d = len(mode_sizes)
    r = [1] + [rank] * (d - 1) + [1] if np.isscalar(rank) else list(rank)
    return TensorTrain([rng.standard_normal((r[j], n, r[j + 1])) for j, n in enumerate(mode_sizes)])


def tt_eval(tt: TensorTrain, idx) -> float | np.ndarray:
    """Entries at one multi-index ``(d,)`` or a batch ``(m, d)``."""
    idx = np.asarray(idx)
    single = idx.ndim == 1
    idx = np.atleast_2d(idx)
    if idx.shape[1] != tt.d:
        raise IndexError(f"multi-index has {idx.shape[1]} entries, tensor has {tt.d} modes")
    n = np.asarray(tt.mode_sizes)
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"multi-index out of range for mode sizes {tt.mode_sizes}")
    v = tt.cores[0][0, idx[:, 0], :]
    for j in range(1, tt.d):
        v = np.einsum("mr,rms->ms", v, tt.cores[j][:, idx[:, j], :])
    out = v[:, 0]
    return float(out[0]) if single else out


def tt_add(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Entrywise sum; ranks add."""
    if a.mode_sizes != b.mode_sizes:
        raise ValueError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")
    d = a.d
    if d == 1:
        return TensorTrain([a.cores[0] + b.cores[0]])
    cores = []
    for j, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra0, n, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        if j == 0:
            c = np.concatenate([ca, cb], axis=2)
        elif j == d - 1:
            c = np.concatenate([ca, cb], axis=0)
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = ca
            c[ra0:, :, ra1:] = cb
        cores.append(c)
    return TensorTrain(cores)


def tt_hadamard(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Entrywise product via slice-wise Kronecker products; ranks multiply."""
    if a.mode_sizes != b.mode_sizes:
        raise ValueError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        ra0, n, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        c = np.einsum("aib,cid->acibd", ca, cb).reshape(ra0 * rb0, n, ra1 * rb1)
        cores.append(c)
    return TensorTrain(cores)


def tt_dot(a: TensorTrain, b: TensorTrain) -> float:
    """Frobenius inner product by core-wise contraction."""
    if a.mode_sizes != b.mode_sizes:
        raise ValueError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")
    g = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        g = np.einsum("ac,aib,cid->bd", g, ca, cb)
    return float(g[0, 0])


def tt_norm(tt: TensorTrain) -> float:
    """Frobenius norm, computed after a left-orthogonalization sweep.

    Orthogonalizing first keeps the result accurate even when the Gram
    contraction would suffer cancellation (e.g. for a difference of two
    nearly equal trains).
    """
    cores = [c.copy() for c in tt.cores]
    for j in range(tt.d - 1):
        r0, n, r1 = cores[j].shape
        q, r = np.linalg.qr(cores[j].reshape(r0 * n, r1))
        cores[j] = q.reshape(r0, n, -1)
        cores[j + 1] = np.einsum("ab,bic->aic", r, cores[j + 1])
    return float(np.linalg.norm(cores[-1]))


def tt_normalize(tt: TensorTrain) -> TensorTrain:
    """Same direction, unit Frobenius norm, left-orthogonal cores.

    All entries are then bounded by 1, so Hadamard powers neither overflow
    nor lose whole cores to underflow.
    """
    cores = []
    for c in tt.cores:
        # the overall scale is discarded, so per-core rescaling is free
        m = float(np.max(np.abs(c)))
        cores.append(c / m if np.isfinite(m) and m > 0 else c.copy())
    for j in range(tt.d - 1):
        r0, n, r1 = cores[j].shape
        q, r = np.linalg.qr(cores[j].reshape(r0 * n, r1))
        cores[j] = q.reshape(r0, n, -1)
        cores[j + 1] = np.einsum("ab,bic->aic", r, cores[j + 1])
    nrm = float(np.linalg.norm(cores[-1]))
    if not (np.isfinite(nrm) and nrm > 0):
        raise FloatingPointError(f"cannot normalize a tensor train with norm {nrm}")
    cores[-1] = cores[-1] / nrm
    return TensorTrain(cores)


def _orthogonalize_rl(cores):
    """Right-to-left QR sweep; cores[1:] become right-orthogonal."""
    for j in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[j].shape
        q, r = np.linalg.qr(cores[j].reshape(r0, n * r1).T)
        cores[j] = q.T.reshape(-1, n, r1)
        cores[j - 1] = np.einsum("aib,cb->aic", cores[j - 1], r)
    return cores


def tt_round(tt: TensorTrain, tol: float, max_rank: int | None = None) -> TensorTrain:
    """Reduce ranks while keeping ``||round(tt) - tt||_F <= tol * ||tt||_F``.

    Standard orthogonalize-then-truncate: a right-to-left QR sweep followed by
    a left-to-right sweep of truncated SVDs, each allowed a share
    ``tol / sqrt(d - 1)`` of the relative error budget.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    d = tt.d
    cores = _orthogonalize_rl([c.copy() for c in tt.cores])
    if d == 1:
        return TensorTrain(cores)
    norm = float(np.linalg.norm(cores[0]))
    if norm == 0.0:
        return TensorTrain([np.zeros((1, n, 1)) for n in tt.mode_sizes])
    eps = tol * norm / np.sqrt(d - 1)
    for j in range(d - 1):
        r0, n, r1 = cores[j].shape
        u, s, vt = np.linalg.svd(cores[j].reshape(r0 * n, r1), full_matrices=False)
        r = _truncation_rank(s, eps, max_rank)
        cores[j] = u[:, :r].reshape(r0, n, r)
        cores[j + 1] = np.einsum("ab,bic->aic", s[:r, None] * vt[:r], cores[j + 1])
    return TensorTrain(cores)


def _truncation_rank(s, eps, max_rank=None):
    """Smallest r with sqrt(sum_{k>=r} s_k^2) <= eps (at least 1)."""
    tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]
    keep = np.nonzero(tail > eps)[0]
    r = int(keep[-1]) + 1 if keep.size else 1
    r = max(r, 1)
    if max_rank is not None:
        r = min(r, max_rank)
    return r


# --- serialization ------------------------------------------------------------

def to_dict(tt: TensorTrain, **meta) -> dict:
    return {
        "format": "ippopt-tt",
        "version": FORMAT_VERSION,
        "mode_sizes": list(tt.mode_sizes),
        "ranks": list(tt.ranks),
        "cores": [c.ravel(order="C").tolist() for c in tt.cores],
        "meta": meta,
    }


def from_dict(data: dict) -> TensorTrain:
    if data.get("format") != "ippopt-tt":
        raise ValueError("not a serialized tensor train")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported tensor-train format version {data.get('version')}")
    n, r = data["mode_sizes"], data["ranks"]
    cores = [np.asarray(c, dtype=float).reshape(r[j], n[j], r[j + 1]) for j, c in enumerate(data["cores"])]
    return TensorTrain(cores)


def save(tt: TensorTrain, path, **meta) -> None:
    Path(path).write_text(json.dumps(to_dict(tt, **meta)))


def load(path) -> tuple[TensorTrain, dict]:
    data = json.loads(Path(path).read_text())
    return from_dict(data), data.get("meta", {})
