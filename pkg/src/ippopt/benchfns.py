"""Evaluation-counted objective functions.

Every catalog benchmark is shifted so that its global minimizer sits at a
chosen point ``s`` in ``[-1, 1]^d`` and its minimum value is 0::

    f(x) = f_raw(x - s + x_raw) - f_raw(x_raw)

where ``x_raw`` is the minimizer of the textbook definition. For functions
centred at the origin this is the plain ``f_raw(x - s)``.

Formulas (``d`` = dimension, sums over ``i = 1..d`` unless noted):

============== ================================================================ ==============
name           raw formula                                                      raw minimizer
============== ================================================================ ==============
ackley         -20 exp(-0.2 sqrt(mean x^2)) - exp(mean cos 2 pi x) + 20 + e      0
griewank       1 + sum x^2 / 4000 - prod cos(x_i / sqrt(i))                      0
rastrigin      10 d + sum (x^2 - 10 cos 2 pi x)                                 0
levy3          sin^2(pi w_1) + sum_{i<d} (w_i-1)^2 (1 + 10 sin^2(pi w_i + 1))   1
               + (w_d - 1)^2 (1 + sin^2(2 pi w_d)),  w = 1 + (x - 1)/4
rosenbrock     sum_{i<d} 100 (x_{i+1} - x_i^2)^2 + (x_i - 1)^2                  1
zakharov       sum x^2 + (sum i x_i / 2)^2 + (sum i x_i / 2)^4                  0
brown          sum_{i<d} (x_i^2)^(x_{i+1}^2 + 1) + (x_{i+1}^2)^(x_i^2 + 1)      0
exponential    -exp(-sum x^2 / 2)                                               0
trid           sum (x_i - 1)^2 - sum_{i>1} x_i x_{i-1}                          i (d + 1 - i)
schaffer1      sum_{i<d} 0.5 + (sin^2(x_i^2 + x_{i+1}^2) - 0.5)                  0
               / (1 + 0.001 (x_i^2 + x_{i+1}^2))^2
schaffer2      sum_{i<d} 0.5 + (sin^2(x_i^2 - x_{i+1}^2) - 0.5)                  0
               / (1 + 0.001 (x_i^2 + x_{i+1}^2))^2
corrugated     -cos(5 r) + 0.1 r^2,  r = ||x - 5||                              5
cosine_mixture sum x^2 - 0.1 sum cos(5 pi x)                                    0
alpine1        sum |x sin x + 0.1 x|                                            0
dropwave       -(1 + cos(12 ||x||)) / (0.5 ||x||^2 + 2)                         0
sphere         sum x^2                                                          0
============== ================================================================ ==============

The search box of every catalog benchmark is ``[-5, 5]^d``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Objective",
    "BENCHMARKS",
    "make_benchmark",
    "make_objective",
    "make_quadratic",
    "make_double_well",
    "ANALYTIC",
    "make_risk_parity",
    "risk_parity_reference",
    "make_dna_chain",
    "dna_site_potential",
    "dna_site_minimizer",
    "shift_vector",
]


class Objective:
    """A black-box scalar field on R^d with an evaluation counter.

    Calling the objective with a point of shape ``(d,)`` returns a float;
    with a batch of shape ``(n, d)`` it returns an array of ``n`` values and
    advances the counter by ``n``.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        func: Callable[[np.ndarray], np.ndarray],
        lower,
        upper,
        x_min=None,
        f_min: float | None = None,
        shift=None,
    ):
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        self.name = name
        self.dim = int(dim)
        self._func = func
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.dim,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.dim,)).copy()
        self.x_min = None if x_min is None else np.asarray(x_min, dtype=float).copy()
        self.f_min = f_min
        self.shift = None if shift is None else np.asarray(shift, dtype=float).copy()
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._count

    @property
    def known_min(self):
        if self.x_min is None:
            return None
        return self.x_min, self.f_min

    def reset_count(self) -> None:
        with self._lock:
            self._count = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        batch = np.atleast_2d(x)
        if batch.shape[-1] != self.dim:
            raise ValueError(f"{self.name}: expected points of dimension {self.dim}, got {batch.shape[-1]}")
        with self._lock:
            self._count += batch.shape[0]
        values = np.asarray(self._func(batch), dtype=float)
        return float(values[0]) if single else values

    def error_inf(self, x) -> float:
        """Infinity-norm distance to the known minimizer."""
        if self.x_min is None:
            raise ValueError(f"{self.name} has no known minimizer")
        return float(np.max(np.abs(np.asarray(x, dtype=float) - self.x_min)))

    def __repr__(self):
        return f"Objective({self.name!r}, dim={self.dim}, evals={self._count})"


# --- raw formulas, vectorized over rows -------------------------------------

def _ackley(x):
    d = x.shape[1]
    return (
        -20.0 * np.exp(-0.2 * np.sqrt(np.sum(x**2, axis=1) / d))
        - np.exp(np.sum(np.cos(2 * np.pi * x), axis=1) / d)
        + 20.0
        + np.e
    )


def _griewank(x):
    i = np.arange(1, x.shape[1] + 1)
    return 1.0 + np.sum(x**2, axis=1) / 4000.0 - np.prod(np.cos(x / np.sqrt(i)), axis=1)


def _rastrigin(x):
    return 10.0 * x.shape[1] + np.sum(x**2 - 10.0 * np.cos(2 * np.pi * x), axis=1)


def _levy3(x):
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[:, 0]) ** 2
    body = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
    tail = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2 * np.pi * w[:, -1]) ** 2)
    return head + body + tail


def _rosenbrock(x):
    return np.sum(100.0 * (x[:, 1:] - x[:, :-1] ** 2) ** 2 + (x[:, :-1] - 1.0) ** 2, axis=1)


def _zakharov(x):
    i = np.arange(1, x.shape[1] + 1)
    s = np.sum(0.5 * i * x, axis=1)
    return np.sum(x**2, axis=1) + s**2 + s**4


def _brown(x):
    a = x[:, :-1] ** 2
    b = x[:, 1:] ** 2
    return np.sum(a ** (b + 1.0) + b ** (a + 1.0), axis=1)


def _exponential(x):
    return -np.exp(-0.5 * np.sum(x**2, axis=1))


def _trid(x):
    return np.sum((x - 1.0) ** 2, axis=1) - np.sum(x[:, 1:] * x[:, :-1], axis=1)


def _schaffer(sign):
    def f(x):
        a = x[:, :-1] ** 2
        b = x[:, 1:] ** 2
        num = np.sin(a + sign * b) ** 2 - 0.5
        den = (1.0 + 0.001 * (a + b)) ** 2
        return np.sum(0.5 + num / den, axis=1)

    return f


def _corrugated(x):
    r = np.sqrt(np.sum((x - 5.0) ** 2, axis=1))
    return -np.cos(5.0 * r) + 0.1 * r**2


def _cosine_mixture(x):
    return np.sum(x**2, axis=1) - 0.1 * np.sum(np.cos(5 * np.pi * x), axis=1)


def _alpine1(x):
    return np.sum(np.abs(x * np.sin(x) + 0.1 * x), axis=1)


def _dropwave(x):
    r2 = np.sum(x**2, axis=1)
    return -(1.0 + np.cos(12.0 * np.sqrt(r2))) / (0.5 * r2 + 2.0)


def _sphere(x):
    return np.sum(x**2, axis=1)


@dataclass(frozen=True)
class _Spec:
    func: Callable[[np.ndarray], np.ndarray]
    minimizer: Callable[[int], np.ndarray]
    min_dim: int = 1


def _zeros(d):
    return np.zeros(d)


def _ones(d):
    return np.ones(d)


def _trid_min(d):
    i = np.arange(1, d + 1, dtype=float)
    return i * (d + 1 - i)


BENCHMARKS: dict[str, _Spec] = {
    "ackley": _Spec(_ackley, _zeros),
    "griewank": _Spec(_griewank, _zeros),
    "rastrigin": _Spec(_rastrigin, _zeros),
    "levy3": _Spec(_levy3, _ones),
    "rosenbrock": _Spec(_rosenbrock, _ones, min_dim=2),
    "zakharov": _Spec(_zakharov, _zeros),
    "brown": _Spec(_brown, _zeros, min_dim=2),
    "exponential": _Spec(_exponential, _zeros),
    "trid": _Spec(_trid, _trid_min, min_dim=2),
    "schaffer1": _Spec(_schaffer(+1.0), _zeros, min_dim=2),
    "schaffer2": _Spec(_schaffer(-1.0), _zeros, min_dim=2),
    "corrugated": _Spec(_corrugated, lambda d: np.full(d, 5.0)),
    "cosine_mixture": _Spec(_cosine_mixture, _zeros),
    "alpine1": _Spec(_alpine1, _zeros),
    "dropwave": _Spec(_dropwave, _zeros),
    "sphere": _Spec(_sphere, _zeros),
}


def shift_vector(d: int, seed: int | None) -> np.ndarray:
    """Shift drawn uniformly from [-1, 1]^d; ``None`` gives the zero shift."""
    if seed is None:
        return np.zeros(d)
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=d)


def make_benchmark(name: str, d: int, shift=None, seed: int | None = None) -> Objective:
    """Build a shifted, zero-minimum catalog benchmark.

    Parameters
    ----------
    name : str
        Catalog key, see :data:`BENCHMARKS`.
    d : int
        Dimension.
    shift : array_like, optional
        Location of the global minimizer, inside ``[-1, 1]^d``.
    seed : int, optional
        Draw the shift from ``shift_vector(d, seed)`` instead.
    """
    try:
        spec = BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark function {name!r}; choose from {sorted(BENCHMARKS)}") from None
    if d < spec.min_dim:
        raise ValueError(f"{name} requires d >= {spec.min_dim}, got {d}")
    if shift is not None and seed is not None:
        raise ValueError("pass either shift or seed, not both")
    s = shift_vector(d, seed) if shift is None else np.asarray(shift, dtype=float)
    if s.shape != (d,):
        raise ValueError(f"shift must have shape ({d},), got {s.shape}")
    if np.any(np.abs(s) > 1.0):
        raise ValueError("shift must lie in [-1, 1]^d")

    raw = spec.func
    x_raw = spec.minimizer(d)
    offset = x_raw - s
    f_raw_min = float(raw(x_raw[None, :])[0])

    def f(x):
        return raw(x + offset) - f_raw_min

    return Objective(name, d, f, -5.0, 5.0, x_min=s, f_min=0.0, shift=s)


def make_quadratic(d: int) -> Objective:
    """``|x|^2 / 2``; its prox point is ``x / (1 + t)`` and its Gibbs mean is exact."""
    return Objective("quadratic", d, lambda x: 0.5 * np.sum(x**2, axis=1), -5.0, 5.0,
                     x_min=np.zeros(d), f_min=0.0)


def make_double_well(d: int = 1) -> Objective:
    """``sum (x_i^2 - 1)^2``: two minima per axis at ``+-1``, symmetric about 0."""
    return Objective("double_well", d, lambda x: np.sum((x**2 - 1.0) ** 2, axis=1), -5.0, 5.0,
                     x_min=np.ones(d), f_min=0.0)


ANALYTIC = {"quadratic": make_quadratic, "double_well": make_double_well}


def make_objective(name: str, d: int, seed: int | None = None) -> Objective:
    """Catalog benchmark (shifted by ``seed``) or one of the unshifted analytic instances."""
    if name in ANALYTIC:
        return ANALYTIC[name](d)
    return make_benchmark(name, d, seed=seed)


# --- applications -----------------------------------------------------------

def _risk_parity_cov(d):
    i = np.arange(d)
    return np.exp(-((i[:, None] - i[None, :]) ** 2) / 4.0)


def _risk_parity_func(d, penalty_weight):
    cov = _risk_parity_cov(d)

    def f(w):
        sw = w @ cov
        var = np.einsum("ni,ni->n", w, sw)
        vol = np.sqrt(np.maximum(var, 0.0))
        contrib = w * sw - vol[:, None] / d
        return np.sum(contrib**2, axis=1) + penalty_weight * (np.sum(w, axis=1) - 1.0) ** 2

    return f


def make_risk_parity(d: int, penalty_weight: float = 10.0, reference: bool = False, seed: int = 0) -> Objective:
    """Equal-risk-contribution portfolio objective on ``[0, 1]^d``.

    The budget constraint ``sum w = 1`` enters as an additive quadratic
    penalty. With ``reference=True`` the known minimum is filled in by
    :func:`risk_parity_reference`.
    """
    if d < 2:
        raise ValueError(f"risk parity requires d >= 2, got {d}")
    if not penalty_weight > 0:
        raise ValueError(f"penalty_weight must be positive, got {penalty_weight}")
    func = _risk_parity_func(d, penalty_weight)
    x_min = f_min = None
    if reference:
        x_min, f_min = risk_parity_reference(d, penalty_weight, seed=seed)
    return Objective("risk_parity", d, func, 0.0, 1.0, x_min=x_min, f_min=f_min)


def risk_parity_reference(d: int, penalty_weight: float = 10.0, n_samples: int = 10**6, seed: int = 0,
                          polish: bool = True):
    """Reference minimizer by dense random search on the simplex.

    The best of ``n_samples`` Dirichlet(1) draws is optionally refined with
    a Nelder-Mead polish inside ``[0, 1]^d``.
    """
    from scipy.optimize import minimize

    func = _risk_parity_func(d, penalty_weight)
    rng = np.random.default_rng(seed)
    best_w, best_f = None, np.inf
    chunk = 100_000
    for start in range(0, n_samples, chunk):
        w = rng.dirichlet(np.ones(d), size=min(chunk, n_samples - start))
        vals = func(w)
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_w, best_f = w[j].copy(), float(vals[j])
    if polish:
        res = minimize(lambda w: float(func(np.clip(w, 0.0, 1.0)[None, :])[0]), best_w, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 200 * d * d, "maxfev": 200 * d * d})
        w = np.clip(res.x, 0.0, 1.0)
        fw = float(func(w[None, :])[0])
        if fw < best_f:
            best_w, best_f = w, fw
    return best_w, best_f


DNA_TILT = 0.05


def dna_site_potential(s):
    """Asymmetric double well for one base pair; deeper well near s = -1."""
    s = np.asarray(s, dtype=float)
    return (s**2 - 1.0) ** 2 + DNA_TILT * (1.0 + s)


def dna_site_minimizer(n_nodes: int = 10**6) -> float:
    """Global minimizer of :func:`dna_site_potential` by dense search on [-2, 2], then golden refinement."""
    from scipy.optimize import minimize_scalar

    grid = np.linspace(-2.0, 2.0, n_nodes)
    k = int(np.argmin(dna_site_potential(grid)))
    h = grid[1] - grid[0]
    res = minimize_scalar(dna_site_potential, bracket=(grid[k] - h, grid[k], grid[k] + h), tol=1e-14)
    return float(res.x)


def make_dna_chain(d: int = 50) -> Objective:
    """Separable surrogate of a chain of ``d`` hydrogen-bonded base pairs.

    Each site contributes a tilted double well, so the landscape has ``2^d``
    local minima and a single global one with every site near -1.
    """
    if d < 1:
        raise ValueError(f"dna chain requires d >= 1, got {d}")
    s_star = dna_site_minimizer()
    v_star = float(dna_site_potential(s_star))

    def f(x):
        return np.sum(dna_site_potential(x), axis=1) - d * v_star

    return Objective("dna_chain", d, f, -2.0, 2.0, x_min=np.full(d, s_star), f_min=0.0)
