import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippopt.benchfns import make_benchmark, make_double_well, make_quadratic
from ippopt.gibbs import (
    ProxEstimate,
    ProxQuery,
    ewma_combine,
    gibbs_mean_dense,
    prox_dense,
    prox_mc,
    sample_size_hint,
)


def const(z):
    return np.full(np.atleast_2d(z).shape[0], 3.0)


def test_query_validation():
    with pytest.raises(ValueError, match="t must be positive"):
        ProxQuery([0.0], 0.0, 0.1)
    with pytest.raises(ValueError, match="delta must be positive"):
        ProxQuery([0.0], 1.0, -0.1)
    q = ProxQuery(0.5, 1.0, 0.1)
    assert q.x.shape == (1,)


def test_constant_objective_gives_sample_mean():
    x = np.array([0.3, -0.7])
    t, delta = 2.0, 0.1
    est = prox_mc(const, ProxQuery(x, t, delta), 10_000, rng=5)
    assert np.linalg.norm(est.point - x) <= 0.05 * math.sqrt(delta * t)
    assert est.effective_sample_size == pytest.approx(10_000)


def test_quadratic_posterior_mean():
    f = make_quadratic(2)
    est = prox_mc(f, ProxQuery([1.0, 1.0], 1.0, 0.1), 100_000, rng=0)
    assert np.linalg.norm(est.point - 0.5) <= 0.02


def test_exact_evaluation_count_and_ess_bounds():
    f = make_benchmark("ackley", 3, seed=0)
    est = prox_mc(f, ProxQuery(np.zeros(3), 1.0, 0.05), 777, rng=1)
    assert f.eval_count == 777
    assert 1.0 <= est.effective_sample_size <= 777
    assert isinstance(est, ProxEstimate)


def test_deterministic_given_seed():
    f = make_benchmark("griewank", 2, seed=1)
    q = ProxQuery([0.5, 0.5], 2.0, 0.1)
    a = prox_mc(f, q, 500, rng=42)
    b = prox_mc(f, q, 500, rng=42)
    assert np.array_equal(a.point, b.point)


def test_no_underflow_at_tiny_delta():
    # raw weights exp(-f/delta) would all be 0; the shift keeps the best at 1
    f = make_benchmark("rastrigin", 2, seed=0)
    est = prox_mc(lambda z: f(z) + 1e4, ProxQuery([2.0, 2.0], 1.0, 1e-6), 100, rng=0)
    assert np.all(np.isfinite(est.point))
    assert est.effective_sample_size >= 1.0


def test_non_finite_value_names_the_sample():
    def bad(z):
        out = np.zeros(len(z))
        out[3] = np.nan
        return out

    with pytest.raises(FloatingPointError, match="sample point"):
        prox_mc(bad, ProxQuery([0.0], 1.0, 0.1), 10, rng=0)


def test_shift_invariance_is_bit_identical_for_exact_sums():
    # dyadic values: f + c is exact, so every weight is bit-identical
    def stair(z):
        return np.floor(8 * np.abs(np.atleast_2d(z)[:, 0])) / 8

    q = ProxQuery([0.4], 1.5, 0.2)
    a = prox_mc(stair, q, 1000, rng=9)
    b = prox_mc(lambda z: stair(z) + 3.0, q, 1000, rng=9)
    assert np.array_equal(a.point, b.point)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-1e3, 1e3), seed=st.integers(0, 10_000))
def test_shift_invariance_to_rounding(c, seed):
    f = make_benchmark("ackley", 2, seed=3)
    q = ProxQuery([0.2, -0.1], 1.0, 0.2)
    a = prox_mc(f, q, 200, rng=seed)
    b = prox_mc(lambda z: f(z) + c, q, 200, rng=seed)
    np.testing.assert_allclose(a.point, b.point, rtol=1e-9, atol=1e-9)


def test_double_well_matches_dense_quadrature():
    f = make_double_well(1)
    x, t, delta = 0.2, 5.0, 0.05
    ref = gibbs_mean_dense(f, [x], t, delta, n_nodes=10**6)[0]
    ests = np.array([prox_mc(f, ProxQuery([x], t, delta), 10_000, rng=s).point[0] for s in range(20)])
    se = ests.std(ddof=1) / math.sqrt(ests.size)
    assert abs(ests.mean() - ref) <= 3 * se


def test_even_objective_has_zero_mean_estimate():
    f = make_double_well(1)
    ests = np.array([prox_mc(f, ProxQuery([0.0], 2.0, 0.1), 500, rng=s).point[0] for s in range(50)])
    se = ests.std(ddof=1) / math.sqrt(ests.size)
    assert abs(ests.mean()) <= 3 * se


def test_ewma_examples():
    assert ewma_combine([2.0, 0.0], [0.0, 2.0], 0.5) == pytest.approx([1.0, 1.0])
    assert ewma_combine(4.0, 0.0, 0.25) == pytest.approx(1.0)
    assert ewma_combine([1.5, -2.0], [9.0, 9.0], 1.0) == pytest.approx([1.5, -2.0])
    with pytest.raises(ValueError):
        ewma_combine(1.0, 0.0, 0.0)


def test_ewma_damping_reduces_variance():
    f = make_benchmark("ackley", 2, seed=0)
    x = np.array([0.5, 0.5])
    q = ProxQuery(x, 1.0, 0.1)
    raw = np.array([prox_mc(f, q, 50, rng=s).point for s in range(200)])
    damped = np.array([ewma_combine(p, x, 0.25) for p in raw])
    assert np.var(damped - x, axis=0).sum() < np.var(raw - x, axis=0).sum()


def test_sample_size_hint():
    assert sample_size_hint(0.25, 1.0) == 2
    assert sample_size_hint(0.01, 0.2, scale=10) == 12
    assert sample_size_hint(0.04 / 4, 0.5, 100) == 2 * sample_size_hint(0.04, 0.5, 100)
    with pytest.raises(ValueError):
        sample_size_hint(1.5, 0.5)


def test_dense_mean_converges_to_prox_point_monotonically():
    f = make_double_well(1)
    for x, t in [(0.2, 5.0), (1.5, 1.0)]:
        ref = prox_dense(f, [x], t)[0]
        errs = [abs(gibbs_mean_dense(f, [x], t, d)[0] - ref) for d in (0.2, 0.1, 0.05, 0.025)]
        assert all(a > b for a, b in zip(errs, errs[1:]))
        slope = np.polyfit(np.log([0.2, 0.1, 0.05, 0.025]), np.log(errs), 1)[0]
        assert slope >= 0.8


def test_convex_hull_limit_at_the_midpoint():
    f = make_double_well(1)
    for delta in (0.1, 0.03, 0.01):
        assert abs(gibbs_mean_dense(f, [0.0], 50.0, delta)[0]) < 1e-3


def test_prox_dense_quadratic_closed_form():
    f = make_quadratic(2)
    assert prox_dense(f, [1.0, -2.0], 3.0) == pytest.approx([0.25, -0.5], abs=1e-8)
    with pytest.raises(ValueError, match="d <= 3"):
        prox_dense(make_quadratic(4), np.zeros(4), 1.0)
    with pytest.raises(ValueError, match="d <= 3"):
        gibbs_mean_dense(make_quadratic(4), np.zeros(4), 1.0, 0.1)


def test_dense_gibbs_mean_of_quadratic_is_exact():
    f = make_quadratic(2)
    est = gibbs_mean_dense(f, [1.0, 1.0], 1.0, 0.05)
    # the window is centred on x, not on the posterior mean, so its tail cut is lopsided
    assert est == pytest.approx([0.5, 0.5], abs=1e-6)
