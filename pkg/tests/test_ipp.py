import math

import numpy as np
import pytest

from ippopt.benchfns import Objective, make_benchmark, make_double_well
from ippopt.ipp import (
    IPPParams,
    decrease_check,
    evals_to_accuracy,
    mc_ipp,
    random_search,
    t_update,
    tt_ipp,
    warm_start,
)
from ippopt.tt import MeshGrid, tt_cross
from ippopt.tt.cross import EntryOracle


def test_defaults_and_validation():
    p = IPPParams.tt()
    assert (p.delta0, p.eta_minus, p.eta_plus, p.T, p.tau, p.t0, p.m) == (0.1, 0.5, 2.0, 20.0, 0.5, 1.0, 4)
    assert IPPParams.mc().eta_minus == 0.9
    p.validate("tt")
    IPPParams.mc().validate("mc")
    with pytest.raises(ValueError, match="alpha_min > 1 - eta_minus"):
        IPPParams.mc(eta_minus=0.5).validate("mc")
    with pytest.raises(ValueError, match="theta1"):
        IPPParams(theta1=0.8, theta2=0.5).validate()
    with pytest.raises(ValueError, match="gamma"):
        IPPParams(gamma=1.0).validate("tt")
    with pytest.raises(ValueError, match="unknown parameter"):
        p.updated(nonsense=1)


# --- step-size rule and decrease test ---------------------------------------------

def test_t_update_examples():
    p = IPPParams()
    assert t_update(0.1, 1.0, 1.0, p) == 2.0
    assert t_update(1.0, 0.5, 1.0, p) == 0.5
    assert t_update(5.0, None, 1.3, p) == 1.3
    # middle band keeps t
    assert t_update(0.6, 1.0, 3.0, p) == 3.0
    # clamps
    assert t_update(0.0, 1.0, 15.0, p) == p.T
    assert t_update(10.0, 1.0, 0.6, p) == p.tau


def test_decrease_check_examples():
    window = [3.0, 5.0, 4.0, 4.5]
    assert decrease_check(100.0, window[:2], 1, 1e-3, 4) is False
    assert decrease_check(4.9, window, 10, 1e-3, 4) is False
    assert decrease_check(5.1, window, 10, 1e-3, 4) is True
    # m = 1 at k = 0 divides by max(k, 1)
    assert decrease_check(5.0 - 5e-4, [5.0], 0, 1e-3, 1) is True
    with pytest.raises(ValueError):
        decrease_check(1.0, [], 5, 1e-3, 4)


# --- warm starts ------------------------------------------------------------------

def test_warm_start_tt_even_function_is_centered():
    f = make_double_well(2)
    mesh = MeshGrid(-np.full(2, 2.0), np.full(2, 2.0), 0.1)

    def psi(idx):
        return np.exp(-f(mesh.points(idx)) / 0.1)

    tt = tt_cross(EntryOracle(psi, mesh.mode_sizes), mesh.mode_sizes, 1e-10, rng=0)
    assert np.abs(warm_start(f, 0.1, "tt", psi_tt=tt, mesh=mesh)).max() <= 1e-10


def test_warm_start_tt_locates_a_quadratic_bowl():
    a = np.array([0.7, -1.2])
    mesh = MeshGrid(-np.full(2, 3.0), np.full(2, 3.0), 0.05)

    def psi(idx):
        return np.exp(-np.sum((mesh.points(idx) - a) ** 2, axis=1) / 0.01)

    tt = tt_cross(EntryOracle(psi, mesh.mode_sizes), mesh.mode_sizes, 1e-10, rng=0)
    assert np.abs(warm_start(None, 0.01, "tt", psi_tt=tt, mesh=mesh) - a).max() <= 0.05


def test_warm_start_mc_constant_is_box_mean():
    n, d = 4000, 2
    const = Objective("const", d, lambda x: np.zeros(len(x)), -3, 3)
    x0 = warm_start(const, 0.1, "mc", rng=1, n_samples=n, lower=[-3, -3], upper=[3, 3])
    se = 6 / math.sqrt(12 * n)
    assert np.all(np.abs(x0) <= 3 * se)
    with pytest.raises(ValueError):
        warm_start(const, 0.1, "nope")


# --- drivers --------------------------------------------------------------------------

def test_tt_ipp_sphere_smoke():
    f = make_benchmark("sphere", 4)
    r = tt_ipp(f, rng=0)
    first = next(rec for rec in r.trace if np.abs(rec.x).max() <= 1e-3)
    assert first.k <= 5
    assert r.evals == f.eval_count


def test_tt_ipp_griewank_within_budget():
    f = make_benchmark("griewank", 4, seed=0)
    r = tt_ipp(f, IPPParams.tt(eps_stop=0, max_evals=30_000), rng=0, x_star=f.x_min, target_tol=1e-2)
    assert r.termination == "target"
    assert r.evals <= 30_000
    assert evals_to_accuracy(r, f.x_min, 1e-2) == r.evals


def test_mc_ipp_sphere_median():
    # at delta ~ 0.1 the estimate scatters by ~sqrt(delta / 2) per coordinate,
    # so the 10^4-evaluation error settles near 0.2-0.5 rather than 0.1
    errs, prs = [], []
    for seed in range(10):
        f = make_benchmark("sphere", 10, seed=seed)
        r = mc_ipp(f, IPPParams.mc(max_evals=10_000), rng=seed)
        assert r.evals <= 10_000
        errs.append(f.error_inf(r.x))
        prs.append(f.error_inf(random_search(f, 10_000, rng=seed).x))
    assert np.median(errs) <= 0.5
    assert np.median(errs) < np.median(prs)


def test_budget_is_never_exceeded():
    for budget in (1, 50, 777):
        f = make_benchmark("ackley", 3, seed=1)
        r = mc_ipp(f, IPPParams.mc(max_evals=budget), rng=0)
        assert r.evals <= budget and f.eval_count <= budget
        g = make_benchmark("ackley", 3, seed=1)
        r = tt_ipp(g, IPPParams.tt(max_evals=budget), rng=0)
        assert r.termination == "budget"
        assert g.eval_count <= budget


def test_random_search_reports_its_best():
    f = make_benchmark("sphere", 2, seed=0)
    r = random_search(f, 2500, rng=3, batch=1000)
    assert r.evals == f.eval_count == 2500
    assert len(r.trace) == 3
    assert r.f == pytest.approx(f(r.x))
    assert [rec.f_x for rec in r.trace] == sorted((rec.f_x for rec in r.trace), reverse=True)


def test_delta_halving_costs_no_evaluations_without_refinement():
    f = make_benchmark("rastrigin", 2, seed=4)
    # a huge C_mesh switches refinement off
    r = tt_ipp(f, IPPParams.tt(C_mesh=1e12, k_max=40, eps_stop=0), rng=0)
    halvings = [i for i, rec in enumerate(r.trace) if rec.delta_halved]
    assert halvings
    for i in halvings:
        assert not r.trace[i].mesh_refined
        # exactly one evaluation, the new iterate itself
        assert r.trace[i].evals - r.trace[i - 1].evals <= 1


# --- invariants over randomized short runs ----------------------------------------

FUNCS = ["ackley", "griewank", "rastrigin", "sphere", "alpine1", "levy3"]


def _check_common(r, p):
    tr = r.trace
    assert len(tr) <= p.k_max + 1
    for a, b in zip(tr, tr[1:]):
        assert b.evals >= a.evals
        assert b.delta <= a.delta
    for rec in tr:
        assert p.tau <= rec.t <= p.T
    for k, rec in enumerate(tr):
        if k >= p.m:
            window = [tr[j].f_x for j in range(k - p.m, k)]
            if not decrease_check(rec.f_x, window, k - 1, p.eta, p.m):
                assert rec.f_x <= max(window) - p.eta / max(k - 1, 1)


def _random_case(i):
    rng = np.random.default_rng(1000 + i)
    name = FUNCS[i % len(FUNCS)]
    d = int(rng.integers(2, 4))
    return name, d, int(rng.integers(0, 2**31 - 1)), rng


@pytest.mark.parametrize("i", range(25))
def test_mc_ipp_invariants(i):
    name, d, seed, rng = _random_case(i)
    p = IPPParams.mc(k_max=int(rng.integers(5, 25)), t0=float(rng.uniform(0.5, 5.0)),
                     delta0=float(rng.uniform(0.02, 0.5)), m=int(rng.integers(1, 6)))
    runs = [mc_ipp(make_benchmark(name, d, seed=seed), p, rng=seed) for _ in range(2)]
    r = runs[0]
    _check_common(r, p)
    tr = r.trace
    for a, b in zip(tr, tr[1:]):
        assert b.N >= a.N
        if b.delta < a.delta:
            assert b.delta == pytest.approx(max(a.delta * p.c_decay, p.delta_floor))
    for rec in tr:
        assert p.alpha_min <= rec.alpha <= p.alpha_max
        assert rec.rejected_count <= p.max_rejections
    assert runs[0].to_dict() == runs[1].to_dict()


@pytest.mark.parametrize("i", range(25))
def test_tt_ipp_invariants(i):
    name, d, seed, rng = _random_case(i + 25)
    p = IPPParams.tt(k_max=int(rng.integers(5, 20)), t0=float(rng.uniform(0.5, 5.0)),
                     m=int(rng.integers(1, 6)), h0=float(rng.choice([0.1, 0.2])), eps_stop=0)
    runs = [tt_ipp(make_benchmark(name, d, seed=seed), p, rng=seed) for _ in range(2)]
    r = runs[0]
    _check_common(r, p)
    tr = r.trace
    for a, b in zip(tr, tr[1:]):
        assert b.h <= a.h
        assert b.delta in (a.delta, max(a.delta / 2, p.delta_floor))
        assert b.delta_halved == (b.delta < a.delta)
    assert runs[0].to_dict() == runs[1].to_dict()
