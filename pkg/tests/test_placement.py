import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from ltcache import BudgetError, CacheSystem, Placement
from ltcache.placement import (
    PlacementProblem,
    exhaustive_integer,
    objective_tup,
    objective_values,
    optimize_integer,
    optimize_relaxed,
    transfer_gap,
)


def _random_problem(seed, n_max=4, budget_max=12, hmax=2, e_delta=0.0):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(1, 7))
    M = int(rng.integers(0, max(1, min(n, budget_max // k)) + 1))
    theta = np.sort(rng.random(n))[::-1]
    if rng.random() < 0.3:
        theta = np.ones(n)
    theta /= theta.sum()
    gamma = rng.random(int(rng.integers(1, hmax + 1)))
    gamma /= gamma.sum()
    return PlacementProblem(CacheSystem(n, k, M, theta, gamma), e_delta)


def _lp_relaxed(prob):
    """Same relaxation as an explicit LP with shortfall variables s_jh >= k - w_j h."""
    sys_ = prob.sys
    n, H, k = sys_.n, sys_.gamma.size, sys_.k
    nv = n + n * H
    c = np.zeros(nv)
    for j in range(n):
        c[n + j * H: n + (j + 1) * H] = sys_.theta[j] * sys_.gamma
    A_ub, b_ub = [], []
    for j in range(n):
        for h in range(1, H + 1):
            row = np.zeros(nv)
            row[j] = -h
            row[n + j * H + h - 1] = -1
            A_ub.append(row)
            b_ub.append(-k)
    A_eq = [np.r_[np.ones(n), np.zeros(n * H)]]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[sys_.budget], bounds=(0, None), method="highs")
    assert res.success
    return prob.e_delta + res.fun


def test_symmetric_uniform():
    for M in range(0, 11):
        sys_ = CacheSystem(10, 30, M, np.full(10, 0.1), [1.0])
        prob = PlacementProblem(sys_, 5.0)
        res = optimize_integer(prob)
        assert res.w.tolist() == [3 * M] * 10
        assert res.objective == pytest.approx(5.0 + 30 * (1 - M / 10), abs=1e-12)
        rel = optimize_relaxed(prob)
        np.testing.assert_allclose(rel.w, 3 * M, atol=1e-9)


def test_symmetric_uniform_with_multi_coverage():
    sys_ = CacheSystem(5, 20, 2, np.full(5, 0.2), [0.3, 0.6, 0.1])
    assert optimize_integer(PlacementProblem(sys_)).w.tolist() == [8] * 5


def test_saturation_order():
    sys_ = CacheSystem(2, 10, 0.5, [0.9, 0.1], [1.0])
    assert optimize_integer(PlacementProblem(sys_)).w.tolist() == [5, 0]
    sys_ = CacheSystem(2, 10, 1.5, [0.9, 0.1], [1.0])
    assert optimize_integer(PlacementProblem(sys_)).w.tolist() == [10, 5]
    rel = optimize_relaxed(PlacementProblem(sys_))
    np.testing.assert_allclose(rel.w, [10, 5], atol=1e-9)


def test_full_memory():
    sys_ = CacheSystem(3, 7, 3, [0.5, 0.3, 0.2], [1.0])
    res = optimize_integer(PlacementProblem(sys_, 2.5))
    assert res.w.tolist() == [7, 7, 7]
    assert res.objective == pytest.approx(2.5)


def test_exhaustive_small_example():
    sys_ = CacheSystem(3, 4, 1, [0.5, 0.3, 0.2], [1.0])
    prob = PlacementProblem(sys_)
    _, best = exhaustive_integer(prob)
    assert optimize_integer(prob).objective == pytest.approx(best, abs=1e-12)


def test_objective_examples():
    sys_ = CacheSystem(4, 8, 2, np.full(4, 0.25), [1.0])
    prob = PlacementProblem(sys_, 1.5)
    uni = Placement(np.full(4, 4))
    assert objective_tup(prob, uni) == pytest.approx(1.5 + 8 * (1 - 2 / 4))
    assert objective_tup(prob, uni) <= objective_tup(prob, Placement(np.array([16, 0, 0, 0])))
    with pytest.raises(BudgetError):
        objective_tup(prob, Placement(np.array([1, 1, 1, 1])))


@given(st.integers(0, 2**32))
def test_matches_exhaustive(seed):
    prob = _random_problem(seed)
    _, best = exhaustive_integer(prob)
    res = optimize_integer(prob)
    assert res.objective == pytest.approx(best, abs=1e-12)
    assert int(res.w.sum()) == prob.sys.budget


@given(st.integers(0, 2**32))
def test_relaxation_bound(seed):
    prob = _random_problem(seed, n_max=6, budget_max=60, hmax=4, e_delta=3.0)
    ires = optimize_integer(prob)
    rres = optimize_relaxed(prob)
    assert ires.objective >= rres.objective - 1e-9
    # the integer optimum is within one marginal unit step of the relaxation
    step = float(prob.sys.theta.max() * np.dot(prob.sys.gamma, prob.sys.h_values))
    assert ires.objective - rres.objective <= step + 1e-9
    assert math.fsum(rres.w) == pytest.approx(prob.sys.budget, abs=1e-9)
    assert transfer_gap(prob, rres.w, 1e-3) <= 1e-9


@given(st.integers(0, 2**32))
def test_relaxed_matches_linear_program(seed):
    prob = _random_problem(seed, n_max=5, budget_max=40, hmax=3, e_delta=0.7)
    assert optimize_relaxed(prob).objective == pytest.approx(_lp_relaxed(prob), abs=1e-7)


@given(st.integers(0, 2**32))
def test_popularity_monotone(seed):
    prob = _random_problem(seed, n_max=8, budget_max=80, hmax=4)
    w = optimize_integer(prob).w
    th = prob.sys.theta
    for i in range(len(w)):
        for j in range(len(w)):
            if th[i] > th[j]:
                assert w[i] >= w[j]


@given(st.integers(0, 2**32), st.floats(0, 100))
def test_offset_does_not_move_argmin(seed, offset):
    prob = _random_problem(seed, n_max=6, budget_max=50, hmax=3)
    a = optimize_integer(prob)
    b = optimize_integer(PlacementProblem(prob.sys, offset))
    assert np.array_equal(a.w, b.w)
    assert b.objective == pytest.approx(a.objective + offset)


def test_summary_and_objective_consistency():
    sys_ = CacheSystem.zipf(10, 100, 3, 0.8, [0.2907, 0.6591, 0.0430, 0.0072])
    prob = PlacementProblem(sys_, 32.0)
    res = optimize_integer(prob)
    assert res.objective == pytest.approx(objective_values(prob, res.w))
    assert set(res.summary()) == {"objective", "iterations", "tie_count", "relaxed"}
    assert res.placement.w.sum() == 300
