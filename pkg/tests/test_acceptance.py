"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances.

The lines are collected in the ``acceptance criteria`` section of the pytest
terminal summary. The full-scale overhead check (criterion 8) takes several
minutes and runs only with ``LTCACHE_FULL_SCALE=1``; ``LTCACHE_FULL_SCALE_DIST``
points it at a degree-distribution file instead of the built-in reading.
"""

import math
import os

import numpy as np
import pytest

from ltcache import (
    REFERENCE_CONNECTIVITY,
    CacheSystem,
    DegreeDistribution,
    GridGeometry,
    Placement,
    average_overhead,
    backhaul_upper_bound,
    brute_force_failure,
    derive_connectivity,
    estimate_rate,
    expected_backhaul,
    failure_curve,
    failure_probability,
    ideal_soliton,
    mds_expected_backhaul,
    monte_carlo_overhead,
    optimize_integer,
    point_mass,
    robust_soliton,
)
from ltcache.netmodel import backhaul_report
from ltcache.placement import PlacementProblem, exhaustive_integer

K_DESK = 100


@pytest.fixture(scope="module")
def desk():
    dist = robust_soliton(K_DESK, 0.05, 0.5)
    curve = failure_curve(K_DESK, dist)
    return dist, curve, average_overhead(curve)


def test_criterion_1_oracle_equivalence(report):
    worst = 0.0
    cases = 0
    for k in range(1, 5):
        for dist in (ideal_soliton(k), point_mass(1), point_mass(2)):
            if dist.d_max > k:
                continue
            for m in range(0, 9):
                worst = max(worst, abs(failure_probability(k, dist, m) - brute_force_failure(k, dist, m)))
                cases += 1
    ok = worst <= 1e-9
    report(1, ok, f"max |DP - brute force| = {worst:.3g} over {cases} cases (tol 1e-9)")
    assert ok


def test_criterion_2_closed_form(report):
    d = point_mass(1)
    worst = max(abs(failure_probability(2, d, 2 + delta) - 2.0 ** -(1 + delta)) for delta in range(21))
    e = average_overhead(failure_curve(2, d, epsilon_tail=1e-6))
    ok = worst <= 1e-12 and abs(e - 1.0) <= 1e-6
    report(2, ok, f"max |P_F - 2^-(1+delta)| = {worst:.3g} (tol 1e-12); E[delta] = {e:.9f} (tol 1e-6)")
    assert ok


def test_criterion_3_simulation_agreement(report, desk):
    dist, curve, e_delta = desk
    trials = 100_000
    worst = 0.0
    bad = []
    for alpha in (0.0, 0.8):
        for M in range(1, 10):
            sys_ = CacheSystem.zipf(10, K_DESK, M, alpha, REFERENCE_CONNECTIVITY)
            place = optimize_integer(PlacementProblem(sys_, e_delta)).placement
            exact = expected_backhaul(sys_, place, curve)
            est = estimate_rate(sys_, place, dist, trials, master_seed=1000 * M + int(10 * alpha))
            z = abs(est.mean - exact) / est.stderr
            worst = max(worst, z)
            if z > 3:
                bad.append((M, alpha, round(z, 2)))
    ok = not bad
    report(3, ok, f"18 grid points, 1e5 trials each, max |z| = {worst:.2f} (tol 3){'' if ok else f'; outside: {bad}'}")
    assert ok


def test_criterion_4_bound_ordering(report):
    rng = np.random.default_rng(20240404)
    curves = {k: failure_curve(k, robust_soliton(k, 0.1, 0.5)) for k in (4, 10, 25, 50)}
    violations = 0
    for _ in range(100):
        k = int(rng.choice(list(curves)))
        n = int(rng.integers(1, 12))
        theta = np.sort(rng.dirichlet(np.ones(n)))[::-1]
        gamma = rng.dirichlet(np.ones(int(rng.integers(1, 6))))
        sys_ = CacheSystem(n, k, 0, theta, gamma)
        place = Placement(rng.integers(0, 2 * k, size=n))
        curve = curves[k]
        tup = backhaul_upper_bound(sys_, place, average_overhead(curve))
        et = expected_backhaul(sys_, place, curve)
        mds = mds_expected_backhaul(sys_, place)
        violations += not (tup >= et - 1e-12 and et >= mds - 1e-12)
    ok = violations == 0
    report(4, ok, f"T_UP >= E[T] >= E[T]_MDS on 100 random instances, {violations} violations")
    assert ok


def test_criterion_5_connectivity(report):
    target = np.array([0.2907, 0.6591, 0.0430, 0.0072])
    est = derive_connectivity(GridGeometry(radius=60, spacing=45), 10_000_000, master_seed=1)
    g = np.zeros(max(est.gamma.size, 4))
    g[: est.gamma.size] = est.gamma
    dev = float(np.max(np.abs(g[:4] - target))) if g.size == 4 else math.inf
    ok = g.size == 4 and dev <= 0.005
    shown = ", ".join(f"{x:.4f}" for x in est.gamma)
    report(5, ok, f"radius 60 m, spacing 45 m, 1e7 samples: gamma = ({shown}); target within 0.005 of "
                  f"(0.2907, 0.6591, 0.0430, 0.0072)")
    assert ok


def test_criterion_5_reference_geometry_reproduces_vector():
    # the published vector is what a 60 m radius gives on an 80 m grid
    est = derive_connectivity(GridGeometry(radius=60, spacing=80), 10_000_000, master_seed=1)
    np.testing.assert_allclose(est.gamma, REFERENCE_CONNECTIVITY, atol=0.005)


def test_criterion_6_placement_optimality(report):
    rng = np.random.default_rng(6)
    instances = mismatches = 0
    for n in range(1, 5):
        for k in range(1, 13):
            for budget in range(0, 13):
                if budget > n * k:
                    continue
                M = budget / k
                for draw in range(3):
                    theta = np.ones(n) if draw == 0 else np.sort(rng.random(n))[::-1]
                    theta = theta / theta.sum()
                    gamma = [1.0] if draw == 0 else rng.dirichlet(np.ones(2))
                    prob = PlacementProblem(CacheSystem(n, k, M, theta, gamma), 0.0)
                    _, best = exhaustive_integer(prob)
                    res = optimize_integer(prob)
                    instances += 1
                    mismatches += not (abs(res.objective - best) <= 1e-12 and int(res.w.sum()) == budget)
    ok = mismatches == 0
    report(6, ok, f"greedy vs exhaustive on {instances} instances (n <= 4, Mk <= 12), {mismatches} mismatches")
    assert ok


def test_criterion_7_mds_baseline(report, desk):
    _, curve, e_delta = desk
    n = 10
    worst_mds = worst_gap = 0.0
    for M in range(0, n + 1):
        sys_ = CacheSystem.zipf(n, K_DESK, M, 0.0, [1.0])
        place = optimize_integer(PlacementProblem(sys_, e_delta)).placement
        rep = backhaul_report(sys_, place, curve)
        worst_mds = max(worst_mds, abs(rep["mds_rate_normalized"] - (1 - M / n)))
        worst_gap = max(worst_gap, abs(rep["rate_normalized"] - rep["mds_rate_normalized"] - e_delta / K_DESK))
    ok = worst_mds <= 1e-12 and worst_gap <= 1e-12
    report(7, ok, f"k={K_DESK}: max |MDS - (1 - M/n)| = {worst_mds:.3g}, max |LT - MDS - E[delta]/k| = "
                  f"{worst_gap:.3g} (tol 1e-12)")
    assert ok


def test_criterion_8_full_scale(report, tmp_path, desk):
    dist, curve, e_delta = desk
    # custom distribution path: a file-loaded code reproduces the in-memory analysis
    path = tmp_path / "rsd.txt"
    dist.to_file(path)
    loaded = DegreeDistribution.from_file(path)
    e_file = average_overhead(failure_curve(K_DESK, loaded))
    file_ok = abs(e_file - e_delta) <= 1e-9
    if os.environ.get("LTCACHE_FULL_SCALE") != "1":
        k = 10_000
        loose = robust_soliton(k, 0.05, 3.0, strict=False)
        mean, se, _ = monte_carlo_overhead(k, loose, 400, master_seed=8)
        report(8, file_ok, f"custom-distribution file path reproduces E[delta] ({e_file:.6f}); full-scale k=10000 "
                           f"sampled run is opt-in (LTCACHE_FULL_SCALE=1); quick sampled E[delta] at k=10000 with "
                           f"c=0.05, delta=3: {mean:.1f} +/- {se:.1f} vs 431.95")
        assert file_ok
        return
    k = 10_000
    src = os.environ.get("LTCACHE_FULL_SCALE_DIST")
    ref = DegreeDistribution.from_file(src) if src else robust_soliton(k, 0.05, 3.0, strict=False)
    # the exact recursion is out of reach at this k; the sampled mean has a standard error near 0.3%
    trials = int(os.environ.get("LTCACHE_FULL_SCALE_TRIALS", "20000"))
    e, se, _ = monte_carlo_overhead(k, ref, trials, master_seed=10_000)
    ok = abs(e - 431.95) <= 0.01 * 431.95
    report(8, ok and file_ok, f"k=10000 {ref.name}: sampled E[delta] = {e:.2f} +/- {se:.2f} "
                              f"({trials} decodes) vs 431.95 +/- 1%")
    assert ok and file_ok


def test_criterion_9_gap_shrinks_with_skew(report, desk):
    _, curve, e_delta = desk
    gaps = []
    for i in range(13):
        sys_ = CacheSystem.zipf(100, K_DESK, 10, i / 10, REFERENCE_CONNECTIVITY)
        place = optimize_integer(PlacementProblem(sys_, e_delta)).placement
        rep = backhaul_report(sys_, place, curve)
        gaps.append(rep["rate_normalized"] - rep["mds_rate_normalized"])
    ok = all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    report(9, ok, f"M=10, n=100, k={K_DESK}, alpha 0..1.2: LT-MDS gap {gaps[0]:.4f} -> {gaps[-1]:.4f}, "
                  f"non-increasing = {ok}")
    assert ok
