import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltcache import (
    BudgetError,
    CacheSystem,
    GridGeometry,
    InvalidParameterError,
    Placement,
    average_overhead,
    backhaul_upper_bound,
    derive_connectivity,
    expected_backhaul,
    failure_curve,
    ideal_soliton,
    mds_expected_backhaul,
    point_mass,
    robust_soliton,
    symbol_supply_pmf,
)
from ltcache.netmodel import (
    backhaul_pmf_given_z,
    backhaul_report,
    expected_backhaul_direct,
    zipf_popularity,
)


@pytest.fixture(scope="module")
def ones_curve():
    return failure_curve(2, point_mass(1))


@pytest.fixture(scope="module")
def small_curves():
    return {k: failure_curve(k, robust_soliton(k, 0.1, 0.5)) for k in (3, 5, 8, 12)}


def test_zipf():
    assert zipf_popularity(4, 0).tolist() == [0.25] * 4
    np.testing.assert_allclose(zipf_popularity(2, 1), [2 / 3, 1 / 3], rtol=1e-15)
    direct = 1.0 / math.fsum(j ** -0.8 for j in range(1, 101))
    assert zipf_popularity(100, 0.8)[0] == pytest.approx(direct, rel=1e-14)
    assert zipf_popularity(100, 0.8)[0] == pytest.approx(0.122934, abs=1e-6)


def test_cache_system_validation():
    with pytest.raises(InvalidParameterError):
        CacheSystem(2, 10, 3, [0.5, 0.5], [1.0])
    with pytest.raises(InvalidParameterError):
        CacheSystem(2, 10, 1, [0.3, 0.7], [1.0])
    with pytest.raises(InvalidParameterError):
        CacheSystem(2, 10, 1, [0.5, 0.4], [1.0])
    with pytest.raises(InvalidParameterError):
        CacheSystem(2, 10, 0.05, [0.5, 0.5], [1.0])
    assert CacheSystem(2, 10, 0.5, [0.5, 0.5], [1.0]).budget == 5


def test_placement_validation(tmp_path):
    s = CacheSystem(2, 10, 1, [0.5, 0.5], [1.0])
    with pytest.raises(InvalidParameterError):
        Placement(np.array([1.5, 2]))
    with pytest.raises(InvalidParameterError):
        Placement(np.array([-1, 11]))
    with pytest.raises(BudgetError):
        Placement(np.array([3, 3])).check(s)
    p = Placement(np.array([7, 3]))
    p.write_csv(tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text() == "file_index,w\n1,7\n2,3\n"
    assert Placement.read_csv(tmp_path / "w.csv").w.tolist() == [7, 3]


def test_supply_pmf_examples():
    s1 = CacheSystem(1, 5, 1, [1.0], [1.0])
    assert symbol_supply_pmf(s1, Placement(np.array([5]))).as_dict() == {5: 1.0}
    s2 = CacheSystem(2, 3, 2, [0.5, 0.5], [1.0])
    assert symbol_supply_pmf(s2, Placement(np.array([2, 4]))).as_dict() == {2: 0.5, 4: 0.5}
    s3 = CacheSystem(2, 3, 2, [0.5, 0.5], [0.5, 0.5])
    assert symbol_supply_pmf(s3, Placement(np.array([2, 4]))).as_dict() == {2: 0.25, 4: 0.5, 8: 0.25}


def test_backhaul_pmf_examples(ones_curve):
    k = 2
    assert backhaul_pmf_given_z(ones_curve, k, k, 0) == pytest.approx(1 - ones_curve.pf[0])
    assert all(backhaul_pmf_given_z(ones_curve, k, 0, t) == 0.0 for t in range(k))
    assert backhaul_pmf_given_z(ones_curve, k, 2, 1) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("z", [0, 1, 2, 3, 6])
def test_backhaul_pmf_sums_to_one(ones_curve, z):
    total = math.fsum(backhaul_pmf_given_z(ones_curve, 2, z, t) for t in range(0, 200))
    assert total == pytest.approx(1.0, abs=ones_curve.epsilon_tail)


def test_expected_backhaul_examples(ones_curve):
    e = average_overhead(ones_curve)
    s = CacheSystem(1, 2, 1, [1.0], [1.0])
    # placements that do not use the whole budget are valid inputs to the rate formulas
    assert expected_backhaul(s, Placement(np.array([0])), ones_curve) == pytest.approx(e + 2, abs=1e-12)
    assert expected_backhaul(s, Placement(np.array([2])), ones_curve) == pytest.approx(e, abs=1e-12)
    w4 = Placement(np.array([4]))
    assert expected_backhaul(s, w4, ones_curve) == pytest.approx(0.25, abs=1e-6)
    assert backhaul_upper_bound(s, w4, e) == pytest.approx(1.0, abs=1e-6)
    assert backhaul_upper_bound(s, Placement(np.array([0])), e) == pytest.approx(
        expected_backhaul(s, Placement(np.array([0])), ones_curve), abs=1e-12
    )


def test_mds_examples():
    s = CacheSystem(3, 10, 3, [1 / 3] * 3, [1.0])
    assert mds_expected_backhaul(s, Placement(np.array([10, 10, 10]))) == 0.0
    assert mds_expected_backhaul(s, Placement(np.array([0, 0, 0]))) == 10.0
    for M in range(0, 5):
        s = CacheSystem(4, 8, M, [0.25] * 4, [1.0])
        w = Placement(np.full(4, 2 * M))
        assert mds_expected_backhaul(s, w) / 8 == pytest.approx(1 - M / 4, abs=1e-12)


def _random_instance(draw_seed, curves):
    rng = np.random.default_rng(draw_seed)
    k = int(rng.choice(list(curves)))
    n = int(rng.integers(1, 6))
    theta = np.sort(rng.random(n))[::-1]
    theta /= theta.sum()
    hmax = int(rng.integers(1, 5))
    gamma = rng.random(hmax)
    gamma /= gamma.sum()
    w = rng.integers(0, 3 * k, size=n)
    sys_ = CacheSystem(n, k, 0, theta, gamma)
    return sys_, Placement(w), curves[k]


@given(st.integers(0, 2**32))
def test_closed_form_matches_direct_sum(small_curves, seed):
    sys_, place, curve = _random_instance(seed, small_curves)
    assert expected_backhaul(sys_, place, curve) == pytest.approx(
        expected_backhaul_direct(sys_, place, curve), abs=1e-9
    )


@given(st.integers(0, 2**32))
def test_bound_ordering(small_curves, seed):
    sys_, place, curve = _random_instance(seed, small_curves)
    et = expected_backhaul(sys_, place, curve)
    assert backhaul_upper_bound(sys_, place, average_overhead(curve)) >= et - 1e-12
    assert et >= mds_expected_backhaul(sys_, place) - 1e-12


@given(st.integers(0, 2**32))
def test_bound_tight_without_overflow(small_curves, seed):
    sys_, place, curve = _random_instance(seed, small_curves)
    hmax = sys_.gamma.size
    w = np.minimum(place.w, sys_.k // hmax)
    place = Placement(w)
    assert backhaul_upper_bound(sys_, place, average_overhead(curve)) == pytest.approx(
        expected_backhaul(sys_, place, curve), abs=1e-12
    )


@given(st.integers(0, 2**32), st.integers(0, 4))
def test_more_cache_never_hurts(small_curves, seed, j):
    sys_, place, curve = _random_instance(seed, small_curves)
    j %= sys_.n
    w = place.w.copy()
    base = expected_backhaul(sys_, place, curve)
    w[j] += 1
    assert expected_backhaul(sys_, Placement(w), curve) <= base + 1e-12


@given(st.integers(0, 2**32))
def test_supply_mass(small_curves, seed):
    sys_, place, _ = _random_instance(seed, small_curves)
    assert math.fsum(symbol_supply_pmf(sys_, place).p) == pytest.approx(1.0, abs=1e-12)


def test_report_fields(small_curves):
    sys_ = CacheSystem.zipf(3, 8, 1, 0.5, [0.5, 0.5])
    rep = backhaul_report(sys_, Placement(np.array([4, 3, 1])), small_curves[8])
    assert rep["rate_normalized"] == pytest.approx(rep["expected_backhaul"] / 8)
    assert rep["upper_bound"] >= rep["expected_backhaul"] >= rep["mds_backhaul"]


# --- connectivity


def test_connectivity_disjoint_disks():
    est = derive_connectivity(GridGeometry(radius=10, spacing=100), 100_000, 1)
    assert est.gamma.tolist() == [1.0]
    assert est.zero_coverage_fraction > 0.9


def test_connectivity_huge_radius():
    est = derive_connectivity(GridGeometry(radius=500, spacing=10), 20_000, 2)
    assert est.gamma[0] == 0.0
    assert np.argmax(est.gamma) > 100


def test_connectivity_deterministic_and_normalized():
    g = GridGeometry(60, 80)
    a = derive_connectivity(g, 300_000, 5)
    b = derive_connectivity(g, 300_000, 5)
    assert np.array_equal(a.counts, b.counts)
    assert a.gamma.sum() == pytest.approx(1.0, abs=1e-12)
    assert '"rng": "numpy.PCG64"' in a.to_json()


def test_connectivity_matches_geometry():
    # one disk per cell with radius <= spacing / 2: covered fraction is the disk area over the cell area
    est = derive_connectivity(GridGeometry(radius=20, spacing=50), 1_000_000, 3)
    assert est.gamma.tolist() == [1.0]
    assert 1 - est.zero_coverage_fraction == pytest.approx(math.pi * 400 / 2500, abs=3e-3)


def test_grid_geometry_validation():
    with pytest.raises(InvalidParameterError):
        GridGeometry(0, 10)
