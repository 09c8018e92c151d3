"""Caching-system probability model.

A request picks file ``j`` with probability ``theta[j]`` and is covered by
``h`` transmitters with probability ``gamma[h-1]``; the caches then supply
``z = w[j] * h`` LT symbols and the master node tops up the rest over the
backhaul. File and connectivity indices are 0-based in arrays.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels
from ._rng import as_seed
from .analysis import FailureCurve
from .errors import BudgetError, InvalidParameterError

__all__ = [
    "CacheSystem",
    "Placement",
    "SymbolSupplyPmf",
    "GridGeometry",
    "ConnectivityEstimate",
    "REFERENCE_CONNECTIVITY",
    "zipf_popularity",
    "derive_connectivity",
    "symbol_supply_pmf",
    "backhaul_pmf_given_z",
    "expected_backhaul",
    "expected_backhaul_direct",
    "backhaul_upper_bound",
    "mds_expected_backhaul",
    "backhaul_report",
]

_SUM_TOL = 1e-12

# reference connectivity vector; 60 m coverage disks on an 80 m square grid reproduce it
REFERENCE_CONNECTIVITY = (0.2907, 0.6591, 0.0430, 0.0072)


def zipf_popularity(n: int, alpha: float) -> np.ndarray:
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    if alpha < 0:
        raise InvalidParameterError("alpha must be >= 0")
    w = np.arange(1, n + 1, dtype=np.float64) ** -float(alpha)
    return w / math.fsum(w)


def _normalize_prob(vec, what: str, tol: float) -> np.ndarray:
    v = np.array(vec, dtype=np.float64).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v < 0):
        raise InvalidParameterError(f"{what} must be a non-empty vector of non-negative numbers")
    total = math.fsum(v)
    if abs(total - 1.0) > tol:
        raise InvalidParameterError(f"{what} sums to {total!r}, not 1")
    v = v / total
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class CacheSystem:
    """One scenario: ``n`` files of ``k`` symbols, caches of ``M`` files."""

    n: int
    k: int
    M: float
    theta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise InvalidParameterError("n and k must be >= 1")
        if not 0 <= self.M <= self.n:
            raise InvalidParameterError(f"M={self.M} must lie in [0, n={self.n}]")
        budget = self.M * self.k
        if abs(budget - round(budget)) > 1e-9:
            raise InvalidParameterError("M * k must be an integer number of symbols")
        theta = _normalize_prob(self.theta, "theta", _SUM_TOL)
        if theta.size != self.n:
            raise InvalidParameterError(f"theta has {theta.size} entries, expected n={self.n}")
        if np.any(np.diff(theta) > 1e-15):
            raise InvalidParameterError("theta must be non-increasing in file index")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gamma", _normalize_prob(self.gamma, "gamma", _SUM_TOL))

    @classmethod
    def zipf(cls, n: int, k: int, M: float, alpha: float, gamma=(1.0,)) -> CacheSystem:
        return cls(n, k, M, zipf_popularity(n, alpha), np.asarray(gamma, dtype=np.float64))

    @property
    def budget(self) -> int:
        return int(round(self.M * self.k))

    @property
    def h_values(self) -> np.ndarray:
        return np.arange(1, self.gamma.size + 1)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.n, self.k], dtype=np.int64).tobytes())
        h.update(np.float64(self.M).tobytes())
        h.update(self.theta.tobytes())
        h.update(self.gamma.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Placement:
    """Symbols of each file stored in every transmitter."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w).ravel()
        if w.size == 0:
            raise InvalidParameterError("placement is empty")
        if not np.all(np.isfinite(w)) or np.any(np.rint(w) != w):
            raise InvalidParameterError("placement entries must be integers")
        w = w.astype(np.int64)
        if np.any(w < 0):
            raise InvalidParameterError("placement entries must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, sys: CacheSystem) -> Placement:
        if sys.budget % sys.n:
            raise InvalidParameterError("uniform placement needs n to divide M * k")
        return cls(np.full(sys.n, sys.budget // sys.n))

    def check(self, sys: CacheSystem, exact_budget: bool = True) -> None:
        if self.w.size != sys.n:
            raise InvalidParameterError(f"placement has {self.w.size} entries, expected n={sys.n}")
        if exact_budget and int(self.w.sum()) != sys.budget:
            raise BudgetError(f"placement stores {int(self.w.sum())} symbols, budget is {sys.budget}")

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["file_index", "w"])
            for j, v in enumerate(self.w, start=1):
                wr.writerow([j, int(v)])

    @classmethod
    def read_csv(cls, path) -> Placement:
        with Path(path).open() as fh:
            rows = sorted(csv.DictReader(fh), key=lambda r: int(r["file_index"]))
        return cls(np.array([int(r["w"]) for r in rows]))


@dataclass(frozen=True)
class SymbolSupplyPmf:
    """Distribution of the number of cached symbols a request collects."""

    z: np.ndarray
    p: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(a): float(b) for a, b in zip(self.z, self.p)}

    def __getitem__(self, z: int) -> float:
        i = np.searchsorted(self.z, z)
        if i < self.z.size and self.z[i] == z:
            return float(self.p[i])
        return 0.0


def symbol_supply_pmf(sys: CacheSystem, place: Placement) -> SymbolSupplyPmf:
    place.check(sys, exact_budget=False)
    zs = np.multiply.outer(place.w, sys.h_values).ravel()
    ps = np.multiply.outer(sys.theta, sys.gamma).ravel()
    keep = ps > 0
    zs, ps = zs[keep], ps[keep]
    uz, inv = np.unique(zs, return_inverse=True)
    acc = [[] for _ in uz]
    for i, p in zip(inv, ps):
        acc[i].append(p)
    return SymbolSupplyPmf(uz, np.array([math.fsum(a) for a in acc]))


def backhaul_pmf_given_z(curve: FailureCurve, k: int, z: int, t: int) -> float:
    """P(T = t | Z = z): ``t`` backhaul symbols complete decoding after ``z`` cached ones."""
    if z < 0:
        raise InvalidParameterError("z must be >= 0")
    if t < 0:
        return 0.0
    if z > k and t == 0:
        return 1.0 - curve.at(z - k)
    delta = z - k + t
    return curve.at(delta - 1) - curve.at(delta)


def _check_curve(sys: CacheSystem, curve: FailureCurve) -> None:
    if curve.k != sys.k:
        raise InvalidParameterError(f"failure curve is for k={curve.k}, system has k={sys.k}")


def expected_backhaul(sys: CacheSystem, place: Placement, curve: FailureCurve) -> float:
    """Mean backhaul symbols per request from the closed form.

    ``E[T] = E[D] + sum_{z<=k} (k-z) P_Z(z) - sum_{z>k} P_Z(z) sum_{d<z-k} P_F(d)``
    with ``P_F`` taken as 0 past the end of ``curve``.
    """
    _check_curve(sys, curve)
    pmf = symbol_supply_pmf(sys, place)
    cum = curve.cumulative()
    e_delta = float(cum[-1])
    k = sys.k
    terms = [e_delta]
    for z, p in zip(pmf.z, pmf.p):
        if z <= k:
            terms.append((k - z) * p)
        else:
            terms.append(-p * float(cum[min(z - k, len(cum) - 1)]))
    return math.fsum(terms)


def expected_backhaul_direct(sys: CacheSystem, place: Placement, curve: FailureCurve) -> float:
    """Same quantity as :func:`expected_backhaul`, summing ``t * P(t | z) * P_Z(z)`` term by term."""
    _check_curve(sys, curve)
    pmf = symbol_supply_pmf(sys, place)
    k = sys.k
    terms = []
    for z, p in zip(pmf.z, pmf.p):
        t_max = max(0, k - int(z) + curve.delta_max + 1)
        for t in range(1, t_max + 1):
            terms.append(t * backhaul_pmf_given_z(curve, k, int(z), t) * p)
    return math.fsum(terms)


def _shortfall(sys: CacheSystem, place: Placement) -> float:
    place.check(sys, exact_budget=False)
    short = np.maximum(0, sys.k - np.multiply.outer(place.w, sys.h_values))
    return math.fsum((np.multiply.outer(sys.theta, sys.gamma) * short).ravel())


def backhaul_upper_bound(sys: CacheSystem, place: Placement, e_delta: float) -> float:
    """``E[D] + sum_j theta_j sum_h gamma_h max(0, k - w_j h)``; never below :func:`expected_backhaul`."""
    return float(e_delta) + _shortfall(sys, place)


def mds_expected_backhaul(sys: CacheSystem, place: Placement) -> float:
    """Backhaul of an MDS code, which decodes from any ``k`` symbols."""
    return _shortfall(sys, place)


def backhaul_report(sys: CacheSystem, place: Placement, curve: FailureCurve) -> dict:
    et = expected_backhaul(sys, place, curve)
    e_delta = float(curve.cumulative()[-1])
    tup = backhaul_upper_bound(sys, place, e_delta)
    mds = mds_expected_backhaul(sys, place)
    k = sys.k
    return {
        "expected_backhaul": et,
        "upper_bound": tup,
        "mds_backhaul": mds,
        "rate_normalized": et / k,
        "upper_bound_normalized": tup / k,
        "mds_rate_normalized": mds / k,
        "e_delta": e_delta,
        "curve_truncated": curve.truncated,
        "tail_treated_as_zero_after_delta": curve.delta_max,
    }


@dataclass(frozen=True)
class GridGeometry:
    """Transmitters on a square grid of pitch ``spacing``, each covering a disk of ``radius``."""

    radius: float = 60.0
    spacing: float = 45.0

    def __post_init__(self):
        if not (self.radius > 0 and self.spacing > 0):
            raise InvalidParameterError("radius and spacing must be positive")


@dataclass
class ConnectivityEstimate:
    gamma: np.ndarray
    counts: np.ndarray
    samples: int
    zero_coverage_fraction: float
    seed: int
    meta: dict = field(default_factory=dict)

    def stderr(self) -> np.ndarray:
        covered = self.samples * (1.0 - self.zero_coverage_fraction)
        return np.sqrt(self.gamma * (1.0 - self.gamma) / max(covered, 1.0))

    def to_json(self) -> str:
        return json.dumps(
            {
                "gamma": [float(g) for g in self.gamma],
                "counts": [int(c) for c in self.counts],
                "samples": self.samples,
                "zero_coverage_fraction": self.zero_coverage_fraction,
                "seed": self.seed,
                **self.meta,
            },
            indent=2,
            sort_keys=True,
        )


_CONNECTIVITY_CHUNK = 1 << 20


def derive_connectivity(geom: GridGeometry, samples: int, master_seed: int = 0) -> ConnectivityEstimate:
    """Monte Carlo estimate of the number of transmitters covering a uniform user.

    Users are dropped uniformly in one grid cell, which represents the whole
    infinite grid by symmetry. Users with no transmitter in range are
    excluded from ``gamma`` and reported in ``zero_coverage_fraction``.
    """
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    seed = as_seed(master_seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    reach = int(math.ceil(geom.radius / geom.spacing))
    hist = np.zeros(1, np.int64)
    done = 0
    while done < samples:
        n = min(_CONNECTIVITY_CHUNK, samples - done)
        xy = rng.random((2, n)) * geom.spacing
        cnt = kernels.coverage_counts(xy[0], xy[1], float(geom.radius), float(geom.spacing), reach)
        b = np.bincount(cnt)
        if b.size > hist.size:
            b[: hist.size] += hist
            hist = b
        else:
            hist[: b.size] += b
        done += n
    zero = int(hist[0])
    covered = samples - zero
    counts = hist[1:]
    gamma = counts / covered if covered else np.zeros(0)
    return ConnectivityEstimate(
        gamma=gamma,
        counts=counts,
        samples=samples,
        zero_coverage_fraction=zero / samples,
        seed=seed,
        meta={
            "radius": geom.radius,
            "spacing": geom.spacing,
            "rng": "numpy.PCG64",
            "zero_coverage_excluded": zero > 0,
        },
    )
