"""End-to-end delivery simulation with the real peeling decoder.

Trial ``i`` of a run seeded with ``master_seed`` draws everything from
``hash2(master_seed, i)``: stream index 0 picks the file and the number of
covering transmitters, stream index ``s >= 1`` is the ``s``-th LT symbol the
user receives (cached symbols first, then backhaul symbols). A trial's
outcome therefore does not depend on how many other trials run.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import BACKEND, kernels
from ._rng import ALGORITHM, as_seed, hash2
from .errors import InvalidParameterError, RunawayTrialError
from .fountain import DecoderGraph, DegreeDistribution, SourceBlock, encode_symbol
from .netmodel import CacheSystem, Placement

__all__ = ["DeliveryOutcome", "RateEstimate", "simulate_request", "estimate_rate", "replay_request"]


@dataclass
class DeliveryOutcome:
    file_index: int  # 1-based
    h: int
    z: int
    t: int
    trace: list[int] | None = None  # inputs resolved after each received symbol


@dataclass
class RateEstimate:
    mean: float
    stderr: float
    histogram: np.ndarray
    trials: int
    seed: int
    records: dict = field(default_factory=dict, repr=False)

    def summary(self, sys: CacheSystem | None = None) -> dict:
        out = {
            "mean": self.mean,
            "stderr": self.stderr,
            "trials": self.trials,
            "seed": self.seed,
            "rng": ALGORITHM,
            "backend": BACKEND,
        }
        if sys is not None:
            out["scenario_digest"] = sys.digest()
            out["mean_normalized"] = self.mean / sys.k
            out["stderr_normalized"] = self.stderr / sys.k
        return out

    def write_records(self, path) -> None:
        r = self.records
        with Path(path).open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["trial", "j", "h", "z", "t"])
            for row in zip(range(self.trials), r["j"] + 1, r["h"], r["z"], r["t"]):
                wr.writerow([int(v) for v in row])


def _prepare(sys: CacheSystem, place: Placement, dist: DegreeDistribution):
    # only symbol counts matter here, so over- or under-filled caches are allowed
    place.check(sys, exact_budget=False)
    dist.check_block(sys.k)
    theta_cdf = np.cumsum(sys.theta)
    theta_cdf[-1] = 1.0
    gamma_cdf = np.cumsum(sys.gamma)
    gamma_cdf[-1] = 1.0
    return theta_cdf, gamma_cdf, np.ascontiguousarray(place.w, dtype=np.int64)


def _run(sys, place, dist, master_seed, first, n, max_extra):
    theta_cdf, gamma_cdf, w = _prepare(sys, place, dist)
    out = {key: np.empty(n, np.int64) for key in ("j", "h", "z", "t")}
    kernels.deliver_trials(
        sys.k, dist.cdf, theta_cdf, gamma_cdf, w, np.uint64(master_seed), first, n, max_extra,
        out["j"], out["h"], out["z"], out["t"],
    )
    return out


def simulate_request(sys: CacheSystem, place: Placement, dist: DegreeDistribution,
                     master_seed: int, request_index: int, max_extra: int | None = None,
                     trace: bool = False) -> DeliveryOutcome:
    """One request: cached symbols first, then backhaul symbols one at a time until decoding succeeds."""
    if max_extra is None:
        max_extra = 10 * sys.k
    seed = as_seed(master_seed)
    rec = _run(sys, place, dist, seed, int(request_index), 1, max_extra)
    j, h, z, t = (int(rec[key][0]) for key in ("j", "h", "z", "t"))
    if t < 0:
        raise RunawayTrialError(
            f"request {request_index}: no decode after {z} cached + {max_extra} backhaul symbols "
            f"(file {j + 1}, h={h}); check the degree distribution"
        )
    out = DeliveryOutcome(j + 1, h, z, t)
    if trace:
        out.trace = replay_request(sys.k, dist, seed, int(request_index), z + t)
    return out


def replay_request(k: int, dist: DegreeDistribution, master_seed: int, request_index: int,
                   n_symbols: int) -> list[int]:
    """Rebuild a request's symbol stream with the object-level decoder.

    Returns the number of resolved inputs after each received symbol. Uses a
    one-byte zero block: only the graph matters for the decode decision.
    """
    trial_seed = hash2(as_seed(master_seed), request_index)
    block = SourceBlock((b"\x00",) * k)
    graph = DecoderGraph(k)
    trace = []
    for s in range(1, n_symbols + 1):
        graph.add(encode_symbol(block, dist, s, master_seed=trial_seed))
        graph.peel()
        trace.append(len(graph.recovered))
    return trace


def estimate_rate(sys: CacheSystem, place: Placement, dist: DegreeDistribution, trials: int,
                  master_seed: int = 0, threads: int = 1, max_extra: int | None = None,
                  chunk: int = 8192) -> RateEstimate:
    """Sample mean and standard error of the backhaul symbols per request."""
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if max_extra is None:
        max_extra = 10 * sys.k
    seed = as_seed(master_seed)
    starts = list(range(0, trials, chunk))

    def job(first):
        return _run(sys, place, dist, seed, first, min(chunk, trials - first), max_extra)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(first) for first in starts]
    rec = {key: np.concatenate([p[key] for p in parts]) for key in ("j", "h", "z", "t")}
    bad = np.flatnonzero(rec["t"] < 0)
    if bad.size:
        i = int(bad[0])
        raise RunawayTrialError(
            f"{bad.size} trial(s) exceeded {max_extra} backhaul symbols; first is trial {i} "
            f"(file {int(rec['j'][i]) + 1}, h={int(rec['h'][i])}, z={int(rec['z'][i])})"
        )
    t = rec["t"]
    # fixed-order reduction keeps the mean bit-identical across thread counts
    mean = math.fsum(t.tolist()) / trials
    var = math.fsum(((t - mean) ** 2).tolist()) / (trials - 1) if trials > 1 else 0.0
    return RateEstimate(
        mean=mean,
        stderr=math.sqrt(var / trials),
        histogram=np.bincount(t),
        trials=trials,
        seed=seed,
        records=rec,
    )
