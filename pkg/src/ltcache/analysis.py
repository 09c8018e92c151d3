"""Exact finite-length failure analysis of the LT peeling decoder.

The decoder state with ``u`` unresolved inputs is the pair (cloud size,
ripple size). One decoding stage consumes a ripple symbol; every other
ripple symbol shares its input with probability ``1/u`` and is discarded,
and every cloud symbol independently drops to degree one with the release
probability ``p_u`` returned by :func:`release_probabilities`. Two kernels
evaluate the recursion: a forward pass for a single receive count ``m``
(used by :func:`failure_probability`) and a backward pass that yields the
whole curve at once (used by :func:`failure_curve`).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from ._backend import kernels
from ._rng import as_seed
from .errors import InstanceTooLargeError, InvalidParameterError, RunawayTrialError, TruncatedCurveError
from .fountain import DegreeDistribution, EncodedSymbol, peel_decode

__all__ = [
    "FailureCurve",
    "release_probabilities",
    "state_trajectory",
    "failure_probability",
    "failure_curve",
    "average_overhead",
    "overhead_tail_bias",
    "brute_force_failure",
    "monte_carlo_failure",
    "monte_carlo_overhead",
]

DEFAULT_EPSILON_TAIL = 1e-6
# backward tables beyond this many cells switch failure_curve to per-delta forward passes
_BACKWARD_MAX_CELLS = 12_000_000


def _log_hyper(u, k, d, j, lck):
    """log P(a uniform d-subset of k inputs has exactly j members among u given ones)."""
    ku = k - u
    dj = d - j
    ok = (dj >= 0) & (dj <= ku) & (j <= u) & (j >= 0)
    out = np.full(d.shape, -np.inf)
    if j > u:
        return out
    base = gammaln(u + 1.0) - gammaln(j + 1.0) - gammaln(u - j + 1.0) + gammaln(ku + 1.0)
    dv = dj[ok]
    out[ok] = base - gammaln(dv + 1.0) - gammaln(ku - dv + 1.0) - lck[ok]
    return out


def release_probabilities(k: int, dist: DegreeDistribution) -> np.ndarray:
    """Probability that a cloud symbol drops to degree one at stage ``u``.

    Index ``u`` of the result (2 <= u <= k) holds
    ``P(|N & U| = 2 and x in N | |N & U| >= 2)`` for a symbol with neighbor
    set ``N``, unresolved set ``U`` of size ``u`` and resolved input ``x``.
    """
    dist.check_block(k)
    rel = np.zeros(k + 1)
    deg = np.arange(1, dist.d_max + 1, dtype=np.float64)
    sel = (dist.probs > 0) & (deg >= 2)
    if not sel.any():
        return rel
    d = deg[sel]
    w = dist.probs[sel]
    lck = gammaln(k + 1.0) - gammaln(d + 1.0) - gammaln(k - d + 1.0)
    for u in range(2, k + 1):
        h0 = np.exp(_log_hyper(u, k, d, 0, lck))
        h1 = np.exp(_log_hyper(u, k, d, 1, lck))
        h2 = np.exp(_log_hyper(u, k, d, 2, lck))
        tail = 1.0 - h0 - h1
        small = tail < 1e-2
        if small.any():
            # 1 - h0 - h1 cancels badly here; sum the hypergeometric tail directly
            ds = d[small]
            term = h2[small].copy()
            acc = term.copy()
            ku = k - u
            j = 2
            top = min(u, int(ds.max()))
            while j < top:
                term = term * (u - j) * np.maximum(ds - j, 0.0) / ((j + 1.0) * np.maximum(ku - ds + j + 1.0, 1.0))
                acc += term
                j += 1
                if not np.any(term > 1e-20 * acc):
                    break
            tail[small] = acc
        den = float(np.dot(w, tail))
        if den > 0:
            rel[u] = min(1.0, (2.0 / u) * float(np.dot(w, h2)) / den)
    return rel


def _check_m(k: int, m: int) -> None:
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if m < 0:
        raise InvalidParameterError("m must be >= 0")


def state_trajectory(k: int, dist: DegreeDistribution, m: int, prune: float = 0.0):
    """Forward recursion bookkeeping for ``m`` received symbols.

    Returns ``(stage_fail, stage_mass, pruned)`` indexed by the number of
    unresolved inputs ``u``: failure mass removed at stage ``u`` and the
    mass that is still decoding afterwards.
    """
    _check_m(k, m)
    dist.check_block(k)
    rel = release_probabilities(k, dist)
    q1 = float(dist.probs[0])
    return kernels.forward_failure(k, m, q1, rel, float(prune))


def failure_probability(k: int, dist: DegreeDistribution, m: int, prune: float = 0.0) -> float:
    """Probability that peeling ``m`` i.i.d. LT symbols fails to recover ``k`` inputs."""
    _check_m(k, m)
    dist.check_block(k)
    if m < k:
        return 1.0
    stage_fail, _, _ = state_trajectory(k, dist, m, prune)
    return min(1.0, math.fsum(stage_fail[1:]))


@dataclass
class FailureCurve:
    """``pf[delta]`` = failure probability with ``k + delta`` received symbols."""

    k: int
    pf: np.ndarray
    epsilon_tail: float
    truncated: bool = False
    dist_digest: str = ""
    dist_name: str = ""
    method: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def delta_max(self) -> int:
        return len(self.pf) - 1

    def at(self, delta: int) -> float:
        """P_F with the conventions 1 below zero overhead and 0 past ``delta_max``."""
        if delta < 0:
            return 1.0
        if delta > self.delta_max:
            return 0.0
        return float(self.pf[delta])

    def cumulative(self) -> np.ndarray:
        """``out[i] = sum(pf[:i])`` with ``out[0] = 0``, compensated."""
        out = np.zeros(len(self.pf) + 1)
        acc = 0.0
        comp = 0.0
        for i, v in enumerate(self.pf):
            y = v - comp
            t = acc + y
            comp = (t - acc) - y
            acc = t
            out[i + 1] = acc
        return out

    def metadata(self) -> dict:
        return {
            "k": self.k,
            "delta_max": self.delta_max,
            "epsilon_tail": self.epsilon_tail,
            "truncated": self.truncated,
            "distribution": self.dist_name,
            "distribution_digest": self.dist_digest,
            "method": self.method,
            "tail_bias_estimate": overhead_tail_bias(self),
            **self.extra,
        }

    def write(self, csv_path, json_path=None) -> None:
        csv_path = Path(csv_path)
        with csv_path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["delta", "pf"])
            for delta, v in enumerate(self.pf):
                wr.writerow([delta, f"{v:.17g}"])
        if json_path is None:
            json_path = csv_path.with_suffix(".json")
        Path(json_path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, csv_path, json_path=None) -> FailureCurve:
        csv_path = Path(csv_path)
        with csv_path.open() as fh:
            rows = list(csv.DictReader(fh))
        pf = np.array([float(r["pf"]) for r in rows])
        if json_path is None:
            json_path = csv_path.with_suffix(".json")
        meta = json.loads(Path(json_path).read_text())
        return cls(
            k=int(meta["k"]),
            pf=pf,
            epsilon_tail=float(meta["epsilon_tail"]),
            truncated=bool(meta["truncated"]),
            dist_digest=meta.get("distribution_digest", ""),
            dist_name=meta.get("distribution", ""),
            method=meta.get("method", ""),
        )


def _curve_backward(k, dist, delta_cap, rel):
    N = k + delta_cap
    table = kernels.backward_table(k, N, rel)
    q = 1.0 - float(dist.probs[0])
    buf = np.empty(N + 2)
    pf = np.empty(delta_cap + 1)
    for delta in range(delta_cap + 1):
        m = k + delta
        lo, hi = kernels.binom_window(m, q, buf)
        cs = np.arange(lo, hi + 1)
        pf[delta] = min(1.0, math.fsum(buf[lo:hi + 1] * table[cs, m - cs]))
    return pf


def failure_curve(k: int, dist: DegreeDistribution, epsilon_tail: float = DEFAULT_EPSILON_TAIL,
                  delta_cap: int | None = None, method: str = "auto",
                  prune: float = 0.0) -> FailureCurve:
    """Failure probabilities for overheads 0, 1, ... until one drops below ``epsilon_tail``.

    The curve stops at ``delta_cap`` if the threshold is not
    reached, in which case ``truncated`` is set. Without an explicit cap the
    search starts at ``max(4k, 64)`` and doubles up to ``max(64k, 4096)``:
    the uncovered-input floor keeps small blocks above ``epsilon_tail``
    well past ``2k``. ``method`` is ``"backward"``
    (one table pass for every overhead), ``"forward"`` (one pass per
    overhead, lower memory) or ``"auto"``.
    """
    if not 0.0 < epsilon_tail < 1.0:
        raise InvalidParameterError("epsilon_tail must lie in (0, 1)")
    if delta_cap is None:
        cap, limit = max(4 * k, 64), max(64 * k, 4096)
        while True:
            curve = failure_curve(k, dist, epsilon_tail, cap, method, prune)
            if not curve.truncated or cap >= limit:
                curve.extra["delta_cap_auto"] = True
                return curve
            cap = min(2 * cap, limit)
    if delta_cap < 0:
        raise InvalidParameterError("delta_cap must be >= 0")
    dist.check_block(k)
    if method == "auto":
        method = "backward" if (k + delta_cap + 1) ** 2 <= _BACKWARD_MAX_CELLS and prune == 0.0 else "forward"
    rel = release_probabilities(k, dist)
    if method == "backward":
        full = _curve_backward(k, dist, delta_cap, rel)
        below = np.flatnonzero(full < epsilon_tail)
        stop = int(below[0]) if below.size else delta_cap
        pf = full[: stop + 1].copy()
    elif method == "forward":
        q1 = float(dist.probs[0])
        vals = []
        for delta in range(delta_cap + 1):
            fail, _, _ = kernels.forward_failure(k, k + delta, q1, rel, float(prune))
            vals.append(min(1.0, math.fsum(fail[1:])))
            if vals[-1] < epsilon_tail:
                break
        pf = np.array(vals)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    # ensemble failure probability cannot grow with more symbols; clip round-off
    pf = np.minimum.accumulate(pf)
    truncated = not pf[-1] < epsilon_tail
    return FailureCurve(
        k=k,
        pf=pf,
        epsilon_tail=epsilon_tail,
        truncated=truncated,
        dist_digest=dist.digest(),
        dist_name=dist.name,
        method=method,
        extra={"delta_cap": delta_cap, "prune": prune},
    )


def overhead_tail_bias(curve: FailureCurve) -> float:
    """Geometric estimate of the mass of ``pf`` beyond ``delta_max``."""
    pf = curve.pf
    last = float(pf[-1])
    if last == 0.0:
        return 0.0
    if len(pf) >= 2 and 0.0 < pf[-1] < pf[-2]:
        ratio = float(pf[-1] / pf[-2])
        return last * ratio / (1.0 - ratio)
    return math.inf


def average_overhead(curve: FailureCurve) -> float:
    """Mean number of symbols beyond ``k`` needed to decode: the sum of ``pf``."""
    if curve.truncated:
        raise TruncatedCurveError(
            f"curve stops at delta={curve.delta_max} with pf={curve.pf[-1]:.3g} "
            f">= epsilon_tail={curve.epsilon_tail:g}"
        )
    return math.fsum(curve.pf)


def _multisets(weights, m):
    """Yield ``(support_mask, probability)`` for every multiset of ``m`` ordered draws.

    ``support_mask`` has bit ``i`` set when outcome ``i`` occurs at least once.
    """
    n = len(weights)
    logw = [math.log(w) for w in weights]
    logfact_m = math.lgamma(m + 1)

    def rec(i, remaining, mask, acc):
        if remaining == 0:
            yield mask, math.exp(logfact_m + acc)
            return
        if i == n - 1:
            yield mask | (1 << i), math.exp(logfact_m + acc + remaining * logw[i] - math.lgamma(remaining + 1))
            return
        yield from rec(i + 1, remaining, mask, acc)
        for cnt in range(1, remaining + 1):
            yield from rec(i + 1, remaining - cnt, mask | (1 << i),
                           acc + cnt * logw[i] - math.lgamma(cnt + 1))

    yield from rec(0, m, 0, 0.0)


def brute_force_failure(k: int, dist: DegreeDistribution, m: int,
                        max_outcomes: int = 10_000_000) -> float:
    """Exact failure probability by enumerating every multiset of received symbols.

    Each received symbol independently takes neighbor set ``S`` with
    probability ``Omega_{|S|} / C(k, |S|)``; every multiset is weighted by its
    multinomial probability and handed to :func:`peel_decode`.
    """
    _check_m(k, m)
    dist.check_block(k)
    if k > 6 or m > 10:
        raise InstanceTooLargeError("brute force is limited to k <= 6 and m <= 10")
    outcomes = []
    for d, p in enumerate(dist.probs, start=1):
        if p == 0.0:
            continue
        w = p / math.comb(k, d)
        for subset in itertools.combinations(range(1, k + 1), d):
            outcomes.append((subset, w))
    count = math.comb(len(outcomes) + m - 1, m)
    if count > max_outcomes:
        raise InstanceTooLargeError(f"{count} outcomes exceed the limit of {max_outcomes}")
    symbols = [EncodedSymbol(b"\x00", subset, i) for i, (subset, _) in enumerate(outcomes)]
    # repeated symbols never change the peeling outcome, so decode each support once
    decoded: dict[int, bool] = {}
    fail = []
    for mask, prob in _multisets([w for _, w in outcomes], m):
        ok = decoded.get(mask)
        if ok is None:
            chosen = [symbols[i] for i in range(len(symbols)) if mask >> i & 1]
            ok = decoded[mask] = peel_decode(k, chosen).success
        if not ok:
            fail.append(prob)
    return math.fsum(fail)


def _trial_chunks(trials, chunk=4096):
    start = 0
    while start < trials:
        n = min(chunk, trials - start)
        yield start, n
        start += n


def monte_carlo_failure(k: int, dist: DegreeDistribution, m: int, trials: int,
                        master_seed: int = 0) -> tuple[float, float]:
    """Fraction of independent trials in which peeling ``m`` fresh symbols fails."""
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    _check_m(k, m)
    dist.check_block(k)
    seed = np.uint64(as_seed(master_seed))
    fails = 0
    for first, n in _trial_chunks(trials):
        fails += int(kernels.failure_trials(k, dist.cdf, m, seed, first, n))
    p = fails / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


def monte_carlo_overhead(k: int, dist: DegreeDistribution, trials: int, master_seed: int = 0,
                         max_extra: int | None = None) -> tuple[float, float, np.ndarray]:
    """Sample the overhead needed to decode; returns ``(mean, stderr, samples)``."""
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    dist.check_block(k)
    if max_extra is None:
        max_extra = 10 * k
    seed = np.uint64(as_seed(master_seed))
    out = np.empty(trials, np.int64)
    for first, n in _trial_chunks(trials):
        kernels.overhead_trials(k, dist.cdf, seed, first, n, max_extra, out[first:first + n])
    if np.any(out < 0):
        raise RunawayTrialError(f"{int(np.sum(out < 0))} trials exceeded max_extra={max_extra}")
    mean = float(out.mean())
    std = float(out.std(ddof=1)) if trials > 1 else 0.0
    return mean, std / math.sqrt(trials), out
