"""Cache placement: choose per-file symbol counts that minimize the backhaul upper bound.

The objective ``E[D] + sum_j theta_j sum_h gamma_h max(0, k - w_j h)`` is a
sum of convex piecewise-linear functions of each ``w_j``, so spending the
budget greedily on the largest marginal decrease is optimal both over the
integers and over the reals. Marginal gains are constant between the
breakpoints ``k/h`` and are handled a block at a time; the final, partially
funded gain level is shared evenly (least-filled file first, then lowest
index), which is exactly what a unit-by-unit greedy with that tie rule does.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, InvalidParameterError
from .netmodel import CacheSystem, Placement

__all__ = [
    "PlacementProblem",
    "PlacementResult",
    "objective_tup",
    "objective_values",
    "optimize_relaxed",
    "optimize_integer",
    "exhaustive_integer",
    "transfer_gap",
]


@dataclass(frozen=True)
class PlacementProblem:
    sys: CacheSystem
    e_delta: float = 0.0

    def __post_init__(self):
        if self.sys.budget < 0:
            raise InvalidParameterError("budget must be non-negative")


@dataclass
class PlacementResult:
    w: np.ndarray
    objective: float
    iterations: int
    ties: int
    relaxed: bool

    @property
    def placement(self) -> Placement:
        if self.relaxed:
            raise InvalidParameterError("relaxed allocations are not integer placements")
        return Placement(self.w)

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "tie_count": self.ties,
            "relaxed": self.relaxed,
        }


def _file_costs(prob: PlacementProblem, w: np.ndarray) -> np.ndarray:
    sys = prob.sys
    short = np.maximum(0.0, sys.k - np.multiply.outer(np.asarray(w, dtype=np.float64), sys.h_values))
    return sys.theta * (short @ sys.gamma)


def objective_values(prob: PlacementProblem, w) -> float:
    """Objective for any real allocation; no budget check."""
    return float(prob.e_delta) + math.fsum(_file_costs(prob, w))


def objective_tup(prob: PlacementProblem, w: Placement) -> float:
    w.check(prob.sys)
    return objective_values(prob, w.w)


def _segments(prob: PlacementProblem, integer: bool):
    """Constant-gain blocks ``(gain_per_unit, file, start, length)`` with positive gain."""
    sys = prob.sys
    hs = sys.h_values[sys.gamma > 0]
    gs = sys.gamma[sys.gamma > 0]
    k = sys.k
    out = []
    for j in range(sys.n):
        th = float(sys.theta[j])
        if th == 0.0:
            continue
        if integer:
            cuts = {0}
            for h in hs:
                cuts.add(k // h)
                cuts.add(-(-k // h))
            cuts = sorted(cuts)
            # gain of the unit w -> w + 1
            def gain(w):
                return th * float(np.dot(gs, np.clip(k - hs * w, 0, hs)))
        else:
            cuts = sorted({0.0} | {k / h for h in hs})

            def gain(w):
                return th * float(np.dot(gs, hs * (hs * w < k)))
        prev = None
        for a, b in zip(cuts, cuts[1:]):
            if b <= a:
                continue
            g = gain(a)
            if g <= 0:
                break
            if prev is not None and prev[0] == g and prev[2] + prev[3] == a:
                prev[3] = b - prev[2]
                continue
            prev = [g, j, a, b - a]
            out.append(prev)
    return [tuple(s) for s in out]


def _share_integer(starts, lengths, budget):
    """Unit-by-unit fill of tied blocks: least-filled first, then lowest index."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)

    def used(level):
        return int(np.clip(level - starts, 0, lengths).sum())

    lo, hi = int(starts.min()), int((starts + lengths).max())
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if used(mid) <= budget:
            lo = mid
        else:
            hi = mid - 1
    take = np.clip(lo - starts, 0, lengths)
    left = budget - int(take.sum())
    for i in range(len(starts)):
        if left == 0:
            break
        if starts[i] + take[i] == lo and take[i] < lengths[i]:
            take[i] += 1
            left -= 1
    return take


def _share_real(starts, lengths, budget):
    starts = np.asarray(starts, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    knots = np.unique(np.concatenate([starts, starts + lengths]))
    used = np.array([np.clip(v - starts, 0, lengths).sum() for v in knots])
    i = int(np.searchsorted(used, budget, side="left"))
    if i == 0:
        level = knots[0]
    else:
        # used() is linear between knots
        a, b = knots[i - 1], knots[i]
        ua, ub = used[i - 1], used[i]
        level = a + (budget - ua) * (b - a) / (ub - ua)
    return np.clip(level - starts, 0, lengths)


def _greedy(prob: PlacementProblem, integer: bool) -> PlacementResult:
    sys = prob.sys
    budget = sys.budget
    w = np.zeros(sys.n, dtype=np.int64 if integer else np.float64)
    segs = _segments(prob, integer)
    segs.sort(key=lambda s: (-s[0], s[2], s[1]))
    remaining = budget
    iterations = 0
    ties = 0
    for gain, group in itertools.groupby(segs, key=lambda s: s[0]):
        if remaining <= 0:
            break
        group = list(group)
        iterations += 1
        total = sum(s[3] for s in group)
        if total <= remaining:
            for _, j, _, length in group:
                w[j] += length
            remaining -= total
            continue
        share = (_share_integer if integer else _share_real)(
            [s[2] for s in group], [s[3] for s in group], remaining
        )
        for (_, j, _, _), x in zip(group, share):
            w[j] += x
        ties = len(group) if len(group) > 1 else 0
        remaining = 0
    if remaining > 0:
        # every positive-gain block is full; leftover units change nothing
        ties = sys.n if sys.n > 1 else 0
        share = (_share_integer if integer else _share_real)(w.copy(), [budget] * sys.n, remaining)
        w = w + share
    return PlacementResult(w, objective_values(prob, w), iterations, ties, relaxed=not integer)


def optimize_integer(prob: PlacementProblem) -> PlacementResult:
    """Integer placement with ``sum(w) == M k`` minimizing the upper bound."""
    res = _greedy(prob, integer=True)
    if int(res.w.sum()) != prob.sys.budget:
        raise BudgetError("greedy allocation did not spend the budget exactly")
    return res


def optimize_relaxed(prob: PlacementProblem) -> PlacementResult:
    """Real-valued relaxation of :func:`optimize_integer`."""
    return _greedy(prob, integer=False)


def transfer_gap(prob: PlacementProblem, w, eps: float) -> float:
    """Largest objective decrease from moving ``eps`` symbols between two files (0 if none)."""
    w = np.asarray(w, dtype=np.float64)
    base = _file_costs(prob, w)
    up = _file_costs(prob, w + eps) - base
    down = _file_costs(prob, np.maximum(w - eps, 0.0)) - base
    best = 0.0
    for src in np.flatnonzero(w >= eps):
        for dst in range(w.size):
            if dst == src:
                continue
            best = max(best, -(down[src] + up[dst]))
    return best


def exhaustive_integer(prob: PlacementProblem, limit: int = 2_000_000) -> tuple[np.ndarray, float]:
    """Brute-force minimum over every integer placement spending the budget."""
    n, budget = prob.sys.n, prob.sys.budget
    if math.comb(budget + n - 1, n - 1) > limit:
        raise InvalidParameterError("too many placements to enumerate")
    best_w, best = None, math.inf
    for bars in itertools.combinations(range(budget + n - 1), n - 1):
        edges = (-1,) + bars + (budget + n - 1,)
        w = np.array([edges[i + 1] - edges[i] - 1 for i in range(n)])
        val = objective_values(prob, w)
        if val < best - 1e-12:
            best_w, best = w, val
    return best_w, best
