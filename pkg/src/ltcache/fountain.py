"""LT degree distributions, encoder and peeling decoder.

Input indices are 1-based in every public structure (``EncodedSymbol.neighbors``,
``DecoderGraph.recovered``); kernels work 0-based internally.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._backend import kernels
from ._rng import ALGORITHM, SplitMix64, as_seed, hash2
from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "DegreeDistribution",
    "SourceBlock",
    "EncodedSymbol",
    "DecoderGraph",
    "DecodeResult",
    "ideal_soliton",
    "robust_soliton",
    "point_mass",
    "sample_degree",
    "encode_symbol",
    "encode_symbols",
    "peel_decode",
    "RNG_ALGORITHM",
]

RNG_ALGORITHM = ALGORITHM
_SUM_TOL = 1e-12
_FILE_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """Probability vector over output degrees; ``probs[i]`` is the mass of degree ``i + 1``."""

    probs: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).ravel()
        if p.size == 0:
            raise InvalidParameterError("degree distribution is empty")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidParameterError("degree probabilities must be finite and non-negative")
        nz = np.flatnonzero(p)
        if nz.size == 0:
            raise InvalidParameterError("degree distribution has no mass")
        p = p[: nz[-1] + 1]
        total = math.fsum(p)
        if abs(total - 1.0) > _SUM_TOL:
            raise InvalidParameterError(f"degree probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized(cls, weights, name: str = "custom") -> DegreeDistribution:
        w = np.asarray(weights, dtype=np.float64)
        total = math.fsum(w)
        if not total > 0:
            raise InvalidParameterError("weights must have positive total")
        return cls(w / total, name=name)

    @property
    def d_max(self) -> int:
        return int(self.probs.size)

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        c.setflags(write=False)
        return c

    @property
    def mean_degree(self) -> float:
        return float(np.dot(np.arange(1, self.d_max + 1), self.probs))

    def digest(self) -> str:
        return hashlib.sha256(self.probs.tobytes()).hexdigest()[:16]

    def check_block(self, k: int) -> None:
        if self.d_max > k:
            raise InvalidParameterError(
                f"maximum degree {self.d_max} exceeds the number of input symbols {k}"
            )

    def __repr__(self):
        return f"DegreeDistribution(name={self.name!r}, d_max={self.d_max}, digest={self.digest()})"

    @classmethod
    def from_file(cls, path) -> DegreeDistribution:
        """Read ``degree probability`` lines; blank lines and ``#`` comments are ignored."""
        entries: dict[int, float] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise InvalidParameterError(f"{path}:{lineno}: expected 'degree probability'")
            try:
                degree, prob = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise InvalidParameterError(f"{path}:{lineno}: {exc}") from None
            if degree < 1:
                raise InvalidParameterError(f"{path}:{lineno}: degree must be >= 1")
            if degree in entries:
                raise InvalidParameterError(f"{path}:{lineno}: duplicate degree {degree}")
            entries[degree] = prob
        if not entries:
            raise InvalidParameterError(f"{path}: no degrees listed")
        probs = np.zeros(max(entries))
        for degree, prob in entries.items():
            probs[degree - 1] = prob
        total = math.fsum(probs)
        if abs(total - 1.0) > _FILE_SUM_TOL:
            raise InvalidParameterError(f"{path}: probabilities sum to {total!r}, not 1 (tolerance 1e-9)")
        return cls(probs / total, name=f"file:{Path(path).name}")

    def to_file(self, path) -> None:
        lines = [f"{d} {p:.17g}" for d, p in enumerate(self.probs, start=1) if p > 0]
        Path(path).write_text("\n".join(lines) + "\n")


def ideal_soliton(k: int) -> DegreeDistribution:
    if k < 1:
        raise InvalidParameterError("ideal soliton needs k >= 1")
    rho = np.empty(k)
    rho[0] = 1.0 / k
    if k > 1:
        i = np.arange(2, k + 1, dtype=np.float64)
        rho[1:] = 1.0 / (i * (i - 1.0))
    return DegreeDistribution.normalized(rho, name=f"ideal_soliton(k={k})")


def robust_soliton(k: int, c: float, delta_rsd: float, strict: bool = True) -> DegreeDistribution:
    """Luby's robust soliton: ideal soliton plus a spike at degree ``round(k/R)``.

    ``R = c * ln(k / delta_rsd) * sqrt(k)``. The spike term is clamped at zero
    when ``R < delta_rsd`` and its position to ``[1, k]``. With
    ``strict=False`` any ``0 < delta_rsd < k`` is accepted and the formula is
    evaluated as is.
    """
    if k < 1:
        raise InvalidParameterError("robust soliton needs k >= 1")
    if not c > 0:
        raise InvalidParameterError("robust soliton needs c > 0")
    if strict and not 0.0 < delta_rsd < 1.0:
        raise InvalidParameterError("robust soliton needs 0 < delta_rsd < 1")
    if not 0.0 < delta_rsd < k:
        raise InvalidParameterError("robust soliton needs 0 < delta_rsd < k")
    rho = ideal_soliton(k).probs
    R = c * math.log(k / delta_rsd) * math.sqrt(k)
    spike = min(k, max(1, int(round(k / R))))
    tau = np.zeros(k)
    i = np.arange(1, spike, dtype=np.float64)
    tau[: spike - 1] = R / (i * k)
    tau[spike - 1] = max(0.0, R * math.log(R / delta_rsd) / k)
    return DegreeDistribution.normalized(
        rho + tau, name=f"robust_soliton(k={k},c={c},delta={delta_rsd})"
    )


def point_mass(degree: int) -> DegreeDistribution:
    """Every output symbol has exactly ``degree`` neighbors."""
    if degree < 1:
        raise InvalidParameterError("degree must be >= 1")
    p = np.zeros(degree)
    p[-1] = 1.0
    return DegreeDistribution(p, name=f"point_mass({degree})")


def sample_degree(dist: DegreeDistribution, rng: SplitMix64) -> int:
    """Draw one degree by inversion of ``dist.cdf``."""
    i = int(np.searchsorted(dist.cdf, rng.uniform(), side="right"))
    return min(i, dist.d_max - 1) + 1


@dataclass(frozen=True)
class SourceBlock:
    symbols: tuple[bytes, ...]

    def __post_init__(self):
        syms = tuple(bytes(s) for s in self.symbols)
        if not syms:
            raise InvalidParameterError("source block is empty")
        size = len(syms[0])
        if size == 0 or any(len(s) != size for s in syms):
            raise InvalidParameterError("source symbols must share one non-zero length")
        object.__setattr__(self, "symbols", syms)

    @property
    def k(self) -> int:
        return len(self.symbols)

    @property
    def symbol_size(self) -> int:
        return len(self.symbols[0])

    @classmethod
    def random(cls, k: int, symbol_size: int = 1, seed: int = 0) -> SourceBlock:
        rng = np.random.default_rng(seed)
        data = rng.integers(0, 256, size=(k, symbol_size), dtype=np.uint8)
        return cls(tuple(row.tobytes() for row in data))


@dataclass(frozen=True)
class EncodedSymbol:
    payload: bytes
    neighbors: tuple[int, ...]
    seed_id: int = 0


def _xor(chunks) -> bytes:
    arrs = [np.frombuffer(c, dtype=np.uint8) for c in chunks]
    return np.bitwise_xor.reduce(arrs, axis=0).tobytes()


def _neighbors_for(seed: int, dist: DegreeDistribution, k: int) -> tuple[int, ...]:
    perm = np.arange(k, dtype=np.int64)
    swaps = np.empty(dist.d_max, np.int64)
    out = np.empty(dist.d_max, np.int64)
    d = kernels.symbol_neighbors(np.uint64(seed), dist.cdf, k, perm, swaps, out)
    return tuple(sorted(int(v) + 1 for v in out[:d]))


def encode_symbol(block: SourceBlock, dist: DegreeDistribution, seed_id: int,
                  master_seed: int = 0) -> EncodedSymbol:
    """Generate the output symbol with index ``seed_id`` of the stream ``master_seed``."""
    dist.check_block(block.k)
    seed = hash2(as_seed(master_seed), int(seed_id))
    nbrs = _neighbors_for(seed, dist, block.k)
    payload = _xor(block.symbols[i - 1] for i in nbrs)
    return EncodedSymbol(payload, nbrs, int(seed_id))


def encode_symbols(block: SourceBlock, dist: DegreeDistribution, count: int,
                   master_seed: int = 0, start: int = 0) -> list[EncodedSymbol]:
    return [encode_symbol(block, dist, start + i, master_seed) for i in range(count)]


@dataclass
class DecodeResult:
    success: bool
    recovered: dict[int, bytes]
    n_resolved: int
    trace: list[tuple[int, int]] = field(default_factory=list)

    def source_block(self) -> SourceBlock:
        if not self.success:
            raise InvalidInputError("decoding did not succeed; no complete source block")
        return SourceBlock(tuple(self.recovered[i] for i in range(1, len(self.recovered) + 1)))


class DecoderGraph:
    """Bipartite peeling state that accepts symbols incrementally.

    When several symbols sit in the ripple, the one with the smallest
    ``seed_id`` is processed first. Symbols whose reduced degree reaches
    zero are dropped.
    """

    def __init__(self, k: int):
        if k < 1:
            raise InvalidParameterError("k must be >= 1")
        self.k = k
        self.unresolved: set[int] = set(range(1, k + 1))
        self.recovered: dict[int, bytes] = {}
        self.received: list[tuple[set[int], np.ndarray, int]] = []
        self.trace: list[tuple[int, int]] = []
        self._adj: dict[int, list[int]] = {}
        self._ripple: list[tuple[int, int]] = []
        self._size: int | None = None

    @property
    def done(self) -> bool:
        return not self.unresolved

    def add(self, sym: EncodedSymbol) -> None:
        if not sym.neighbors:
            raise InvalidInputError("symbol has no neighbors")
        for v in sym.neighbors:
            if not (isinstance(v, (int, np.integer)) and 1 <= v <= self.k):
                raise InvalidInputError(f"neighbor index {v!r} outside 1..{self.k}")
        if len(set(sym.neighbors)) != len(sym.neighbors):
            raise InvalidInputError("duplicate neighbor index")
        if self._size is None:
            self._size = len(sym.payload)
        elif len(sym.payload) != self._size:
            raise InvalidInputError("payload lengths differ")
        payload = np.frombuffer(sym.payload, dtype=np.uint8).copy()
        nbrs = set()
        for v in sym.neighbors:
            if v in self.recovered:
                payload ^= np.frombuffer(self.recovered[v], dtype=np.uint8)
            else:
                nbrs.add(int(v))
        if not nbrs:
            return
        idx = len(self.received)
        self.received.append((nbrs, payload, sym.seed_id))
        for v in nbrs:
            self._adj.setdefault(v, []).append(idx)
        if len(nbrs) == 1:
            heapq.heappush(self._ripple, (sym.seed_id, idx))

    def peel(self) -> int:
        """Run the peeling schedule until the ripple empties; return inputs resolved."""
        resolved = 0
        while self._ripple:
            _, idx = heapq.heappop(self._ripple)
            nbrs, payload, seed_id = self.received[idx]
            if len(nbrs) != 1:
                continue
            (v,) = nbrs
            value = payload.copy()
            self.recovered[v] = value.tobytes()
            self.unresolved.discard(v)
            self.trace.append((seed_id, v))
            resolved += 1
            for other in self._adj.pop(v, ()):
                onbrs, opayload, oseed = self.received[other]
                onbrs.discard(v)
                opayload ^= value
                if len(onbrs) == 1:
                    heapq.heappush(self._ripple, (oseed, other))
        return resolved


def peel_decode(k: int, received) -> DecodeResult:
    """Peel ``received`` (an iterable of ``EncodedSymbol``) against ``k`` inputs.

    A decoding failure is a normal result (``success=False``); malformed
    input raises ``InvalidInputError``.
    """
    graph = DecoderGraph(k)
    for sym in received:
        graph.add(sym)
    graph.peel()
    return DecodeResult(graph.done, dict(graph.recovered), len(graph.recovered), graph.trace)
