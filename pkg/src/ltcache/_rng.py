"""SplitMix64 seed derivation.

Every random draw in the package comes from a SplitMix64 stream whose
initial state is derived from ``(master_seed, index)`` pairs, so a symbol
or a trial can be regenerated in isolation. Both kernel backends implement
the same arithmetic; this module is the pure-Python reference used for
seed derivation outside the kernels.
"""

ALGORITHM = "splitmix64"

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def hash2(a: int, b: int) -> int:
    """Derive a child seed from a parent seed and an index."""
    return mix64((a & MASK64) ^ mix64((b + GOLDEN) & MASK64))


def as_seed(seed) -> int:
    """Coerce a user-supplied seed to an unsigned 64-bit integer."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed & MASK64


class SplitMix64:
    """Minimal stateful generator, used by pure-Python code paths."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
