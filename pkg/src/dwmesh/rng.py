"""Seeded randomness via SplitMix64.

SplitMix64 is fully specified by its constants, so any implementation
language reproduces the exact same draw sequence from the same 64-bit
seed. All stochastic behavior in the package flows through this class;
nothing touches global RNG state.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """The SplitMix64 output mix of a 64-bit state."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


class Rng:
    """SplitMix64 stream with convenience draws.

    Substreams derive child seeds from (seed, index) so per-frame draws can
    be made in any order without changing results.
    """

    def __init__(self, seed: int):
        self._seed = seed & MASK64
        self._state = self._seed

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return mix64(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform float in [lo, hi) with 53-bit resolution."""
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + u * (hi - lo)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        return lo + int(self.uniform() * span)

    def substream(self, index: int) -> "Rng":
        """Independent child stream; depends only on (seed, index)."""
        return Rng(substream_seed(self._seed, index))


def substream_seed(seed: int, index: int) -> int:
    """Child seed for stream ``index`` of ``seed`` (pure, order-free)."""
    return mix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)
