"""Deterministic 64-bit pseudo-random generator for reproducible experiments.

The generator is SplitMix64: a single 64-bit counter advanced by the constant
0x9E3779B97F4A7C15, with the output mixed by two xor-shift-multiply rounds
(constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB) and a final xor-shift.
It is fully specified here so that ports in other languages can reproduce
initial-condition streams bit-exactly.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 stream seeded with an arbitrary 64-bit integer."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64

    def next_u64(self) -> int:
        """Next raw 64-bit output."""
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi): top 53 bits scaled by 2^-53."""
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * u

    def uniform_vector(self, lows, highs) -> list[float]:
        """One value per coordinate, drawn in coordinate order."""
        return [self.uniform(lo, hi) for lo, hi in zip(lows, highs)]
