"""Portable deterministic random numbers.

Train/test splits, CV folds, and synthetic data must reproduce bit-for-bit
across platforms and Python/numpy versions, so randomness comes from a
self-contained 64-bit SplitMix generator rather than library RNGs.

Constants are the published SplitMix64 ones:
    increment   0x9E3779B97F4A7C15  (golden-ratio step)
    mix 1       0xBF58476D1CE4E5B9
    mix 2       0x94D049BB133111EB
Doubles are built from the top 53 bits; bounded integers use the
multiply-shift reduction (floor(u * n / 2^64)), which is exact in Python
integer arithmetic and therefore portable.
"""
from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_INC = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic 64-bit generator; the only RNG used in this package."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _INC) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def next_double(self) -> float:
        # top 53 bits -> [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_below(self, n: int) -> int:
        """Integer in [0, n) via multiply-shift reduction."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_double()

    def normal(self, mean: float = 0.0, stdev: float = 1.0) -> float:
        # Box-Muller; one fresh pair per call keeps the stream
        # insensitive to interleaving with other draws.
        u1 = self.next_double()
        u2 = self.next_double()
        while u1 <= 0.0:
            u1 = self.next_double()
        r = math.sqrt(-2.0 * math.log(u1))
        return mean + stdev * r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list:
        idx = list(range(n))
        self.shuffle(idx)
        return idx
