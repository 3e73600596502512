"""Seeded splitmix64 stream shared by every randomized step.

All sampling (bootstraps, feature subsets, shuffles, k-means++ draws) goes
through this generator so that the numba and numpy kernel backends consume
byte-identical random streams. Integer arithmetic only; no numpy RNG state.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """One splitmix64 output for state ``x``. Pure function."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master: int, index: int) -> int:
    """Independent child seed: ``master XOR mix64(index)``.

    Used for per-tree, per-fold and per-dataset streams so parallel and
    serial execution see identical randomness.
    """
    return (master ^ mix64(index)) & MASK64


class SplitMix64:
    """Sequential splitmix64 stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def next_block(self, n: int):
        """n consecutive outputs as a uint64 array; identical to n next() calls."""
        import numpy as np

        start = self.state
        self.state = (self.state + n * _GOLDEN) & MASK64
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = (np.uint64(start) + steps * np.uint64(_GOLDEN))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def bounded(self, n: int) -> int:
        """Uniform-ish draw in [0, n). Modulo bias is < 2**-50 for any n
        that fits a dataset and is accepted for determinism's sake."""
        return self.next() % n

    def float64(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, seq) -> None:
        """In-place Fisher-Yates. Works on lists and 1-D numpy arrays."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.bounded(i + 1)
            tmp = seq[i]
            seq[i] = seq[j]
            seq[j] = tmp

    def sample_sorted(self, n: int, m: int) -> list[int]:
        """m distinct indices from range(n), returned ascending."""
        if m >= n:
            return list(range(n))
        idx = list(range(n))
        for i in range(m):
            j = i + self.bounded(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        picked = idx[:m]
        picked.sort()
        return picked
