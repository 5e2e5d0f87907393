"""Deterministic 64-bit seed derivation.

``mix_seed(master, a, b, ...)`` folds integers into a seed with the
SplitMix64 finaliser, so a stream is fully identified by the master seed and
its coordinates (cell index, replicate index, ...).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(master: int, *coords: int) -> int:
    """``h = splitmix64(master)``; then ``h = splitmix64(h ^ c)`` for each coordinate."""
    h = splitmix64(int(master) & MASK64)
    for c in coords:
        h = splitmix64(h ^ (int(c) & MASK64))
    return h


def child_seeds(rng: np.random.Generator, count: int) -> list[int]:
    """Draw ``count`` independent sub-stream seeds from ``rng`` in one call."""
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)]


def as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
