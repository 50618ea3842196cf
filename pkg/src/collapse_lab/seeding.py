"""Order-independent per-replica seeds."""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def replica_seed(master: int, index: int) -> int:
    """Seed for replica ``index``; depends only on (master, index)."""
    return splitmix64(splitmix64(int(master) & _MASK) ^ (int(index) & _MASK))


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))
