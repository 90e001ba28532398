"""Deterministic seed derivation shared by the trainer and the sweep harness.

All randomness in a sweep is a pure function of (base_seed, subsample index,
init index). The mix is a fixed 64-bit splitmix chain, so seed lists are
identical across machines, processes, and worker counts.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

# stream tags keep independent consumers of the same seed decorrelated
SUBSAMPLE_STREAM = 0x51
INIT_STREAM = 0xC3
BATCH_STREAM = 0xB5
NOISE_STREAM = 0xE7


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seeds(*parts: int) -> int:
    """Fold integer parts into one non-negative 63-bit seed."""
    acc = 0
    for p in parts:
        acc = _splitmix64(acc ^ (int(p) & _MASK64))
    return acc & ((1 << 63) - 1)


def subsample_seed(base_seed: int, subsample_index: int) -> int:
    """Seed for drawing subsample i; depends on i only, never on the init index."""
    return mix_seeds(base_seed, SUBSAMPLE_STREAM, subsample_index)


def train_seed(base_seed: int, subsample_index: int, init_index: int) -> int:
    """Seed for run (i, j): weight init and both noise streams derive from it."""
    return mix_seeds(base_seed, INIT_STREAM, subsample_index, init_index)
