"""Deterministic seed derivation for replicated Monte Carlo runs.

Every replica (and every sub-stream inside a replica) gets its own 64-bit
seed derived from the master seed with a splitmix64 mix.  Streams are
therefore reproducible under any parallel schedule: the seed depends only
on (master_seed, index), never on execution order or worker count.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 finalizer round (acts on a 64-bit state)."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def mix_seed(master_seed: int, index: int) -> int:
    """Seed for sub-stream `index` of the stream with seed `master_seed`."""
    if index < 0:
        raise ValueError(f"stream index must be nonnegative, got {index}")
    return splitmix64((master_seed & _MASK) ^ splitmix64(index))


def rng_for(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for sub-stream `index`."""
    return np.random.default_rng(mix_seed(master_seed, index))
