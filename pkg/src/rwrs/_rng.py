"""Keyed random streams.

Walk replicates are drawn in fixed-size blocks; block ``j`` of a run with base
seed ``s`` always uses ``Philox(SeedSequence([s, j]))``, so results never
depend on how blocks are distributed over workers.  Scenery values are a pure
hash of ``(seed, replicate, site)`` and therefore independent of draw order.
"""
from __future__ import annotations

import numpy as np

BLOCK = 4096

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for replicate block ``block``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLD
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def keyed_uniform(seed: int, keys, replicate=0) -> np.ndarray:
    """Uniforms in the open interval (0, 1), one per key.

    ``keys`` are packed site codes (int64); ``replicate`` broadcasts against
    them.  The output is a deterministic function of ``(seed, replicate, key)``.
    """
    k = np.asarray(keys, dtype=np.int64).astype(np.uint64)
    r = np.asarray(replicate, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF) ^ _splitmix(r * _GOLD + np.uint64(1)))
        h = _splitmix(h ^ k)
    # 53 random bits, shifted off zero
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / 9007199254740992.0
