"""Deterministic seed derivation.

Every stochastic component gets its own ``numpy.random.Generator`` derived
from a master seed plus a tuple of keys (round, cluster, coordinate, ...).
Results therefore do not depend on the order in which independent pieces
are executed.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"negative seed key {key}")
        return int(key)
    if isinstance(key, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(key)))[0]
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported seed key type: {type(key).__name__}")


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """A 64-bit integer seed for the stream identified by ``(seed, *keys)``."""
    lo, hi = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)
