"""Deterministic, splittable random streams.

Every random choice in the package flows through a counter-based Philox
generator keyed by (seed, substream). Substreams are derived by hashing
arbitrary key parts (example index, dataset name, ...), so generation is
independent of iteration order and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_M64 = (1 << 64) - 1


def keyed_rng(seed: int, *parts) -> np.random.Generator:
    """Generator for the substream identified by ``parts`` under ``seed``."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    sub = int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")
    key = np.array([seed & _M64, sub & _M64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
