"""Deterministic splittable random streams.

Every stochastic task derives its generator from a master seed plus a stable
task path (strings hashed by crc32, integers taken as-is) through numpy's
``SeedSequence`` spawn keys.  Streams are independent across distinct paths
and reproducible across runs, platforms, and worker counts.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream path parts must be int or str, got {type(part)!r}")


def stream(master_seed: int, *path) -> np.random.Generator:
    """Generator for the task addressed by ``path`` under ``master_seed``."""
    key = tuple(_key_part(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
