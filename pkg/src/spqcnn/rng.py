"""Seeded random streams keyed by (seed, purpose, index)."""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one purpose; same inputs give the same stream."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), int(index)]))
