"""Deterministic named random streams.

Every source of randomness in a run is derived from the root seed plus a
string label and integer indices that identify its structural position
(outer iteration, environment index, and so on).  Streams are recreated
from those keys instead of being checkpointed, so a resumed run draws
exactly the same numbers as an uninterrupted one.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(*keys: int | str) -> np.random.Generator:
    """Return a Generator keyed by the given (seed, label, index, ...) tuple.

    String keys are hashed with crc32 so the entropy list is stable across
    runs and platforms.  Integer keys are used as-is.
    """
    entropy = []
    for k in keys:
        if isinstance(k, str):
            entropy.append(zlib.crc32(k.encode("utf-8")))
        elif isinstance(k, (int, np.integer)):
            entropy.append(int(k) & 0xFFFFFFFFFFFFFFFF)
        else:
            raise TypeError(f"stream keys must be int or str, got {type(k).__name__}")
    return np.random.default_rng(entropy)
