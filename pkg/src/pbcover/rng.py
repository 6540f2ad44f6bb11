"""Reproducible random streams.

Every stream is keyed by a base seed plus an integer path (e.g. a grid-cell
index), so results do not depend on evaluation order or thread count.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
