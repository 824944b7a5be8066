"""Deterministic random streams.

Every randomized routine takes an integer seed and derives independent
substreams from it via SeedSequence spawn keys on a counter-based generator
(Philox), so results are reproducible regardless of how work is split across
batches or threads.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
