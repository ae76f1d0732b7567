"""Seeded random streams.

Everything stochastic goes through Philox (counter based), so a seed gives the
same numbers on every platform and numpy build.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Independent 63-bit child seeds, stable for a given ``(seed, count)`` prefix."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]
