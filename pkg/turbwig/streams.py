"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
experiment seed and a tuple of integers naming the consumer, so that results
never depend on the order in which workers pick up realizations.
"""
from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    VOLUME = 0
    SCREENS = 1
    SLICES = 2
    RAYS = 3
    RAY_KICKS = 4
    ENSEMBLE = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    spawn_key = tuple(int(k) for k in key)
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(sequence))
