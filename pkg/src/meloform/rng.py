"""The one random generator used everywhere.

All randomness (splits, seed selection, weight init, dropout, batch order,
sampling) comes from numpy's PCG64 bit generator seeded through
``SeedSequence``.  Both are specified bit-for-bit by numpy, so a given seed
yields the same stream on every platform.  Independent streams are derived
by appending integers to the entropy, e.g. ``make_rng(master, 7)`` for the
seventh melody of a run.
"""

import numpy as np

# stream tags, appended to a master seed
SPLIT, SEEDS, INIT, TRAIN, GENERATE = 0, 1, 2, 3, 4


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)
