"""Per-shot random substreams.

Every shot owns an independent generator derived from ``(master_seed, shot_index)``
through :class:`numpy.random.SeedSequence` spawn keys, so a shot's draws do not
depend on which worker runs it or in what order.
"""
from __future__ import annotations

import numpy as np

BOOTSTRAP_TAG = 0xB007


def shot_seed_sequence(master_seed: int, shot_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(shot_index),))


def shot_rng(master_seed: int, shot_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(shot_seed_sequence(master_seed, shot_index)))


def shot_rngs(master_seed: int, start: int, stop: int) -> list[np.random.Generator]:
    return [shot_rng(master_seed, i) for i in range(start, stop)]


def bootstrap_rng(master_seed: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), BOOTSTRAP_TAG, int(salt)])
