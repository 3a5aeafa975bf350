"""Splittable seed scheme.

Every random stream is a ``numpy.random.SeedSequence`` addressed by
``(master_seed, stream, index, ...)``. Child sequences are built from the
parent's spawn key rather than with ``SeedSequence.spawn`` so that deriving
the same child twice gives the same stream.
"""

from __future__ import annotations

import numpy as np

# stream ids
TRAIN_ENV = 1
TRAIN_AGENT = 2
EVAL_ENV = 3
EVAL_POLICY = 4
NET_INIT = 5


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child_seed(seed, *path: int) -> np.random.SeedSequence:
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(p) for p in path))


def derive_seed(master: int, stream: int, index: int) -> np.random.SeedSequence:
    return child_seed(master, stream, index)


def derive_rng(master: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stream, index))
