"""Seed derivation shared by every randomised step.

A child seed is the first 64 bits of ``numpy.random.SeedSequence`` built from
the parent seed followed by an integer path, e.g. ``derive_seed(42, 3)`` for
repetition 3 of master seed 42 and ``derive_seed(rep_seed, TREE, t)`` for tree
``t``.  Results therefore do not depend on how work is scheduled.
"""
from __future__ import annotations

import numpy as np

# path tags
SPLIT = 1
ENSEMBLE = 2
FOLDS = 3
TREE = 4
BOOTSTRAP = 5
LASSO = 6
PLATT = 7
FOREST = 8
BAGGING = 9


def derive_seed(seed: int, *path: int) -> int:
    state = np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def rng_for(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def stratified_folds(y, n_folds: int, seed: int) -> np.ndarray:
    """Fold id per example; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        folds[idx] = (np.arange(len(idx)) + offset) % n_folds
        offset = (offset + len(idx)) % n_folds
    return folds
