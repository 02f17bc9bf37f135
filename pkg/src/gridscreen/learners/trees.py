"""CART trees, bagged trees and random forests on the compiled tree kernel."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..seeding import BOOTSTRAP, TREE, derive_seed, rng_for


@dataclass(frozen=True)
class TreeEnsemble:
    """Trees packed into flat node arrays; ``roots[t]`` is the root of tree ``t``.

    ``feature == -1`` marks a leaf whose class-1 fraction is ``value``.
    Internal nodes send rows with ``x[feature] <= threshold`` left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def predict_proba(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return kernels.predict_forest(X, self.feature, self.threshold, self.left,
                                      self.right, self.value, self.roots)

    def tree(self, t: int) -> "TreeEnsemble":
        """Tree ``t`` alone, renumbered from 0."""
        start = int(self.roots[t])
        stop = int(self.roots[t + 1]) if t + 1 < len(self.roots) else len(self.feature)
        shift = lambda a: np.where(a >= 0, a - start, -1)  # noqa: E731
        return TreeEnsemble(self.feature[start:stop].copy(), self.threshold[start:stop].copy(),
                            shift(self.left[start:stop]), shift(self.right[start:stop]),
                            self.value[start:stop].copy(), np.zeros(1, dtype=np.int64),
                            self.n_features)

    def depth(self, t: int = 0) -> int:
        tr = self.tree(t)
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if tr.feature[node] >= 0:
                stack.append((int(tr.left[node]), d + 1))
                stack.append((int(tr.right[node]), d + 1))
        return best


def _pack(trees, n_features: int) -> TreeEnsemble:
    parts = {k: [] for k in ("feature", "threshold", "left", "right", "value")}
    roots = []
    offset = 0
    for feature, threshold, left, right, value in trees:
        roots.append(offset)
        parts["feature"].append(feature)
        parts["threshold"].append(threshold)
        parts["left"].append(np.where(left >= 0, left + offset, -1))
        parts["right"].append(np.where(right >= 0, right + offset, -1))
        parts["value"].append(value)
        offset += len(feature)
    cat = {k: np.concatenate(v) if v else np.empty(0) for k, v in parts.items()}
    return TreeEnsemble(
        cat["feature"].astype(np.int64), cat["threshold"].astype(np.float64),
        cat["left"].astype(np.int64), cat["right"].astype(np.int64),
        cat["value"].astype(np.float64), np.asarray(roots, dtype=np.int64), n_features,
    )


def fit_tree(X, y, min_leaf: int = 1, max_depth: int = -1, mtry: int | None = None,
             rows=None, seed: int = 0) -> TreeEnsemble:
    """One tree on ``rows`` (all rows by default); ``max_depth < 0`` means unlimited."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    p = X.shape[1]
    rows = np.arange(len(y), dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    mtry = p if mtry is None else int(mtry)
    return _pack([kernels.build_tree(X, y, rows, int(min_leaf), int(max_depth), mtry, seed)], p)


def _fit_bootstrap(X, y, n_trees, min_leaf, max_depth, mtry, seed, jobs):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    presort = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))

    def grow(t):
        rows = rng_for(seed, BOOTSTRAP, t).integers(0, n, size=n).astype(np.int64)
        return kernels.build_tree(X, y, rows, min_leaf, max_depth, mtry, derive_seed(seed, TREE, t), presort)

    if jobs > 1:
        # the compiled kernel releases the GIL; results keep tree order
        with ThreadPoolExecutor(jobs) as ex:
            trees = list(ex.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return _pack(trees, p)


def fit_bagged_trees(X, y, n_trees: int = 500, min_leaf: int = 1, max_depth: int = -1,
                     seed: int = 0, jobs: int = 1) -> TreeEnsemble:
    """Bootstrap aggregation of full-feature trees."""
    p = np.shape(X)[1]
    return _fit_bootstrap(X, y, n_trees, min_leaf, max_depth, p, seed, jobs)


def fit_random_forest(X, y, n_trees: int = 500, min_leaf: int = 5, max_depth: int = -1,
                      mtry: int | None = None, seed: int = 0, jobs: int = 1) -> TreeEnsemble:
    """Bagged trees drawing ``mtry`` (default ``ceil(sqrt(p))``) candidate features per split."""
    p = np.shape(X)[1]
    if mtry is None:
        mtry = max(1, math.ceil(math.sqrt(p)))
    return _fit_bootstrap(X, y, n_trees, min_leaf, max_depth, min(int(mtry), p), seed, jobs)
