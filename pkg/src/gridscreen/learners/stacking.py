"""Super learner: five base classifiers combined by simplex weights chosen on
cross-validated predictions."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from ..seeding import BAGGING, ENSEMBLE, FOLDS, FOREST, LASSO, PLATT, derive_seed, stratified_folds
from .linear import LinearModel, fit_lasso, fit_logistic
from .preprocess import Preprocessor
from .svm import CalibratedSVM, fit_svm
from .trees import TreeEnsemble, fit_bagged_trees, fit_random_forest

log = logging.getLogger(__name__)

LEARNERS = ("random_forest", "bagged_trees", "lasso", "svm", "logistic")
MIN_EXAMPLES = 20
FOLD_ATTEMPTS = 5


class FoldError(RuntimeError):
    """No fold assignment left every training part with both classes."""


class SchemaError(ValueError):
    """Prediction columns differ from the training columns."""


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 500
    tree_min_leaf: int = 1
    forest_min_leaf: int = 5
    max_depth: int = -1
    mtry: int = 0  # 0 means ceil(sqrt(p))
    svm_C: float = 1.0
    svm_epochs: int = 200
    platt_folds: int = 5
    lasso_n_lambda: int = 50
    lasso_folds: int = 10
    logistic_ridge: float = 1e-6
    logistic_max_iter: int = 100
    cv_folds: int = 10

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "Hyperparameters":
        defaults = cls()
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown learner hyperparameter {key!r}")
            kind = type(getattr(defaults, key))
            try:
                kwargs[key] = kind(float(raw)) if kind is float else int(str(raw).strip())
            except ValueError:
                raise ValueError(f"hyperparameter {key} expects {kind.__name__}, got {raw!r}") from None
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BaseModels:
    random_forest: TreeEnsemble
    bagged_trees: TreeEnsemble
    lasso: LinearModel
    svm: CalibratedSVM
    logistic: LinearModel

    def proba_matrix(self, Z: np.ndarray) -> np.ndarray:
        cols = [getattr(self, name).predict_proba(Z) for name in LEARNERS]
        return np.clip(np.column_stack(cols), 0.0, 1.0)


def fit_base_models(Z, y, hp: Hyperparameters, seed: int, jobs: int = 1) -> BaseModels:
    """All five learners on already preprocessed features ``Z``."""
    mtry = hp.mtry or None
    return BaseModels(
        random_forest=fit_random_forest(Z, y, hp.n_trees, hp.forest_min_leaf, hp.max_depth, mtry,
                                        seed=derive_seed(seed, FOREST), jobs=jobs),
        bagged_trees=fit_bagged_trees(Z, y, hp.n_trees, hp.tree_min_leaf, hp.max_depth,
                                      seed=derive_seed(seed, BAGGING), jobs=jobs),
        lasso=fit_lasso(Z, y, n_lambda=hp.lasso_n_lambda, n_folds=hp.lasso_folds,
                        seed=derive_seed(seed, LASSO)),
        svm=fit_svm(Z, y, hp.svm_C, hp.svm_epochs, hp.platt_folds, seed=derive_seed(seed, PLATT)),
        logistic=fit_logistic(Z, y, hp.logistic_ridge, hp.logistic_max_iter),
    )


def stack_loss(weights, Z, y) -> float:
    r = np.asarray(y, dtype=np.float64) - np.asarray(Z) @ np.asarray(weights)
    return float(r @ r)


def stack_weights(Z, y, tol: float = 1e-12) -> np.ndarray:
    """Exact minimiser of ``|y - Z w|^2`` over the probability simplex.

    Each support set is solved as an equality-constrained least-squares
    problem and kept when its solution is non-negative; the best feasible
    support wins.  Supports are visited by size, then in index order, and a
    later one must improve the loss by more than a relative ``tol`` so ties
    go to fewer learners with lower indices.  Supports whose system is
    singular (e.g. duplicated columns) are skipped; a smaller support always
    attains the same loss.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m = Z.shape[1]
    G = Z.T @ Z
    c = Z.T @ y
    best_w = None
    best = np.inf
    for size in range(1, m + 1):
        for S in combinations(range(m), size):
            S = list(S)
            k = len(S)
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = 2 * G[np.ix_(S, S)]
            A[:k, k] = 1.0
            A[k, :k] = 1.0
            rhs = np.append(2 * c[S], 1.0)
            if np.linalg.cond(A) > 1e12:
                continue
            sol = np.linalg.solve(A, rhs)[:k]
            if np.any(sol < -1e-12):
                continue
            w = np.zeros(m)
            w[S] = np.maximum(sol, 0.0)
            w /= w.sum()
            loss = stack_loss(w, Z, y)
            if best_w is None or loss < best - tol * max(1.0, best):
                best, best_w = loss, w
    return best_w


def _folds(y, n_folds: int, seed: int) -> np.ndarray:
    for attempt in range(FOLD_ATTEMPTS):
        folds = stratified_folds(y, n_folds, derive_seed(seed, FOLDS, attempt))
        ok = True
        for k in range(n_folds):
            train = y[folds != k]
            if min(int(train.sum()), int(len(train) - train.sum())) < 2:
                ok = False
                break
        if ok:
            return folds
        log.debug("fold assignment %d left a class short; re-stratifying", attempt)
    raise FoldError(f"no {n_folds}-fold split with both classes in every training part "
                    f"after {FOLD_ATTEMPTS} attempts")


@dataclass(frozen=True)
class TrainedEnsemble:
    columns: tuple[str, ...]
    preprocessor: Preprocessor
    models: BaseModels
    weights: np.ndarray
    hyperparameters: Hyperparameters
    seed: int
    cv_loss: float = float("nan")
    oof: np.ndarray = field(repr=False, default_factory=lambda: np.empty((0, len(LEARNERS))))

    def _matrix(self, X, columns: Sequence[str] | None) -> np.ndarray:
        if columns is not None and tuple(columns) != self.columns:
            missing = [c for c in self.columns if c not in columns]
            extra = [c for c in columns if c not in self.columns]
            detail = []
            if missing:
                detail.append("missing " + ", ".join(missing))
            if extra:
                detail.append("unexpected " + ", ".join(extra))
            if not detail:
                detail.append("columns in a different order")
            raise SchemaError("feature schema mismatch: " + "; ".join(detail))
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise SchemaError(f"expected {len(self.columns)} columns ({', '.join(self.columns)}), "
                              f"got shape {X.shape}")
        return X

    def base_proba(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        X = self._matrix(X, columns)
        return self.models.proba_matrix(self.preprocessor.transform(X))

    def predict_proba(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        return np.clip(self.base_proba(X, columns) @ self.weights, 0.0, 1.0)

    def classify(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        return classify(self.predict_proba(X, columns))


def classify(proba) -> np.ndarray:
    """1 (collusive) iff the probability is strictly above one half."""
    return (np.asarray(proba) > 0.5).astype(np.int64)


def fit_super_learner(X, y, columns: Sequence[str] | None = None, hp: Hyperparameters | None = None,
                      seed: int = 0, jobs: int = 1) -> TrainedEnsemble:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    hp = hp or Hyperparameters()
    n, p = X.shape
    if n < MIN_EXAMPLES:
        raise ValueError(f"super learner needs at least {MIN_EXAMPLES} examples, got {n}")
    columns = tuple(columns) if columns is not None else tuple(f"x{j}" for j in range(p))
    if len(columns) != p:
        raise SchemaError(f"{len(columns)} column names for {p} columns")

    folds = _folds(y, hp.cv_folds, seed)
    oof = np.zeros((n, len(LEARNERS)))
    for k in range(hp.cv_folds):
        test = folds == k
        if not test.any():
            continue
        train = ~test
        pre = Preprocessor.fit(X[train])
        models = fit_base_models(pre.transform(X[train]), y[train], hp,
                                 derive_seed(seed, ENSEMBLE, k), jobs)
        oof[test] = models.proba_matrix(pre.transform(X[test]))

    weights = stack_weights(oof, y)
    pre = Preprocessor.fit(X)
    models = fit_base_models(pre.transform(X), y, hp, derive_seed(seed, ENSEMBLE, hp.cv_folds), jobs)
    return TrainedEnsemble(columns, pre, models, weights, hp, int(seed),
                           stack_loss(weights, oof, y), oof)
