"""Linear soft-margin SVM with Platt-calibrated probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..seeding import stratified_folds


def svm_objective(w, b, X, s, C: float) -> float:
    """Sum of hinge losses plus ``|w|^2 / (2C)``; ``s`` holds labels in {-1, +1}."""
    margins = s * (X @ w + b)
    return float(np.maximum(0.0, 1.0 - margins).sum() + (w @ w) / (2 * C))


@dataclass(frozen=True)
class LinearSVM:
    coef: np.ndarray
    intercept: float
    trace: tuple[float, ...] = ()

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept


def train_linear_svm(X, y, C: float = 1.0, epochs: int = 200, checkpoint_every: int = 10,
                     step: float = 0.2) -> LinearSVM:
    """Deterministic full-batch subgradient descent with suffix averaging.

    The step at epoch ``t`` is ``step / (R * sqrt(t))`` with ``R`` the largest
    row norm; iterates from the second half of the run are averaged.  Every
    ``checkpoint_every`` epochs the average and the current iterate are scored;
    subgradient methods are not descent methods, so the best point seen is
    kept and ``trace`` records its objective at each checkpoint.
    """
    X = np.asarray(X, dtype=np.float64)
    s = np.where(np.asarray(y) > 0, 1.0, -1.0)
    n, p = X.shape
    w = np.zeros(p)
    b = 0.0
    avg_w = np.zeros(p)
    avg_b = 0.0
    n_avg = 0
    best_w, best_b = w.copy(), b
    best = svm_objective(w, b, X, s, C)
    trace = []
    radius = math.sqrt(max(1.0, float(np.max(np.sum(X * X, axis=1), initial=0.0))))
    for t in range(1, epochs + 1):
        active = s * (X @ w + b) < 1.0
        gw = w / C - (s[active, None] * X[active]).sum(axis=0)
        gb = -s[active].sum()
        eta = step / (radius * math.sqrt(t))
        w = w - eta * gw
        b = b - eta * gb
        if t > epochs // 2:
            n_avg += 1
            avg_w += (w - avg_w) / n_avg
            avg_b += (b - avg_b) / n_avg
        if t % checkpoint_every == 0 or t == epochs:
            candidates = ((avg_w, avg_b), (w, b)) if n_avg else ((w, b),)
            for cw, cb in candidates:
                obj = svm_objective(cw, cb, X, s, C)
                if obj < best:
                    best, best_w, best_b = obj, cw.copy(), cb
            trace.append(best)
    return LinearSVM(best_w, float(best_b), tuple(trace))


@dataclass(frozen=True)
class PlattScaler:
    a: float
    b: float

    def __call__(self, f) -> np.ndarray:
        # P(y=1 | f) = 1 / (1 + exp(a f + b))
        return expit(-(self.a * np.asarray(f, dtype=np.float64) + self.b))


def fit_platt(f, y, max_iter: int = 100) -> PlattScaler:
    """Newton fit of the sigmoid with Platt's smoothed targets."""
    f = np.asarray(f, dtype=np.float64)
    y = np.asarray(y) > 0
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    t = np.where(y, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def loss(a, b):
        z = a * f + b
        return float(np.sum(t * z + np.logaddexp(0.0, -z)))

    fval = loss(a, b)
    for _ in range(max_iter):
        z = a * f + b
        p = expit(-z)  # model probability of class 1
        d1 = t - p
        d2 = p * (1 - p)
        h11 = float(np.sum(f * f * d2)) + 1e-12
        h22 = float(np.sum(d2)) + 1e-12
        h21 = float(np.sum(f * d2))
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = loss(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2
        else:
            break
    return PlattScaler(a, b)


@dataclass(frozen=True)
class CalibratedSVM:
    svm: LinearSVM
    platt: PlattScaler
    oof_decision: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    def decision_function(self, X) -> np.ndarray:
        return self.svm.decision_function(X)

    def predict_proba(self, X) -> np.ndarray:
        return self.platt(self.decision_function(X))


def fit_svm(X, y, C: float = 1.0, epochs: int = 200, platt_folds: int = 5, seed: int = 0) -> CalibratedSVM:
    """Linear SVM; probabilities come from a sigmoid fitted on out-of-fold decision values."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    folds = stratified_folds(y, platt_folds, seed)
    oof = np.zeros(len(y))
    for k in range(platt_folds):
        test = folds == k
        if not test.any():
            continue
        train = ~test
        if len(np.unique(y[train])) < 2:
            oof[test] = 0.0
            continue
        oof[test] = train_linear_svm(X[train], y[train], C, epochs).decision_function(X[test])
    final = train_linear_svm(X, y, C, epochs)
    return CalibratedSVM(final, fit_platt(oof, y), oof)
