"""Logistic regression and L1-penalised (lasso) logistic regression."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .. import kernels
from .._pykernels import gram_system  # noqa: F401  (public: the lasso subproblem)
from ..seeding import stratified_folds

log = logging.getLogger(__name__)

MIN_PATH = 5
# coordinate-descent tolerance before the exact support solve
INNER_LOOSE = 1e-8


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    converged: bool = True
    n_iter: int = 0
    lam: float = 0.0

    def decision_function(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))


def negloglik(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def logistic_objective(theta, X, y, ridge: float = 1e-6) -> float:
    """Negative log-likelihood plus ``ridge/2 * |slopes|^2``; ``theta[0]`` is the intercept."""
    theta = np.asarray(theta, dtype=np.float64)
    eta = theta[0] + X @ theta[1:]
    return negloglik(eta, y) + 0.5 * ridge * float(theta[1:] @ theta[1:])


def logistic_gradient(theta, X, y, ridge: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    r = expit(theta[0] + X @ theta[1:]) - y
    g = np.empty_like(theta)
    g[0] = r.sum()
    g[1:] = X.T @ r + ridge * theta[1:]
    return g


def fit_logistic(X, y, ridge: float = 1e-6, max_iter: int = 100, tol: float = 1e-10) -> LinearModel:
    """Maximum likelihood by iteratively reweighted least squares.

    Newton steps are halved until the objective decreases.  Under perfect
    separation the fit stops at ``max_iter`` with ``converged=False`` and the
    (large) coefficients remain usable.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    theta = np.zeros(p + 1)
    f = logistic_objective(theta, X, y, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(A @ theta)
        w = mu * (1 - mu)
        g = A.T @ (mu - y) + pen * theta
        H = (A * w[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            fc = logistic_objective(cand, X, y, ridge)
            if fc <= f or t < 1e-10:
                break
            t *= 0.5
        delta = np.max(np.abs(cand - theta)) if len(theta) else 0.0
        stalled = fc >= f
        theta, f = cand, min(f, fc)
        if delta < tol or np.max(np.abs(step)) < tol:
            converged = True
            break
        if stalled:
            # no decrease along the Newton direction: at machine precision
            converged = bool(np.max(np.abs(g)) < 1e-6 * max(1.0, f))
            break
    if not converged:
        log.debug("logistic IRLS hit %d iterations without converging", max_iter)
    return LinearModel(theta[1:].copy(), float(theta[0]), converged, it)


def _fit_l1_at(X, y, lam, beta, b0, tol=1e-10, max_outer=200, max_sweeps=10_000):
    """One penalty by proximal Newton (see ``kernels.lasso_newton``); updates ``beta`` in place."""
    return kernels.lasso_newton(X, y, float(lam), beta, float(b0), float(tol), INNER_LOOSE,
                                max_outer, max_sweeps)


def lambda_max(X, y) -> float:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] == 0:
        return 1.0
    return float(np.max(np.abs(X.T @ (y - y.mean()))) / len(y))


def lambda_path(X, y, n_lambda: int = 50) -> np.ndarray:
    """Log-spaced from the smallest penalty zeroing all slopes downwards."""
    n, p = np.shape(X)
    top = max(lambda_max(X, y), 1e-8)
    ratio = 1e-4 if n > p else 1e-2
    return np.geomspace(top, top * ratio, n_lambda)


def _fit_path(X, y, lambdas, tol=1e-10, early_stop=False):
    """Warm-started fits along decreasing penalties.

    With ``early_stop`` the path ends once the training deviance stalls
    (relative gain below 1e-5 of the null deviance) or explains 99.9% of it,
    but never before ``MIN_PATH`` penalties;
    smaller penalties would only chase a (near) separating direction.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    beta = np.zeros(X.shape[1])
    ybar = np.clip(y.mean(), 1e-10, 1 - 1e-10)
    b0 = float(np.log(ybar / (1 - ybar)))
    null_dev = 2 * negloglik(np.full(len(y), b0), y)
    prev = null_dev
    out = []
    for lam in lambdas:
        b0, ok, it = _fit_l1_at(X, y, float(lam), beta, b0, tol=tol)
        out.append(LinearModel(beta.copy(), b0, ok, it, float(lam)))
        if early_stop and null_dev > 0:
            dev = 2 * negloglik(b0 + X @ beta, y)
            if len(out) >= MIN_PATH and (dev <= 1e-3 * null_dev or prev - dev < 1e-5 * null_dev):
                break
            prev = dev
    return out


def _deviance(model: LinearModel, X, y) -> float:
    p = np.clip(model.predict_proba(X), 1e-10, 1 - 1e-10)
    return float(-2 * np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def fit_lasso(X, y, lambdas=None, n_lambda: int = 50, n_folds: int = 10, seed: int = 0,
              tol: float = 1e-10, cv_tol: float = 1e-6) -> LinearModel:
    """L1-penalised logistic regression, objective ``mean NLL + lam * |slopes|_1``.

    A single given penalty is fitted directly.  Otherwise the path is first
    fitted on all rows (ending early once the deviance stalls), and the
    penalty on that path with the lowest stratified ``n_folds``-fold
    cross-validated deviance is returned.  Fold paths are solved to
    ``cv_tol`` since they only rank penalties.  The intercept is never
    penalised.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lambdas is None:
        lambdas = lambda_path(X, y, n_lambda)
    lambdas = np.sort(np.atleast_1d(np.asarray(lambdas, dtype=np.float64)))[::-1]
    if len(lambdas) == 1:
        return _fit_path(X, y, lambdas, tol)[-1]

    full = _fit_path(X, y, lambdas, tol, early_stop=True)
    lambdas = lambdas[: len(full)]
    folds = stratified_folds(y, n_folds, seed)
    dev = np.zeros(len(lambdas))
    used = 0
    for f in range(n_folds):
        test = folds == f
        train = ~test
        if not test.any() or len(np.unique(y[train])) < 2:
            continue
        used += 1
        for i, m in enumerate(_fit_path(X[train], y[train], lambdas, cv_tol)):
            dev[i] += _deviance(m, X[test], y[test])
    best = int(np.argmin(dev)) if used else 0
    return full[best]
