import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridscreen.learners import (Hyperparameters, Preprocessor, SchemaError, classify,
                                 fit_bagged_trees, fit_lasso, fit_logistic, fit_random_forest,
                                 fit_super_learner, fit_svm, fit_tree, stack_weights,
                                 train_linear_svm)
from gridscreen.learners.linear import logistic_gradient, logistic_objective
from gridscreen.learners.stacking import LEARNERS, FoldError, stack_loss
from gridscreen.learners.svm import fit_platt, svm_objective

CRIT = pytest.mark.criterion("Learner suite")


def noisy(n=120, p=3, seed=0, signal=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    logits = signal * (X[:, 0] - 0.5 * X[:, -1]) if p > 1 else signal * X[:, 0]
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-logits))).astype(float)
    return X, y


# ------------------------------------------------------------------ logistic

@CRIT
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_logistic_gradient_matches_central_differences(seed, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, p))
    y = (rng.uniform(size=30) < 0.5).astype(float)
    theta = rng.normal(size=p + 1)
    g = logistic_gradient(theta, X, y, ridge=0.3)
    h = 1e-5
    num = np.array([(logistic_objective(theta + h * e, X, y, 0.3)
                     - logistic_objective(theta - h * e, X, y, 0.3)) / (2 * h)
                    for e in np.eye(p + 1)])
    rel = np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-8)
    assert rel < 1e-4


def test_logistic_all_zero_features_gives_base_rate():
    X = np.zeros((40, 3))
    y = np.r_[np.ones(10), np.zeros(30)]
    m = fit_logistic(X, y)
    assert math.isclose(m.intercept, math.log(10 / 30), abs_tol=1e-8)
    yb = np.r_[np.ones(20), np.zeros(20)]
    assert np.allclose(fit_logistic(X, yb).predict_proba(X), 0.5)


def test_logistic_separable_reaches_full_accuracy():
    x = np.r_[np.linspace(-3, -1, 10), np.linspace(1, 3, 10)][:, None]
    y = (x[:, 0] > 0).astype(float)
    m = fit_logistic(x, y, max_iter=100)
    assert np.all((m.predict_proba(x) > 0.5) == (y == 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_logistic_label_flip_symmetry(seed):
    X, y = noisy(80, 3, seed)
    a = fit_logistic(X, y)
    b = fit_logistic(X, 1 - y)
    assert np.allclose(a.coef, -b.coef, atol=1e-8)
    assert math.isclose(a.intercept, -b.intercept, abs_tol=1e-8)


# ------------------------------------------------------------------ lasso

def _kkt_residual(m, X, y):
    """Largest violation of the lasso optimality conditions (mean NLL + lam |b|_1)."""
    mu = m.predict_proba(X)
    grad = X.T @ (mu - y) / len(y)
    out = abs(float(np.sum(mu - y)) / len(y))  # unpenalised intercept
    for g, b in zip(grad, m.coef):
        if b == 0:
            out = max(out, abs(g) - m.lam)
        else:
            out = max(out, abs(g + m.lam * np.sign(b)))
    return out


@CRIT
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_lasso_lambda_zero_matches_logistic(seed, p):
    X, y = noisy(150, p, seed, signal=0.7)
    a = fit_lasso(X, y, lambdas=[0.0])
    b = fit_logistic(X, y, ridge=0.0)
    assert b.converged
    assert np.max(np.abs(a.coef - b.coef)) < 1e-4
    assert abs(a.intercept - b.intercept) < 1e-4


@CRIT
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.floats(1e-3, 0.2))
def test_lasso_kkt(seed, p, lam):
    X, y = noisy(100, p, seed)
    m = fit_lasso(X, y, lambdas=[lam])
    assert _kkt_residual(m, X, y) <= 1e-6
    # in particular every zero slope has |subgradient| <= lam + 1e-6
    g = X.T @ (m.predict_proba(X) - y) / len(y)
    assert np.all(np.abs(g[m.coef == 0]) <= lam + 1e-6)


def test_lasso_huge_penalty_zeroes_slopes():
    X, y = noisy(90, 4, 3)
    m = fit_lasso(X, y, lambdas=[1e6])
    assert np.all(m.coef == 0)
    assert math.isclose(m.intercept, math.log(y.mean() / (1 - y.mean())), abs_tol=1e-8)


def test_lasso_cv_path_selects_penalty_and_satisfies_kkt():
    X, y = noisy(150, 6, 11)
    m = fit_lasso(X, y, seed=4)
    assert m.lam > 0 and _kkt_residual(m, X, y) <= 1e-6
    assert np.array_equal(fit_lasso(X, y, seed=4).coef, m.coef)


# ------------------------------------------------------------------ SVM

def test_svm_separable_toy_set():
    rng = np.random.default_rng(1)
    X = np.r_[rng.normal(2.5, 0.4, (20, 2)), rng.normal(-2.5, 0.4, (20, 2))]
    y = np.r_[np.ones(20), np.zeros(20)]
    svm = train_linear_svm(X, y)
    s = np.where(y > 0, 1, -1)
    assert np.all(s * svm.decision_function(X) > 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_svm_checkpoint_objective_non_increasing(seed):
    X, y = noisy(60, 3, seed)
    svm = train_linear_svm(X, y)
    trace = np.array(svm.trace)
    assert len(trace) == 20 and np.all(np.diff(trace) <= 0)
    s = np.where(y > 0, 1.0, -1.0)
    assert math.isclose(svm_objective(svm.coef, svm.intercept, X, s, 1.0), trace[-1])


def test_calibrated_svm_outputs_monotone_in_decision_value():
    X, y = noisy(100, 3, 5)
    m = fit_svm(X, y, seed=2)
    f = m.decision_function(X)
    p = m.predict_proba(X)
    assert np.all((p > 0) & (p < 1))
    order = np.argsort(f)
    assert np.all(np.diff(p[order]) >= 0)
    assert m.platt.a < 0  # larger decision values mean collusion


def test_platt_on_separated_scores():
    f = np.r_[np.linspace(-3, -1, 20), np.linspace(1, 3, 20)]
    y = np.r_[np.zeros(20), np.ones(20)]
    sc = fit_platt(f, y)
    assert sc(np.array([-3.0]))[0] < 0.1 and sc(np.array([3.0]))[0] > 0.9


# ------------------------------------------------------------------ trees

def _gini_split_oracle(X, y, rows):
    """All (impurity, feature, threshold) for a node, impurity as exact fractions."""
    out = []
    n = len(rows)
    for f in range(X.shape[1]):
        vals = sorted(set(X[rows, f]))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [r for r in rows if X[r, f] <= thr]
            right = [r for r in rows if X[r, f] > thr]
            imp = Fraction(0)
            for part in (left, right):
                k = len(part)
                pos = sum(int(y[r]) for r in part)
                imp += Fraction(k, n) * (1 - Fraction(pos, k) ** 2 - Fraction(k - pos, k) ** 2)
            out.append((imp, f, thr))
    return out


def _node_impurity(y, rows):
    k = len(rows)
    pos = sum(int(y[r]) for r in rows)
    return 1 - Fraction(pos, k) ** 2 - Fraction(k - pos, k) ** 2


def _check_tree_against_oracle(tree, X, y):
    stack = [(0, list(range(len(y))))]
    while stack:
        node, rows = stack.pop()
        pos = sum(int(y[r]) for r in rows)
        assert tree.value[node] == pos / len(rows)
        cands = _gini_split_oracle(X, y, rows)
        if tree.feature[node] < 0:
            # leaf: pure, or no split reduces impurity
            if cands and 0 < pos < len(rows):
                assert min(c[0] for c in cands) >= _node_impurity(y, rows) * (1 - Fraction(1, 10**9))
            continue
        best = min(c[0] for c in cands)
        f, thr = int(tree.feature[node]), float(tree.threshold[node])
        assert any(c[0] == best and c[1] == f and c[2] == thr for c in cands)
        left = [r for r in rows if X[r, f] <= thr]
        right = [r for r in rows if X[r, f] > thr]
        stack += [(int(tree.left[node]), left), (int(tree.right[node]), right)]


@CRIT
@settings(max_examples=80, deadline=None)
@given(st.integers(2, 12), st.integers(1, 3), st.integers(0, 10_000))
def test_tree_matches_exhaustive_split_search(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, size=(n, p)).astype(float)
    y = rng.integers(0, 2, size=n).astype(float)
    tree = fit_tree(X, y)
    _check_tree_against_oracle(tree, X, y)


def test_tree_single_perfect_feature_depth_one():
    X = np.c_[np.r_[np.zeros(5), np.ones(5)], np.arange(10) % 3]
    y = np.r_[np.zeros(5), np.ones(5)]
    t = fit_tree(X, y)
    assert t.depth() == 1 and t.feature[0] == 0 and t.threshold[0] == 0.5
    assert np.all((t.predict_proba(X) > 0.5) == (y == 1))


def test_forest_with_full_mtry_equals_bagging():
    X, y = noisy(50, 3, 8)
    rf = fit_random_forest(X, y, n_trees=1, min_leaf=1, mtry=3, seed=21)
    bag = fit_bagged_trees(X, y, n_trees=1, min_leaf=1, seed=21)
    for a in ("feature", "threshold", "left", "right", "value"):
        assert np.array_equal(getattr(rf, a), getattr(bag, a))


def test_tree_ensembles_deterministic_and_job_independent():
    X, y = noisy(60, 4, 2)
    a = fit_random_forest(X, y, n_trees=30, seed=5, jobs=1)
    b = fit_random_forest(X, y, n_trees=30, seed=5, jobs=3)
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    assert np.array_equal(a.feature, b.feature)


def test_min_leaf_and_depth_limits():
    X, y = noisy(80, 3, 6)
    t = fit_tree(X, y, min_leaf=10)
    leaves = t.predict_proba(X)  # leaf values
    assert t.depth() >= 1
    assert fit_tree(X, y, max_depth=2).depth() <= 2
    counts = {}
    for row in X:
        node = 0
        while t.feature[node] >= 0:
            node = t.left[node] if row[t.feature[node]] <= t.threshold[node] else t.right[node]
        counts[node] = counts.get(node, 0) + 1
    assert min(counts.values()) >= 10 and len(leaves) == len(y)


# ------------------------------------------------------------------ preprocessing

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_standardisation_round_trip(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(5, 3, size=(20, 4))
    pre = Preprocessor.fit(X)
    assert np.allclose(pre.inverse_transform(pre.transform(X)), X, rtol=0, atol=1e-12)
    Z = pre.transform(X)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-12) and np.allclose(Z.std(axis=0), 1)


def test_imputation_and_constant_columns():
    X = np.array([[1.0, np.nan, 3.0], [3.0, np.nan, 3.0], [np.nan, np.nan, 3.0]])
    pre = Preprocessor.fit(X)
    assert pre.medians.tolist() == [2.0, 0.0, 3.0]
    Z = pre.transform(X)
    assert not np.isnan(Z).any() and np.all(Z[:, 1:] == 0)


def test_preprocessing_sees_training_rows_only():
    X, y = noisy(60, 3, 1)
    train = np.arange(45)
    canary = X.copy()
    canary[50, 0] = 1e9  # test-only extreme value
    a = fit_super_learner(X[train], y[train], hp=Hyperparameters(n_trees=20), seed=1)
    b = fit_super_learner(canary[train], y[train], hp=Hyperparameters(n_trees=20), seed=1)
    assert np.array_equal(a.preprocessor.means, b.preprocessor.means)
    assert np.array_equal(a.preprocessor.medians, b.preprocessor.medians)


# ------------------------------------------------------------------ stacking

def _grid_min(Z, y, step):
    k = round(1 / step)
    best = math.inf
    m = Z.shape[1]
    for c in itertools.combinations(range(k + m - 1), m - 1):
        parts = np.diff(np.r_[-1, c, k + m - 1]) - 1
        best = min(best, stack_loss(parts / k, Z, y))
    return best


@CRIT
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_stacking_weights_simplex_and_beat_grid_and_pure(seed):
    rng = np.random.default_rng(seed)
    n = 40
    y = rng.integers(0, 2, n).astype(float)
    Z = np.clip(np.c_[y * 0.6 + rng.uniform(0, 0.4, n), rng.uniform(size=n),
                      0.5 + 0.3 * (y - 0.5) + rng.normal(0, 0.2, n)], 0, 1)
    w = stack_weights(Z, y)
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-12
    loss = stack_loss(w, Z, y)
    assert loss <= _grid_min(Z, y, 0.01) + 1e-12
    for j in range(Z.shape[1]):
        assert loss <= stack_loss(np.eye(3)[j], Z, y) + 1e-12


@CRIT
def test_stacking_five_learners_against_grid():
    rng = np.random.default_rng(3)
    n = 60
    y = rng.integers(0, 2, n).astype(float)
    Z = np.clip(np.c_[y * 0.7 + rng.uniform(0, 0.3, n), np.full(n, 0.5), np.full(n, 0.5),
                      rng.uniform(size=n), 0.3 + 0.4 * y + rng.normal(0, 0.25, n)], 0, 1)
    w = stack_weights(Z, y)
    assert w[0] >= 0.5
    loss = stack_loss(w, Z, y)
    assert loss <= _grid_min(Z, y, 0.05) + 1e-12
    assert all(loss <= stack_loss(e, Z, y) + 1e-12 for e in np.eye(5))


def test_stacking_identical_learners_tie_goes_to_lower_index():
    rng = np.random.default_rng(4)
    y = rng.integers(0, 2, 30).astype(float)
    good = np.clip(y * 0.8 + 0.1 + rng.normal(0, 0.05, 30), 0, 1)
    Z = np.c_[rng.uniform(size=30), good, good]
    w = stack_weights(Z, y)
    single = stack_weights(Z[:, :2], y)
    assert math.isclose(w[1] + w[2], single[1], abs_tol=1e-12)
    assert w[2] == 0


def test_stacking_perfect_learners_attain_zero_loss():
    y = np.r_[np.ones(10), np.zeros(10)]
    Z = np.c_[y, y, y]
    assert stack_loss(stack_weights(Z, y), Z, y) == 0


# ------------------------------------------------------------------ super learner

@pytest.fixture(scope="module")
def fitted():
    X, y = noisy(80, 3, 12, signal=2.0)
    return X, y, fit_super_learner(X, y, ("a", "b", "c"), Hyperparameters(n_trees=50), seed=9)


def test_super_learner_probabilities_are_convex_combinations(fitted):
    X, y, m = fitted
    base = m.base_proba(X)
    p = m.predict_proba(X)
    assert np.all(base >= 0) and np.all(base <= 1)
    assert np.all(p >= base.min(axis=1) - 1e-12) and np.all(p <= base.max(axis=1) + 1e-12)
    assert abs(m.weights.sum() - 1) <= 1e-12 and len(m.weights) == len(LEARNERS)
    assert m.oof.shape == (80, 5) and m.cv_loss == stack_loss(m.weights, m.oof, y)


def test_super_learner_deterministic(fitted):
    X, y, m = fitted
    again = fit_super_learner(X, y, ("a", "b", "c"), Hyperparameters(n_trees=50), seed=9)
    assert np.array_equal(again.weights, m.weights)
    assert np.array_equal(again.predict_proba(X), m.predict_proba(X))


def test_schema_mismatch_names_columns(fitted):
    X, _, m = fitted
    with pytest.raises(SchemaError, match="missing c.*unexpected d"):
        m.predict_proba(X, ("a", "b", "d"))
    with pytest.raises(SchemaError, match="3 columns"):
        m.predict_proba(X[:, :2])


def test_threshold_is_strict():
    assert classify([0.5, 0.5000001, 0.4999, 1.0]).tolist() == [0, 1, 0, 1]


def test_super_learner_needs_twenty_examples():
    X, y = noisy(19, 2, 0)
    with pytest.raises(ValueError, match="20"):
        fit_super_learner(X, y)


def test_fold_error_when_class_too_small():
    X, y = noisy(40, 2, 0)
    y = np.zeros(40)
    y[:2] = 1
    with pytest.raises(FoldError):
        fit_super_learner(X, y, hp=Hyperparameters(n_trees=5))


def test_hyperparameters_from_mapping():
    hp = Hyperparameters.from_mapping({"n_trees": "7", "svm_C": "0.5"})
    assert hp.n_trees == 7 and hp.svm_C == 0.5
    with pytest.raises(KeyError):
        Hyperparameters.from_mapping({"nope": 1})
    with pytest.raises(ValueError):
        Hyperparameters.from_mapping({"n_trees": "many"})
