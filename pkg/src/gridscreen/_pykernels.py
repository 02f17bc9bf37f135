"""Pure-Python (numpy) implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation.  Tree building and
forest prediction are bit-identical across the two backends: both scan split
candidates in the same order, compute Gini scores with the same float
expression and draw per-node feature subsets from the same splitmix64 stream.
"""
from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np
from scipy.special import expit

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
# relative gain a split must beat the parent node by
SPLIT_EPS = 1e-12
N_SCREENS = 12


class SplitMix64:
    """splitmix64 stream; identical sequence to the compiled kernel."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def draw_features(rng: SplitMix64, n_features: int, mtry: int) -> list[int]:
    feats = list(range(n_features))
    for i in range(mtry):
        j = i + rng.next() % (n_features - i)
        feats[i], feats[j] = feats[j], feats[i]
    return sorted(feats[:mtry])


def build_tree(X, y, rows, min_leaf, max_depth, mtry, seed, presort=None):
    """Grow one CART classification tree on ``X[rows]``.

    Returns ``(feature, threshold, left, right, value)``; ``feature == -1``
    marks a leaf and ``value`` is the class-1 fraction of the node.
    ``presort`` (per-feature stable argsort of ``X``, shape p x n) only
    speeds up the compiled kernel; this version sorts each node directly.
    """
    X = np.asarray(X, dtype=np.float64)
    n_features = X.shape[1]
    Xr = X[rows]
    yr = np.asarray(y, dtype=np.float64)[rows]
    m = len(rows)
    rng = SplitMix64(seed)

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [float(yr.sum()) / m if m else 0.0]

    stack = [(0, np.arange(m), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = len(idx)
        yi = yr[idx]
        pos = float(yi.sum())
        if n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        if pos == 0.0 or pos == n:
            continue
        if mtry < n_features:
            feats = draw_features(rng, n_features, mtry)
        else:
            feats = range(n_features)

        best = -np.inf
        best_f = -1
        lo = hi = 0.0
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        for f in feats:
            v = Xr[idx, f]
            o = np.argsort(v, kind="stable")
            vs = v[o]
            pl = np.cumsum(yi[o])[:-1]
            ql = nl - pl
            pr = pos - pl
            qr = nr - pr
            score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
            valid = (vs[:-1] < vs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
            if not valid.any():
                continue
            score = np.where(valid, score, -np.inf)
            j = int(np.argmax(score))
            if score[j] > best:
                best = score[j]
                best_f = f
                lo, hi = vs[j], vs[j + 1]

        neg = n - pos
        parent = (pos * pos + neg * neg) / n
        if best_f < 0 or not best > parent + SPLIT_EPS * parent:
            continue
        thr = (lo + hi) * 0.5
        if thr >= hi:
            thr = lo

        go_left = Xr[idx, best_f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        lid, rid = len(feature), len(feature) + 1
        for child in (li, ri):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(yr[child].sum()) / len(child))
        feature[node] = best_f
        threshold[node] = thr
        left[node] = lid
        right[node] = rid
        stack.append((rid, ri, depth + 1))
        stack.append((lid, li, depth + 1))

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def predict_forest(X, feature, threshold, left, right, value, roots):
    """Mean leaf value over the trees whose root nodes are ``roots``."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    acc = np.zeros(n)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                break
            a = rows[active]
            na = node[active]
            go = X[a, f[active]] <= threshold[na]
            node[active] = np.where(go, left[na], right[na])
        acc += value[node]
    if len(roots):
        acc /= len(roots)
    return acc


def subgroup_screens(sorted_prices, k):
    """Classical screens of every size-``k`` subgroup of a sorted price vector.

    Rows follow lexicographic index order of the combinations; columns are
    var, cv, spread, kurt, diff, diffp, rd, rdnor, rdalt, skew, ks, n_bids.
    Undefined values are NaN.
    """
    b = np.asarray(sorted_prices, dtype=np.float64)
    n = len(b)
    if k < 2 or n < k:
        return np.empty((0, N_SCREENS))
    idx = np.fromiter(
        (i for c in combinations(range(n), k) for i in c), dtype=np.int64, count=comb(n, k) * k
    ).reshape(-1, k)
    v = b[idx]
    out = np.full((len(v), N_SCREENS), np.nan)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mean = v.sum(axis=1) / k
        # sum / k need not reproduce a repeated value exactly
        mean = np.where(v[:, -1] == v[:, 0], v[:, 0], mean)
        d = v - mean[:, None]
        ss = (d * d).sum(axis=1)
        var = ss / (k - 1)
        sd = np.sqrt(var)
        m2 = ss / k
        m3 = (d * d * d).sum(axis=1) / k
        m4 = (d * d * d * d).sum(axis=1) / k
        lo, second, hi = v[:, 0], v[:, 1], v[:, -1]
        diff = second - lo

        out[:, 0] = var
        out[:, 1] = np.where(mean != 0, sd / mean, np.nan)
        out[:, 2] = np.where(lo != 0, (hi - lo) / lo, np.nan)
        if k >= 4:
            out[:, 3] = np.where(m2 * m2 > 0, m4 / (m2 * m2), np.nan)
        out[:, 4] = diff
        out[:, 5] = np.where(lo != 0, diff / lo, np.nan)
        if k >= 4:
            losing = v[:, 1:]
            lmean = losing.sum(axis=1) / (k - 1)
            lmean = np.where(v[:, -1] == v[:, 1], v[:, 1], lmean)
            ld = losing - lmean[:, None]
            lsd = np.sqrt((ld * ld).sum(axis=1) / (k - 2))
            out[:, 6] = np.where(lsd > 0, diff / lsd, np.nan)
        if k >= 3:
            gaps = np.diff(v[:, 1:], axis=1).sum(axis=1) / (k - 2)
            out[:, 7] = np.where(gaps > 0, diff / gaps, np.nan)
        agaps = np.diff(v, axis=1).sum(axis=1) / (k - 1)
        out[:, 8] = np.where(agaps > 0, diff / agaps, np.nan)
        if k >= 3:
            out[:, 9] = np.where(m2 * np.sqrt(m2) > 0, m3 / (m2 * np.sqrt(m2)), np.nan)
        rng = hi - lo
        u = (v - lo[:, None]) / rng[:, None]
        i = np.arange(1, k + 1) / k
        im1 = np.arange(0, k) / k
        ks = np.maximum(i - u, u - im1).max(axis=1)
        out[:, 10] = np.where(rng > 0, ks, np.nan)
        out[:, 11] = float(k)
    out[~np.isfinite(out)] = np.nan  # overflow counts as undefined
    return out


def cd_lasso(G, c, beta, lam, tol, max_sweeps):
    """Cyclic coordinate descent on ``beta'G beta / 2 - c'beta + lam * |beta|_1``.

    Covariance form of a weighted lasso: each sweep costs O(p^2).  ``beta``
    is updated in place; stops once the largest ``G_jj * step_j**2`` of a
    sweep is below ``tol``.  Returns the number of sweeps.
    """
    G = np.asarray(G, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    p = len(c)
    q = G @ beta
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for j in range(p):
            hj = G[j, j]
            old = beta[j]
            if hj <= 0.0:
                beta[j] = 0.0
                continue
            g = c[j] - q[j] + hj * old
            if g > lam:
                new = (g - lam) / hj
            elif g < -lam:
                new = (g + lam) / hj
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                q += d * G[:, j]
                beta[j] = new
                change = max(change, hj * d * d)
        if change < tol:
            break
    return sweeps


def gram_system(X, w, z):
    """Weighted, centred normal equations of the lasso subproblem.

    Returns ``(G, c, xbar, zbar)`` with ``G = Xc' W Xc / n`` and
    ``c = Xc' W (z - zbar) / n`` where ``Xc`` is ``X`` minus its weighted
    column means ``xbar``; the intercept is ``zbar - xbar . beta``.
    """
    n = X.shape[0]
    sw = float(w.sum())
    xbar = (w @ X) / sw
    zbar = float(w @ z) / sw
    Xc = X - xbar
    Wx = Xc * w[:, None]
    G = np.ascontiguousarray((Wx.T @ Xc) / n)
    c = (Wx.T @ (z - zbar)) / n
    return G, c, xbar, zbar


def polish(G, c, beta, lam) -> bool:
    """Solve the subproblem exactly on the support of ``beta``.

    Accepted (and written into ``beta``) only when the solution keeps the
    signs of the support and every other coordinate satisfies its
    optimality condition ``|c_j - G_j . beta| <= lam``.
    """
    A = np.flatnonzero(beta)
    if len(A) == 0:
        return bool(np.all(np.abs(c) <= lam))
    s = np.sign(beta[A])
    GA = G[np.ix_(A, A)]
    rhs = c[A] - lam * s
    try:
        bA = np.linalg.solve(GA, rhs)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(bA)) or np.max(np.abs(GA @ bA - rhs)) > 1e-12 * (1 + np.max(np.abs(rhs))):
        return False
    if np.any(np.sign(bA) != s):
        return False
    grad = c - G[:, A] @ bA
    inactive = np.ones(len(c), dtype=bool)
    inactive[A] = False
    if np.any(np.abs(grad[inactive]) > lam * (1 + 1e-12) + 1e-15):
        return False
    beta[:] = 0.0
    beta[A] = bA
    return True


def l1_objective(beta, b0, X, y, lam) -> float:
    """``mean NLL + lam * |beta|_1`` of a logistic model."""
    eta = b0 + X @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta)) / len(y) + lam * float(np.abs(beta).sum())


def lasso_newton(X, y, lam, beta, b0, tol, loose, max_outer, max_sweeps):
    """Proximal Newton for one penalty of the L1 logistic objective.

    Each step solves the weighted quadratic model by coordinate descent to
    ``loose``, solves the found support exactly, and falls back to the
    strict tolerance ``(tol / 10)**2`` only when that fails; a backtracking
    step on the true objective follows.  ``beta`` is updated in place.
    Returns ``(b0, converged, iterations)``.
    """
    f = l1_objective(beta, b0, X, y, lam)
    strict = (0.1 * tol) ** 2
    loose = max(strict, loose)
    for it in range(1, max_outer + 1):
        eta = b0 + X @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-5)
        z = eta + (y - mu) / w
        G, c, xbar, zbar = gram_system(X, w, z)
        nb = beta.copy()
        cd_lasso(G, c, nb, lam, loose, max_sweeps)
        if not polish(G, c, nb, lam) and strict < loose:
            cd_lasso(G, c, nb, lam, strict, max_sweeps)
        nb0 = zbar - float(xbar @ nb)
        d, d0 = nb - beta, nb0 - b0
        t = 1.0
        while True:
            cb, cb0 = beta + t * d, b0 + t * d0
            fc = l1_objective(cb, cb0, X, y, lam)
            if fc <= f or t < 1e-10:
                break
            t *= 0.5
        step = max(np.max(np.abs(t * d)) if len(d) else 0.0, abs(t * d0))
        beta[:] = cb
        b0, f_old, f = cb0, f, fc
        # near-separable folds creep along a flat direction; stop on a stalled objective too
        if step < tol or f_old - f <= tol * tol * max(1.0, f):
            return b0, True, it
    return b0, False, max_outer
