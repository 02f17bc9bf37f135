# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: CART tree growth, forest prediction, subgroup
screens, weighted lasso coordinate descent and the proximal Newton lasso.

Mirrors ``_pykernels``; see that module for the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite, INFINITY, exp, log1p, fabs
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()

ctypedef unsigned long long u64

cdef double SPLIT_EPS = 1e-12
cdef enum:
    N_SCREENS = 12


cdef inline u64 splitmix_next(u64 *state) noexcept nogil:
    state[0] += <u64>0x9E3779B97F4A7C15
    cdef u64 z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void sort_ints(cnp.int64_t *a, Py_ssize_t n) noexcept nogil:
    # insertion sort; n is the per-node feature count
    cdef Py_ssize_t i, j
    cdef cnp.int64_t t
    for i in range(1, n):
        t = a[i]
        j = i - 1
        while j >= 0 and a[j] > t:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = t


cdef _bootstrap_order(presort_in, rows_in):
    """Sorted positions of ``X[rows]`` per feature from the full-data orders ``presort`` (p x n)."""
    cdef cnp.int64_t[:, ::1] presort = np.ascontiguousarray(presort_in, dtype=np.int64)
    cdef cnp.int64_t[::1] rows = np.ascontiguousarray(rows_in, dtype=np.int64)
    cdef Py_ssize_t p = presort.shape[0], n = presort.shape[1], m = rows.shape[0]
    cdef cnp.int64_t[::1] start = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] posn = np.empty(max(m, 1), dtype=np.int64)
    out = np.empty((p, m), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] order = out
    cdef Py_ssize_t i, f, q, k, o
    for i in range(m):
        if rows[i] < 0 or rows[i] >= n:
            raise IndexError("bootstrap row outside the presorted data")
    with nogil:
        for i in range(m):
            start[rows[i] + 1] += 1
        for o in range(n):
            start[o + 1] += start[o]
        # positions grouped by source row, increasing within a group
        for i in range(m):
            o = rows[i]
            posn[start[o] + fill[o]] = i
            fill[o] += 1
        for f in range(p):
            q = 0
            for k in range(n):
                o = presort[f, k]
                for i in range(start[o], start[o + 1]):
                    order[f, q] = posn[i]
                    q += 1
    return out


def build_tree(X, y, rows, Py_ssize_t min_leaf, Py_ssize_t max_depth,
               Py_ssize_t mtry, seed, presort=None):
    cdef double[:, ::1] Xr = np.ascontiguousarray(np.asarray(X, dtype=np.float64)[rows])
    cdef cnp.int64_t[::1] yr = np.ascontiguousarray(np.asarray(y, dtype=np.int64)[rows])
    cdef Py_ssize_t m = Xr.shape[0]
    cdef Py_ssize_t p = Xr.shape[1]
    cdef u64 state = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    if p == 0:
        v0 = float(np.sum(yr)) / m if m > 0 else 0.0
        return (np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([v0]))

    # per-feature position orders; ties may come in any order, as splits
    # only fall between distinct values
    cdef cnp.int64_t[:, ::1] order
    if presort is None:
        order = np.ascontiguousarray(np.argsort(np.asarray(Xr), axis=0, kind="stable").T.astype(np.int64))
    else:
        order = _bootstrap_order(presort, rows)

    cap = 2 * m + 1 if m > 0 else 1
    cdef cnp.int64_t[::1] feature = np.full(cap, -1, dtype=np.int64)
    cdef double[::1] threshold = np.zeros(cap)
    cdef cnp.int64_t[::1] left = np.full(cap, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] right = np.full(cap, -1, dtype=np.int64)
    cdef double[::1] value = np.zeros(cap)
    cdef cnp.int64_t[::1] feats = np.zeros(max(p, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] buf = np.zeros(max(m, 1), dtype=np.int64)
    cdef unsigned char[::1] go_left = np.zeros(max(m, 1), dtype=np.uint8)

    # stack of (node, start, end, depth)
    cdef cnp.int64_t[:, ::1] stack = np.zeros((cap, 4), dtype=np.int64)
    cdef Py_ssize_t sp = 0
    cdef Py_ssize_t n_nodes = 1

    cdef Py_ssize_t node, start, end, depth, n, i, j, fi, f, nf, q, a, b_
    cdef Py_ssize_t cnt, best_f, lpos, rpos, nlc
    cdef double pos, neg, parent, best, score, s, pl, ql, pr, qr, nl, nr, lo, hi, thr
    cdef double best_lo = 0.0, best_hi = 0.0
    cdef cnp.int64_t *row

    with nogil:
        cnt = 0
        for i in range(m):
            cnt += yr[i]
        value[0] = (<double>cnt) / m if m > 0 else 0.0
        if m > 0:
            stack[0, 0] = 0
            stack[0, 1] = 0
            stack[0, 2] = m
            stack[0, 3] = 0
            sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp, 0]
            start = stack[sp, 1]
            end = stack[sp, 2]
            depth = stack[sp, 3]
            n = end - start
            cnt = 0
            for i in range(start, end):
                cnt += yr[order[0, i]]
            pos = <double>cnt
            if n < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
                continue
            if cnt == 0 or cnt == n:
                continue
            for i in range(p):
                feats[i] = i
            if mtry < p:
                for i in range(mtry):
                    j = i + <Py_ssize_t>(splitmix_next(&state) % <u64>(p - i))
                    q = feats[i]
                    feats[i] = feats[j]
                    feats[j] = q
                sort_ints(&feats[0], mtry)
                nf = mtry
            else:
                nf = p

            best = -INFINITY
            best_f = -1
            for fi in range(nf):
                f = feats[fi]
                row = &order[f, 0]
                score = -INFINITY
                a = -1
                cnt = 0
                for i in range(start, end - 1):
                    cnt += yr[row[i]]
                    nl = <double>(i - start + 1)
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    lo = Xr[row[i], f]
                    hi = Xr[row[i + 1], f]
                    if not lo < hi:
                        continue
                    pl = <double>cnt
                    ql = nl - pl
                    pr = pos - pl
                    qr = nr - pr
                    s = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
                    if s > score:
                        score = s
                        a = i
                if a >= 0 and score > best:
                    best = score
                    best_f = f
                    best_lo = Xr[row[a], f]
                    best_hi = Xr[row[a + 1], f]

            neg = n - pos
            parent = (pos * pos + neg * neg) / n
            if best_f < 0 or not best > parent + SPLIT_EPS * parent:
                continue
            thr = (best_lo + best_hi) * 0.5
            if thr >= best_hi:
                thr = best_lo

            row = &order[best_f, 0]
            nlc = 0
            for i in range(start, end):
                q = row[i]
                if Xr[q, best_f] <= thr:
                    go_left[q] = 1
                    nlc += 1
                else:
                    go_left[q] = 0
            # stable partition of every feature's segment
            for f in range(p):
                row = &order[f, 0]
                lpos = start
                rpos = 0
                for i in range(start, end):
                    q = row[i]
                    if go_left[q]:
                        row[lpos] = q
                        lpos += 1
                    else:
                        buf[rpos] = q
                        rpos += 1
                if rpos > 0:
                    memcpy(&row[lpos], &buf[0], rpos * sizeof(cnp.int64_t))

            feature[node] = best_f
            threshold[node] = thr
            left[node] = n_nodes
            right[node] = n_nodes + 1
            cnt = 0
            row = &order[0, 0]
            for i in range(start, start + nlc):
                cnt += yr[row[i]]
            value[n_nodes] = (<double>cnt) / nlc
            cnt = 0
            for i in range(start + nlc, end):
                cnt += yr[row[i]]
            value[n_nodes + 1] = (<double>cnt) / (n - nlc)

            stack[sp, 0] = n_nodes + 1
            stack[sp, 1] = start + nlc
            stack[sp, 2] = end
            stack[sp, 3] = depth + 1
            sp += 1
            stack[sp, 0] = n_nodes
            stack[sp, 1] = start
            stack[sp, 2] = start + nlc
            stack[sp, 3] = depth + 1
            sp += 1
            n_nodes += 2

    k = n_nodes
    return (
        np.asarray(feature)[:k].copy(),
        np.asarray(threshold)[:k].copy(),
        np.asarray(left)[:k].copy(),
        np.asarray(right)[:k].copy(),
        np.asarray(value)[:k].copy(),
    )


def predict_forest(X, feature, threshold, left, right, value, roots):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] fe = np.ascontiguousarray(feature, dtype=np.int64)
    cdef double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef cnp.int64_t[::1] le = np.ascontiguousarray(left, dtype=np.int64)
    cdef cnp.int64_t[::1] ri = np.ascontiguousarray(right, dtype=np.int64)
    cdef double[::1] va = np.ascontiguousarray(value, dtype=np.float64)
    cdef cnp.int64_t[::1] ro = np.ascontiguousarray(roots, dtype=np.int64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t T = ro.shape[0]
    out = np.zeros(n)
    cdef double[::1] acc = out
    cdef Py_ssize_t i, t, nd
    with nogil:
        for t in range(T):
            for i in range(n):
                nd = ro[t]
                while fe[nd] >= 0:
                    if Xv[i, fe[nd]] <= th[nd]:
                        nd = le[nd]
                    else:
                        nd = ri[nd]
                acc[i] += va[nd]
        if T > 0:
            for i in range(n):
                acc[i] /= T
    return out


cdef void _screens(const double *v, Py_ssize_t k, double *out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0, mean, d, ss = 0.0, s3 = 0.0, s4 = 0.0
    cdef double var, sd, m2, m3, m4, lo, hi, diff, lmean, lss, lsd, gaps, agaps
    cdef double rng, u, ks, t
    cdef double nan = 0.0 / 0.0
    for i in range(k):
        s += v[i]
    mean = s / k
    if v[k - 1] == v[0]:
        mean = v[0]  # s / k need not reproduce a repeated value exactly
    for i in range(k):
        d = v[i] - mean
        ss += d * d
        s3 += d * d * d
        s4 += d * d * d * d
    var = ss / (k - 1)
    sd = sqrt(var)
    m2 = ss / k
    m3 = s3 / k
    m4 = s4 / k
    lo = v[0]
    hi = v[k - 1]
    diff = v[1] - lo
    for i in range(N_SCREENS):
        out[i] = nan
    out[0] = var
    if mean != 0:
        out[1] = sd / mean
    if lo != 0:
        out[2] = (hi - lo) / lo
        out[5] = diff / lo
    if k >= 4 and m2 * m2 > 0:
        out[3] = m4 / (m2 * m2)
    out[4] = diff
    if k >= 4:
        lmean = 0.0
        for i in range(1, k):
            lmean += v[i]
        lmean /= (k - 1)
        if v[k - 1] == v[1]:
            lmean = v[1]
        lss = 0.0
        for i in range(1, k):
            d = v[i] - lmean
            lss += d * d
        lsd = sqrt(lss / (k - 2))
        if lsd > 0:
            out[6] = diff / lsd
    if k >= 3:
        gaps = 0.0
        for i in range(1, k - 1):
            gaps += v[i + 1] - v[i]
        gaps /= (k - 2)
        if gaps > 0:
            out[7] = diff / gaps
    agaps = 0.0
    for i in range(k - 1):
        agaps += v[i + 1] - v[i]
    agaps /= (k - 1)
    if agaps > 0:
        out[8] = diff / agaps
    if k >= 3 and m2 * sqrt(m2) > 0:
        out[9] = m3 / (m2 * sqrt(m2))
    rng = hi - lo
    if rng > 0:
        ks = 0.0
        for i in range(k):
            u = (v[i] - lo) / rng
            t = (<double>(i + 1)) / k - u
            if t > ks:
                ks = t
            t = u - (<double>i) / k
            if t > ks:
                ks = t
        out[10] = ks
    out[11] = <double>k
    for i in range(N_SCREENS):
        if not isfinite(out[i]):
            out[i] = nan  # overflow counts as undefined


def subgroup_screens(sorted_prices, Py_ssize_t k):
    cdef double[::1] b = np.ascontiguousarray(sorted_prices, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    if k < 2 or n < k:
        return np.empty((0, N_SCREENS))
    from math import comb
    cdef Py_ssize_t total = comb(n, k)
    res = np.empty((total, N_SCREENS))
    cdef double[:, ::1] out = res
    cdef Py_ssize_t *idx = <Py_ssize_t *>malloc(k * sizeof(Py_ssize_t))
    cdef double *v = <double *>malloc(k * sizeof(double))
    cdef Py_ssize_t r = 0, i, j
    try:
        with nogil:
            for i in range(k):
                idx[i] = i
            while True:
                for i in range(k):
                    v[i] = b[idx[i]]
                _screens(v, k, &out[r, 0])
                r += 1
                i = k - 1
                while i >= 0 and idx[i] == n - k + i:
                    i -= 1
                if i < 0:
                    break
                idx[i] += 1
                for j in range(i + 1, k):
                    idx[j] = idx[j - 1] + 1
    finally:
        free(idx)
        free(v)
    return res


cdef Py_ssize_t _cd(double[:, ::1] G, double[::1] c, double[::1] bv, double[::1] q,
                    double lam, double tol, Py_ssize_t max_sweeps) noexcept nogil:
    # q must hold G @ bv on entry and is kept in step
    cdef Py_ssize_t p = c.shape[0]
    cdef Py_ssize_t sweeps = 0, j, k
    cdef double change, hj, old, g, new, d
    while sweeps < max_sweeps:
        sweeps += 1
        change = 0.0
        for j in range(p):
            hj = G[j, j]
            old = bv[j]
            if hj <= 0.0:
                bv[j] = 0.0
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
                for k in range(p):
                    q[k] += d * G[k, j]
                bv[j] = new
                if hj * d * d > change:
                    change = hj * d * d
        if change < tol:
            break
    return sweeps


def cd_lasso(G_in, c_in, beta, double lam, double tol, Py_ssize_t max_sweeps):
    G_arr = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef double[:, ::1] G = G_arr
    cdef double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef double[::1] bv = beta
    cdef double[::1] q = np.ascontiguousarray(G_arr @ np.asarray(beta))
    cdef Py_ssize_t sweeps
    with nogil:
        sweeps = _cd(G, c, bv, q, lam, tol, max_sweeps)
    return sweeps


cdef inline double _expit(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _log1pexp(double x) noexcept nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sign(double x) noexcept nogil:
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


cdef double _l1_objective(double[:, ::1] X, double[::1] y, double[::1] beta, double b0,
                          double lam) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double s = 0.0, e, l1 = 0.0
    for i in range(n):
        e = b0
        for j in range(p):
            e += X[i, j] * beta[j]
        s += _log1pexp(e) - y[i] * e
    for j in range(p):
        l1 += fabs(beta[j])
    return s / n + lam * l1


cdef bint _solve(double *a, double *b, Py_ssize_t k) noexcept nogil:
    # Gaussian elimination with partial pivoting on a k x k row-major copy
    cdef Py_ssize_t i, j, r, piv
    cdef double m, t
    for i in range(k):
        piv = i
        for r in range(i + 1, k):
            if fabs(a[r * k + i]) > fabs(a[piv * k + i]):
                piv = r
        if a[piv * k + i] == 0.0:
            return False
        if piv != i:
            for j in range(k):
                t = a[i * k + j]
                a[i * k + j] = a[piv * k + j]
                a[piv * k + j] = t
            t = b[i]
            b[i] = b[piv]
            b[piv] = t
        for r in range(i + 1, k):
            m = a[r * k + i] / a[i * k + i]
            if m != 0.0:
                for j in range(i, k):
                    a[r * k + j] -= m * a[i * k + j]
                b[r] -= m * b[i]
    for i in range(k - 1, -1, -1):
        t = b[i]
        for j in range(i + 1, k):
            t -= a[i * k + j] * b[j]
        b[i] = t / a[i * k + i]
    return True


cdef bint _polish(double[:, ::1] G, double[::1] c, double[::1] beta, double lam,
                  cnp.int64_t *A, double *a, double *rhs, double *sol) noexcept nogil:
    cdef Py_ssize_t p = c.shape[0], k = 0, i, j, r
    cdef double t, scale = 0.0, res = 0.0
    for j in range(p):
        if beta[j] != 0.0:
            A[k] = j
            k += 1
    if k == 0:
        for j in range(p):
            if fabs(c[j]) > lam:
                return False
        return True
    for i in range(k):
        for j in range(k):
            a[i * k + j] = G[A[i], A[j]]
        rhs[i] = c[A[i]] - lam * _sign(beta[A[i]])
        sol[i] = rhs[i]
        if fabs(rhs[i]) > scale:
            scale = fabs(rhs[i])
    if not _solve(a, sol, k):
        return False
    for i in range(k):
        if not isfinite(sol[i]):
            return False
        t = -rhs[i]
        for j in range(k):
            t += G[A[i], A[j]] * sol[j]
        if fabs(t) > res:
            res = fabs(t)
    if res > 1e-12 * (1 + scale):
        return False
    for i in range(k):
        if _sign(sol[i]) != _sign(beta[A[i]]):
            return False
    # optimality of the coordinates off the support
    i = 0
    for j in range(p):
        if i < k and A[i] == j:
            i += 1
            continue
        t = c[j]
        for r in range(k):
            t -= G[j, A[r]] * sol[r]
        if fabs(t) > lam * (1 + 1e-12) + 1e-15:
            return False
    for j in range(p):
        beta[j] = 0.0
    for i in range(k):
        beta[A[i]] = sol[i]
    return True


def lasso_newton(X_in, y_in, double lam, beta_in, double b0, double tol, double loose,
                 Py_ssize_t max_outer, Py_ssize_t max_sweeps):
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef double[::1] beta = beta_in
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef double[::1] eta = np.empty(n), w = np.empty(n), z = np.empty(n)
    cdef double[::1] xbar = np.empty(p), c = np.empty(p), nb = np.empty(p), q = np.empty(p)
    cdef double[::1] cb = np.empty(p), d = np.empty(p)
    cdef double[:, ::1] G = np.empty((p, p))
    cdef cnp.int64_t[::1] A = np.empty(max(p, 1), dtype=np.int64)
    cdef double[::1] a = np.empty(max(p * p, 1)), rhs = np.empty(max(p, 1)), sol = np.empty(max(p, 1))
    cdef Py_ssize_t it = 0, i, j, k
    cdef bint done = False
    cdef double f, fc, f_old, strict, mu, sw, zbar, nb0, d0, t, cb0, step, s, xi, xj
    strict = (0.1 * tol) * (0.1 * tol)
    if loose < strict:
        loose = strict
    with nogil:
        f = _l1_objective(X, y, beta, b0, lam)
        for it in range(1, max_outer + 1):
            sw = 0.0
            for i in range(n):
                s = b0
                for j in range(p):
                    s += X[i, j] * beta[j]
                eta[i] = s
                mu = _expit(s)
                w[i] = mu * (1 - mu)
                if w[i] < 1e-5:
                    w[i] = 1e-5
                z[i] = s + (y[i] - mu) / w[i]
                sw += w[i]
            zbar = 0.0
            for i in range(n):
                zbar += w[i] * z[i]
            zbar /= sw
            for j in range(p):
                s = 0.0
                for i in range(n):
                    s += w[i] * X[i, j]
                xbar[j] = s / sw
            for j in range(p):
                s = 0.0
                for i in range(n):
                    s += w[i] * (X[i, j] - xbar[j]) * (z[i] - zbar)
                c[j] = s / n
                for k in range(j + 1):
                    s = 0.0
                    for i in range(n):
                        s += w[i] * (X[i, j] - xbar[j]) * (X[i, k] - xbar[k])
                    G[j, k] = s / n
                    G[k, j] = s / n
            for j in range(p):
                nb[j] = beta[j]
            for j in range(p):
                s = 0.0
                for k in range(p):
                    s += G[j, k] * nb[k]
                q[j] = s
            _cd(G, c, nb, q, lam, loose, max_sweeps)
            if not _polish(G, c, nb, lam, &A[0], &a[0], &rhs[0], &sol[0]) and strict < loose:
                for j in range(p):
                    s = 0.0
                    for k in range(p):
                        s += G[j, k] * nb[k]
                    q[j] = s
                _cd(G, c, nb, q, lam, strict, max_sweeps)
            nb0 = zbar
            for j in range(p):
                nb0 -= xbar[j] * nb[j]
                d[j] = nb[j] - beta[j]
            d0 = nb0 - b0
            t = 1.0
            while True:
                for j in range(p):
                    cb[j] = beta[j] + t * d[j]
                cb0 = b0 + t * d0
                fc = _l1_objective(X, y, cb, cb0, lam)
                if fc <= f or t < 1e-10:
                    break
                t *= 0.5
            step = fabs(t * d0)
            for j in range(p):
                if fabs(t * d[j]) > step:
                    step = fabs(t * d[j])
                beta[j] = cb[j]
            b0 = cb0
            f_old = f
            f = fc
            # near-separable folds creep along a flat direction; stop on a stalled objective too
            if step < tol or f_old - f <= tol * tol * (f if f > 1.0 else 1.0):
                done = True
                break
    if done:
        return b0, True, it
    return b0, False, max_outer
