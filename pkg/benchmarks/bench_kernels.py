"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on the same inputs under both backends; the script reports
the best wall time of ``--repeat`` runs, the speed-up, and whether the
outputs agree (``lasso_newton`` to solver accuracy, the rest exactly).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gridscreen import kernels
from gridscreen.learners.linear import gram_system


def _inputs(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    n, p = 400, 16
    X = rng.normal(size=(n, p))
    y = (X[:, 0] + 0.5 * X[:, 1] + rng.normal(size=n) > 0).astype(np.float64)
    rows = rng.integers(0, n, n).astype(np.int64)
    prices = np.sort(rng.lognormal(4.5, 0.3, 18))
    w = rng.uniform(0.1, 0.25, n)
    z = rng.normal(size=n)
    return {"X": X, "y": y, "rows": rows, "prices": prices, "w": w, "z": z}


def _cases(d: dict):
    yield "build_tree", lambda k: k.build_tree(d["X"], d["y"], d["rows"], 1, -1, 4, 7)
    presort = np.ascontiguousarray(np.argsort(d["X"], axis=0, kind="stable").T.astype(np.int64))
    yield "build_tree (presorted)", lambda k: k.build_tree(d["X"], d["y"], d["rows"], 1, -1, 4, 7, presort)

    def forest(k):
        trees = [k.build_tree(d["X"], d["y"], d["rows"], 5, -1, 4, s) for s in range(50)]
        feature, threshold, left, right, value, roots = [], [], [], [], [], []
        off = 0
        for f, t, lft, rgt, v in trees:
            roots.append(off)
            feature.append(f)
            threshold.append(t)
            left.append(np.where(lft >= 0, lft + off, -1))
            right.append(np.where(rgt >= 0, rgt + off, -1))
            value.append(v)
            off += len(f)
        packed = [np.concatenate(a) for a in (feature, threshold, left, right, value)]
        return packed + [np.asarray(roots, dtype=np.int64)]

    packed = forest(kernels.get_backend("python"))
    yield "predict_forest", lambda k: k.predict_forest(d["X"], *packed)
    yield "subgroup_screens(k=4, n=18)", lambda k: k.subgroup_screens(d["prices"], 4)
    G, c, _, _ = gram_system(d["X"], d["w"], d["z"])

    def lasso(k):
        beta = np.zeros(G.shape[0])
        sweeps = k.cd_lasso(G, c, beta, 0.01, 1e-14, 10_000)
        return beta, sweeps

    yield "cd_lasso", lasso

    def newton(k):
        beta = np.zeros(d["X"].shape[1])
        b0, ok, it = k.lasso_newton(d["X"], d["y"], 0.01, beta, 0.0, 1e-10, 1e-8, 200, 10_000)
        return np.round(beta, 6), round(b0, 6), ok, it

    yield "lasso_newton (rounded 1e-6)", newton


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled kernels not built; run `python setup.py build_ext --inplace`")
    d = _inputs()
    print(f"{'kernel':<30}{'python s':>12}{'cython s':>12}{'speed-up':>10}  same")
    for name, fn in _cases(d):
        tp, op = _best(lambda: fn(backends["python"]), args.repeat)
        if "cython" in backends:
            tc, oc = _best(lambda: fn(backends["cython"]), args.repeat)
            print(f"{name:<30}{tp:12.5f}{tc:12.5f}{tp / tc:10.1f}  {_same(op, oc)}")
        else:
            print(f"{name:<30}{tp:12.5f}{'-':>12}{'-':>10}  -")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
