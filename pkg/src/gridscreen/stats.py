"""Two-sample Mann-Whitney and Kolmogorov-Smirnov tests and the per-screen
significance battery comparing collusive with competitive tenders."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

EXACT_MW_MAX_N = 12
KS_SERIES_TOL = 1e-10


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float | None  # None when the test is undefined (zero variance)
    method: str  # "MW_exact", "MW_normal" or "KS_asymptotic"
    n1: int
    n2: int

    __test__ = False  # not a pytest class


def _sample(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError(f"sample {name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"sample {name} contains non-finite values")
    return a


def midranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1 with ties given the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def _u_counts(n1: int, n2: int) -> tuple[int, ...]:
    """Number of arrangements giving each U = 0..n1*n2 (no ties)."""
    if n1 == 0 or n2 == 0:
        return (1,)
    # U counts pairs (x_i, y_j) with x_i > y_j; condition on the largest value
    a = _u_counts(n1 - 1, n2)  # largest is an x: beats all n2 ys
    b = _u_counts(n1, n2 - 1)  # largest is a y
    out = [0] * (n1 * n2 + 1)
    for u, c in enumerate(a):
        out[u + n2] += c
    for u, c in enumerate(b):
        out[u] += c
    return tuple(out)


def mann_whitney(x, y, continuity: bool = True, method: str = "auto") -> TestResult:
    """Two-sided Mann-Whitney U test; the statistic is U of the first sample.

    With ``method="auto"`` the exact null distribution is used when
    ``n1 + n2 <= 12`` and there are no ties, otherwise the normal
    approximation with tie-corrected variance.  ``"normal"`` forces the
    approximation; ``"exact"`` requires a small tie-free sample.
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    x = _sample(x, "x")
    y = _sample(y, "y")
    n1, n2 = len(x), len(y)
    pooled = np.concatenate([x, y])
    ranks = midranks(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    n = n1 + n2
    _, tie_sizes = np.unique(pooled, return_counts=True)
    has_ties = bool((tie_sizes > 1).any())

    exact_ok = n <= EXACT_MW_MAX_N and not has_ties
    if method == "exact" and not exact_ok:
        raise ValueError(f"exact test needs n1 + n2 <= {EXACT_MW_MAX_N} and no ties")
    if exact_ok and method != "normal":
        counts = _u_counts(n1, n2)
        total = math.comb(n, n1)
        k = int(round(u))
        lower = sum(counts[: k + 1]) / total
        upper = sum(counts[k:]) / total
        return TestResult(u, min(1.0, 2 * min(lower, upper)), "MW_exact", n1, n2)

    mu = n1 * n2 / 2
    tie_term = float((tie_sizes ** 3 - tie_sizes).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12 * ((n + 1) - tie_term)
    if var <= 0:
        return TestResult(u, None, "MW_normal", n1, n2)
    dev = abs(u - mu) - (0.5 if continuity else 0.0)
    z = max(dev, 0.0) / math.sqrt(var)
    return TestResult(u, min(1.0, math.erfc(z / math.sqrt(2))), "MW_normal", n1, n2)


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, P(K > lam)."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # Jacobi-theta form converges fast for small arguments
        s = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8 * lam * lam))
            s += term
            if term < KS_SERIES_TOL:
                break
            k += 1
        p = 1.0 - math.sqrt(2 * math.pi) / lam * s
    else:
        s = 0.0
        k = 1
        while True:
            term = math.exp(-2 * k * k * lam * lam)
            s += term if k % 2 else -term
            if term < KS_SERIES_TOL:
                break
            k += 1
        p = 2 * s
    return min(1.0, max(0.0, p))


def ks_two_sample(x, y) -> TestResult:
    """Two-sample KS test with the asymptotic p-value at effective size n1*n2/(n1+n2)."""
    x = np.sort(_sample(x, "x"))
    y = np.sort(_sample(y, "y"))
    n1, n2 = len(x), len(y)
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / n1
    fy = np.searchsorted(y, pooled, side="right") / n2
    d = float(np.max(np.abs(fx - fy)))
    if d == 0:
        return TestResult(0.0, 1.0, "KS_asymptotic", n1, n2)
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return TestResult(d, kolmogorov_sf(en * d), "KS_asymptotic", n1, n2)


@dataclass(frozen=True)
class SignificanceRow:
    screen: str
    dataset: str
    stat_mw: float | None
    p_mw: float | None
    stat_ks: float | None
    p_ks: float | None


def screen_significance_report(features: Mapping[str, Sequence[float | None]], labels,
                               dataset: str = "dataset") -> list[SignificanceRow]:
    """MW and KS tests of collusive against competitive values for every column.

    ``labels`` holds 1 for collusive and 0 for competitive; missing feature
    values are dropped.  Columns left without values in a class get NA
    everywhere.
    """
    y = np.asarray(labels).astype(bool)
    rows = []
    for name, col in features.items():
        vals = np.array([np.nan if v is None else float(v) for v in col])
        ok = ~np.isnan(vals)
        col_x, col_y = vals[ok & y], vals[ok & ~y]
        if col_x.size == 0 or col_y.size == 0:
            rows.append(SignificanceRow(name, dataset, None, None, None, None))
            continue
        mw = mann_whitney(col_x, col_y)
        ks = ks_two_sample(col_x, col_y)
        rows.append(SignificanceRow(name, dataset, mw.statistic, mw.p_value, ks.statistic, ks.p_value))
    return rows


def _fmt(v: float | None) -> str:
    return "NA" if v is None else repr(float(v))


def write_significance_csv(rows: Sequence[SignificanceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["screen", "dataset", "stat_MW", "p_MW", "stat_KS", "p_KS"])
        for r in rows:
            w.writerow([r.screen, r.dataset, _fmt(r.stat_mw), _fmt(r.p_mw), _fmt(r.stat_ks), _fmt(r.p_ks)])
