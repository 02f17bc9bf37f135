"""Classical screens over every 3- and 4-offer subgroup of a tender.

Aimed at incomplete cartels, where only some bidders collude: per screen and
subgroup size the tender is summarised by min, max, mean and median over all
subgroups, giving 12 x 2 x 4 = 96 columns named ``sub{k}_{screen}_{stat}``.
"""
from __future__ import annotations

from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np

from . import kernels
from .data import Tender
from .screens import SCREEN_NAMES

SUBGROUP_SIZES = (3, 4)
SUMMARY_STATS = ("min", "max", "mean", "median")
DEFAULT_MAX_SUBGROUPS = 2_000_000


class SubgroupLimitError(RuntimeError):
    """Raised when a tender has too many offers to enumerate its subgroups."""


def enumerate_subgroups(prices: Sequence[float], k: int) -> list[tuple[float, ...]]:
    if k not in SUBGROUP_SIZES:
        raise ValueError(f"subgroup size must be one of {SUBGROUP_SIZES}, got {k}")
    return list(combinations(list(prices), k))


def subgroup_columns() -> list[str]:
    return [
        f"sub{k}_{s}_{stat}"
        for k in SUBGROUP_SIZES
        for s in SCREEN_NAMES
        for stat in SUMMARY_STATS
    ]


def subgroup_matrix(prices: Sequence[float], k: int) -> np.ndarray:
    """Screens for every size-``k`` subgroup (rows) with NaN for undefined values."""
    return kernels.subgroup_screens(np.sort(np.asarray(prices, dtype=np.float64)), k)


def _summarise(col: np.ndarray) -> list[float | None]:
    vals = col[~np.isnan(col)]
    if vals.size == 0:
        return [None] * len(SUMMARY_STATS)
    # scale before summing so that the mean of finite values stays finite
    mean = float((vals / vals.size).sum())
    srt = np.sort(vals)
    mid = srt.size // 2
    median = srt[mid] if srt.size % 2 else srt[mid - 1] / 2 + srt[mid] / 2
    return [float(srt[0]), float(srt[-1]), mean, float(median)]


def subgroup_summary(tender: Tender | Sequence[float],
                     max_subgroups: int = DEFAULT_MAX_SUBGROUPS) -> dict[str, float | None]:
    prices = tender.prices if isinstance(tender, Tender) else list(tender)
    n = len(prices)
    worst = max(comb(n, k) for k in SUBGROUP_SIZES)
    if worst > max_subgroups:
        raise SubgroupLimitError(
            f"tender with {n} offers has {worst} subgroups, above the cap of {max_subgroups}"
        )
    out: dict[str, float | None] = {}
    for k in SUBGROUP_SIZES:
        m = subgroup_matrix(prices, k)
        for j, screen in enumerate(SCREEN_NAMES):
            summary = _summarise(m[:, j]) if len(m) else [None] * len(SUMMARY_STATS)
            for stat, v in zip(SUMMARY_STATS, summary):
                out[f"sub{k}_{screen}_{stat}"] = v
    return out
