"""Behavioral screens on a tender's offer distribution.

Classical screens are computed from MSD startup prices; withholding screens
from the whole-zone MGP tender.  A screen that is undefined for the given
offers (too few offers, zero denominator) is ``None``, never NaN.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields
from decimal import Decimal
from typing import Sequence

from .data import Market, Tender

SCREEN_NAMES = (
    "var", "cv", "spread", "kurt", "diff", "diffp",
    "rd", "rdnor", "rdalt", "skew", "ks", "n_bids",
)
MGP_SCREEN_NAMES = (
    "mgp_offers", "mgp_quantity", "mgp_accepted_offers", "mgp_accepted_quantity",
)


def _check(prices: Sequence[float]) -> list[float]:
    prices = [float(p) for p in prices]
    for p in prices:
        if not math.isfinite(p) or p < 0:
            raise ValueError(f"prices must be finite and non-negative, got {p!r}")
    return prices


def _ratio(num: float, den: float) -> float | None:
    return num / den if den != 0 else None


def _finite(out: dict[str, float | None]) -> dict[str, float | None]:
    # overflow (e.g. a ratio over a subnormal lowest price) counts as undefined
    return {k: v if v is None or math.isfinite(v) else None for k, v in out.items()}


def _overflow_safe(f) -> float | None:
    try:
        return f()
    except (OverflowError, ValueError):  # ValueError: fsum met +inf and -inf
        return None


def moment_screens(prices: Sequence[float]) -> dict[str, float | None]:
    """Variance, coefficient of variation, spread, kurtosis and skewness.

    Variance uses the n-1 denominator; kurtosis (m4/m2**2, not excess) and
    skewness (m3/m2**1.5) use central moments with the n denominator.
    """
    b = _check(prices)
    n = len(b)
    if n == 0:
        raise ValueError("empty price list")
    out: dict[str, float | None] = dict.fromkeys(("var", "cv", "spread", "kurt", "skew"))
    if n >= 2:
        out["spread"] = _ratio(max(b) - min(b), min(b))
    try:
        # fsum / n need not reproduce a repeated value exactly
        mean = b[0] if max(b) == min(b) else math.fsum(b) / n
        d = [x - mean for x in b]
        ss = math.fsum(x * x for x in d)
    except OverflowError:
        return _finite(out)  # the moments themselves overflow
    m2 = ss / n
    if n >= 2:
        var = ss / (n - 1)
        out["var"] = var
        out["cv"] = _ratio(math.sqrt(var), mean)
    # guard the denominators themselves: a tiny m2 can underflow once raised
    skew_den = m2 * math.sqrt(m2)
    kurt_den = m2 * m2
    if n >= 3 and skew_den > 0:
        out["skew"] = _overflow_safe(lambda: math.fsum(x * x * x for x in d) / n / skew_den)
    if n >= 4 and kurt_den > 0:
        out["kurt"] = _overflow_safe(lambda: math.fsum(x * x * x * x for x in d) / n / kurt_den)
    return _finite(out)


def low_bid_screens(prices: Sequence[float]) -> dict[str, float | None]:
    """Screens built on the gap between the two lowest offers."""
    b = sorted(_check(prices))
    n = len(b)
    out: dict[str, float | None] = dict.fromkeys(("diff", "diffp", "rd", "rdnor", "rdalt"))
    if n < 2:
        return out
    diff = b[1] - b[0]
    out["diff"] = diff
    out["diffp"] = _ratio(diff, b[0])
    if n >= 4:
        losing = b[1:]

        def rd() -> float | None:
            lmean = losing[0] if losing[-1] == losing[0] else math.fsum(losing) / len(losing)
            lsd = math.sqrt(math.fsum((x - lmean) * (x - lmean) for x in losing) / (len(losing) - 1))
            return _ratio(diff, lsd)

        out["rd"] = _overflow_safe(rd)
    if n >= 3:
        gaps = [b[i + 1] - b[i] for i in range(1, n - 1)]
        out["rdnor"] = _ratio(diff, math.fsum(gaps) / len(gaps))
    gaps = [b[i + 1] - b[i] for i in range(n - 1)]
    out["rdalt"] = _ratio(diff, math.fsum(gaps) / len(gaps))
    return _finite(out)


def ks_screen(prices: Sequence[float]) -> float | None:
    """Kolmogorov-Smirnov distance of min-max normalised prices to U(0, 1)."""
    b = sorted(_check(prices))
    n = len(b)
    if n < 2 or b[-1] == b[0]:
        return None
    lo, rng = b[0], b[-1] - b[0]
    d = 0.0
    for i, x in enumerate(b):
        u = (x - lo) / rng
        d = max(d, (i + 1) / n - u, u - i / n)
    return d


def bid_count(tender: Tender | Sequence[float]) -> int:
    if isinstance(tender, Tender):
        return len(tender.offers)
    return len(tender)


@dataclass(frozen=True)
class ClassicalScreens:
    var: float | None
    cv: float | None
    spread: float | None
    kurt: float | None
    diff: float | None
    diffp: float | None
    rd: float | None
    rdnor: float | None
    rdalt: float | None
    skew: float | None
    ks: float | None
    n_bids: int

    def as_dict(self) -> dict[str, float | None]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def as_tuple(self) -> tuple:
        return astuple(self)


def classical_screens(prices: Sequence[float]) -> ClassicalScreens:
    """All twelve classical screens; an empty tender yields only ``n_bids = 0``."""
    prices = list(prices)
    if not prices:
        return ClassicalScreens(*([None] * 11), n_bids=0)
    vals = {**moment_screens(prices), **low_bid_screens(prices)}
    vals["ks"] = ks_screen(prices)
    vals["n_bids"] = len(prices)
    return ClassicalScreens(**vals)


@dataclass(frozen=True)
class WithholdingScreens:
    n_offers: int
    total_qty: float
    n_accepted: int
    accepted_qty: float

    def as_dict(self) -> dict[str, float]:
        return dict(zip(MGP_SCREEN_NAMES, astuple(self)))


def _qty(offer) -> Decimal:
    return Decimal(offer.quantity_text) if offer.quantity_text else Decimal(repr(offer.quantity))


def mgp_screens(tender: Tender) -> WithholdingScreens:
    """Offer count, offered quantity and their accepted counterparts for one MGP hour."""
    if tender.market is not Market.MGP:
        raise ValueError(f"{tender.tender_id} is not an MGP tender")
    for o in tender.offers:
        if o.quantity is None or o.accepted is None:
            raise ValueError(f"{tender.tender_id}: offer of {o.unit_id} lacks quantity or acceptance")
    accepted = [o for o in tender.offers if o.accepted]
    return WithholdingScreens(
        n_offers=len(tender.offers),
        total_qty=float(sum((_qty(o) for o in tender.offers), Decimal(0))),
        n_accepted=len(accepted),
        accepted_qty=float(sum((_qty(o) for o in accepted), Decimal(0))),
    )
