"""Tender data model, CSV ingestion and dataset assembly.

A *tender* is one hourly bidding session of one market (MSD or MGP) in one
zone.  The assembly pipeline is::

    label -> (complete cartels) keep cartel units' MSD offers
          -> drop duplicate MSD offer distributions per label class
          -> undersample the majority class
          -> pair every MSD tender with the MGP tender of the same hour
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Base class for input problems (exit code 1 on the command line)."""


class SchemaError(DataError):
    pass


class SpecError(DataError):
    pass


class DatasetError(DataError):
    pass


class JoinError(DataError):
    pass


@dataclass(frozen=True)
class RowError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class Market(str, Enum):
    MSD = "MSD"
    MGP = "MGP"


class Label(str, Enum):
    COLLUSIVE = "Collusive"
    COMPETITIVE = "Competitive"
    UNLABELED = "Unlabeled"


@dataclass(frozen=True)
class Offer:
    unit_id: str
    price: float
    quantity: float | None = None
    accepted: bool | None = None
    # original decimal text, kept for exact comparisons and sums
    price_text: str | None = None
    quantity_text: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.price) or self.price < 0:
            raise ValueError(f"offer price must be finite and >= 0, got {self.price!r}")
        if self.quantity is not None and (not math.isfinite(self.quantity) or self.quantity < 0):
            raise ValueError(f"offer quantity must be finite and >= 0, got {self.quantity!r}")


@dataclass(frozen=True)
class Tender:
    market: Market
    zone: str
    date: dt.date
    hour: int
    offers: tuple[Offer, ...] = ()
    label: Label = Label.UNLABELED

    def __post_init__(self):
        if not 1 <= self.hour <= 24:
            raise ValueError(f"hour must be in 1..24, got {self.hour}")

    @property
    def tender_id(self) -> str:
        return f"{self.market.value}:{self.zone}:{self.date.isoformat()}:{self.hour:02d}"

    @property
    def key(self) -> tuple[str, dt.date, int]:
        return (self.zone, self.date, self.hour)

    @property
    def prices(self) -> list[float]:
        return [o.price for o in self.offers]

    def with_label(self, label: Label) -> "Tender":
        return replace(self, label=label)


MSD_COLUMNS = ("zone", "date", "hour", "unit_id", "price")
MGP_COLUMNS = ("zone", "date", "hour", "unit_id", "price", "quantity", "accepted")


def _parse_decimal(text: str, what: str) -> tuple[float, str]:
    text = text.strip()
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise ValueError(f"{what} {text!r} is not a decimal number") from None
    if not d.is_finite():
        raise ValueError(f"{what} {text!r} is not finite")
    if d < 0:
        raise ValueError(f"negative {what} {text}")
    return float(d), text


def ingest(path, market: Market | str, errors: list[RowError] | None = None) -> list[Tender]:
    """Read an MSD or MGP offer file into tenders.

    Malformed rows are skipped, logged and appended to ``errors`` when a list
    is supplied; a missing required column raises :class:`SchemaError`.
    Tenders come back sorted by (zone, date, hour); offers keep file order.
    """
    market = Market(market)
    required = MSD_COLUMNS if market is Market.MSD else MGP_COLUMNS
    groups: OrderedDict[tuple, list[Offer]] = OrderedDict()
    seen_units: set[tuple] = set()
    row_errors: list[RowError] = []

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            try:
                zone = row["zone"].strip()
                date = dt.date.fromisoformat(row["date"].strip())
                hour = int(row["hour"])
                if hour == 25:
                    raise ValueError("hour 25 (daylight-saving repeat) is excluded")
                if not 1 <= hour <= 24:
                    raise ValueError(f"hour {hour} outside 1..24")
                unit = row["unit_id"].strip()
                if not unit:
                    raise ValueError("empty unit_id")
                price, ptext = _parse_decimal(row["price"], "price")
                if market is Market.MGP:
                    qty, qtext = _parse_decimal(row["quantity"], "quantity")
                    acc = row["accepted"].strip()
                    if acc not in ("0", "1"):
                        raise ValueError(f"accepted must be 0 or 1, got {acc!r}")
                    offer = Offer(unit, price, qty, acc == "1", ptext, qtext)
                else:
                    offer = Offer(unit, price, price_text=ptext)
                key = (zone, date, hour)
                if market is Market.MSD:
                    if (key, unit) in seen_units:
                        raise ValueError(f"duplicate offer for unit {unit} in tender {zone} {date} h{hour}")
                    seen_units.add((key, unit))
            except (ValueError, TypeError, AttributeError) as exc:
                err = RowError(line, str(exc))
                log.warning("%s: %s", path, err)
                row_errors.append(err)
                continue
            groups.setdefault(key, []).append(offer)

    if errors is not None:
        errors.extend(row_errors)
    return [
        Tender(market, zone, date, hour, tuple(offers))
        for (zone, date, hour), offers in sorted(groups.items(), key=lambda kv: kv[0])
    ]


def write_tenders(tenders: Iterable[Tender], path, market: Market | str) -> None:
    """Write tenders in the ingestion schema (inverse of :func:`ingest`)."""
    market = Market(market)
    cols = MSD_COLUMNS if market is Market.MSD else MGP_COLUMNS
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in tenders:
            for o in t.offers:
                row = [t.zone, t.date.isoformat(), t.hour, o.unit_id, o.price_text or repr(o.price)]
                if market is Market.MGP:
                    row += [o.quantity_text or repr(o.quantity), int(bool(o.accepted))]
                w.writerow(row)


@dataclass(frozen=True)
class DatasetSpec:
    case: str = "Custom"
    cartel_type: str = "Complete"
    collusive_windows: tuple[tuple[dt.date, dt.date], ...] = ()
    day_filter: str | None = None
    holidays: frozenset[dt.date] = frozenset()
    cartel_units: tuple[str, ...] = ()
    zones: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.case not in ("Campania2010", "Brindisi2016", "Combined", "Custom"):
            raise SpecError(f"unknown case {self.case!r}")
        if self.cartel_type not in ("Complete", "Incomplete"):
            raise SpecError(f"cartel_type must be Complete or Incomplete, got {self.cartel_type!r}")
        if self.day_filter not in (None, "sundays_holidays"):
            raise SpecError(f"unknown day_filter {self.day_filter!r}")
        windows = sorted(self.collusive_windows)
        for start, end in windows:
            if end < start:
                raise SpecError(f"window {start}..{end} ends before it starts")
        for (s1, e1), (s2, e2) in zip(windows, windows[1:]):
            if s2 <= e1:
                raise SpecError(f"overlapping windows {s1}..{e1} and {s2}..{e2}")
        if self.seed < 0:
            raise SpecError("seed must be non-negative")
        object.__setattr__(self, "collusive_windows", tuple(windows))

    def passes_day_filter(self, day: dt.date) -> bool:
        if self.day_filter == "sundays_holidays":
            return day.weekday() == 6 or day in self.holidays
        return True

    def label_for(self, day: dt.date) -> Label:
        if not self.collusive_windows:
            return Label.UNLABELED
        for start, end in self.collusive_windows:
            if start <= day <= end:
                return Label.COLLUSIVE if self.passes_day_filter(day) else Label.UNLABELED
        if day > self.collusive_windows[-1][1]:
            return Label.COMPETITIVE
        return Label.UNLABELED

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "cartel_type": self.cartel_type,
            "windows": [[s.isoformat(), e.isoformat()] for s, e in self.collusive_windows],
            "day_filter": self.day_filter,
            "holidays": sorted(d.isoformat() for d in self.holidays),
            "cartel_units": list(self.cartel_units),
            "zones": list(self.zones),
            "seed": self.seed,
        }


def campania_2010(cartel_units: Sequence[str], holidays: Iterable[dt.date] = (),
                  cartel_type: str = "Complete", seed: int = 0) -> DatasetSpec:
    """Bid rotation on Sundays and public holidays, May to October 2010, zone CSUD."""
    return DatasetSpec(
        case="Campania2010",
        cartel_type=cartel_type,
        collusive_windows=((dt.date(2010, 5, 1), dt.date(2010, 10, 31)),),
        day_filter="sundays_holidays",
        holidays=frozenset(holidays),
        cartel_units=tuple(cartel_units),
        zones=("CSUD",),
        seed=seed,
    )


def brindisi_2016(cartel_units: Sequence[str], cartel_type: str = "Complete",
                  seed: int = 0) -> DatasetSpec:
    """Systematic withholding from 21 April to 15 June 2016, zone BRNN."""
    return DatasetSpec(
        case="Brindisi2016",
        cartel_type=cartel_type,
        collusive_windows=((dt.date(2016, 4, 21), dt.date(2016, 6, 15)),),
        cartel_units=tuple(cartel_units),
        zones=("BRNN",),
        seed=seed,
    )


def apply_labels(tenders: Iterable[Tender], spec: DatasetSpec) -> list[Tender]:
    """Label tenders by date; tenders outside ``spec.zones`` (when set) are dropped."""
    out = []
    for t in tenders:
        if spec.zones and t.zone not in spec.zones:
            continue
        out.append(t.with_label(spec.label_for(t.date)))
    return out


def _chrono(t: Tender):
    return (t.date, t.hour, t.zone)


def dedup_msd(tenders: Iterable[Tender]) -> list[Tender]:
    """Keep one tender per (label, multiset of offer prices).

    The representative is the chronologically first tender; result is in
    chronological order.
    """
    seen = set()
    out = []
    for t in sorted(tenders, key=_chrono):
        key = (t.label, tuple(sorted(t.prices)))
        if key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out


def undersample(tenders: Sequence[Tender], seed: int) -> list[Tender]:
    """Balance collusive and competitive tenders by subsampling the larger class.

    Input order is preserved.  Unlabeled tenders are ignored.
    """
    col = [i for i, t in enumerate(tenders) if t.label is Label.COLLUSIVE]
    comp = [i for i, t in enumerate(tenders) if t.label is Label.COMPETITIVE]
    if not col or not comp:
        raise DatasetError(
            f"cannot undersample: {len(col)} collusive and {len(comp)} competitive tenders"
        )
    minority, majority = (col, comp) if len(col) <= len(comp) else (comp, col)
    rng = np.random.default_rng(seed)
    if len(majority) > len(minority):
        picked = rng.choice(len(majority), size=len(minority), replace=False)
        majority = [majority[i] for i in sorted(picked)]
    keep = sorted(minority + majority)
    return [tenders[i] for i in keep]


@dataclass(frozen=True)
class Record:
    msd: Tender
    mgp: Tender
    label: Label


@dataclass(frozen=True)
class LabeledDataset:
    records: tuple[Record, ...]
    spec: DatasetSpec
    provenance: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.label is Label.COLLUSIVE for r in self.records], dtype=np.int64)

    def provenance_json(self) -> str:
        return json.dumps({"spec": self.spec.to_dict(), "counts": self.provenance},
                          sort_keys=True, indent=2)


def _share(tenders: Sequence[Tender]) -> float | None:
    if not tenders:
        return None
    return sum(t.label is Label.COLLUSIVE for t in tenders) / len(tenders)


def restrict_to_units(tenders: Iterable[Tender], units: Iterable[str]) -> list[Tender]:
    """Keep only the given units' offers; tenders left empty are dropped."""
    units = set(units)
    out = []
    for t in tenders:
        offers = tuple(o for o in t.offers if o.unit_id in units)
        if offers:
            out.append(replace(t, offers=offers))
    return out


def build_dataset(msd: Iterable[Tender], mgp: Iterable[Tender], spec: DatasetSpec) -> LabeledDataset:
    """Assemble balanced (MSD, MGP) tender pairs for one case."""
    labeled = [t for t in apply_labels(msd, spec) if t.label is not Label.UNLABELED]
    counts = {
        "preprocessed": len(labeled),
        "preprocessed_collusive_share": _share(labeled),
    }
    if spec.cartel_type == "Complete":
        if not spec.cartel_units:
            raise SpecError("complete-cartel datasets need cartel_units")
        labeled = restrict_to_units(labeled, spec.cartel_units)
        counts["restricted"] = len(labeled)
    deduped = dedup_msd(labeled)
    counts["deduplicated"] = len(deduped)
    sampled = undersample(deduped, spec.seed)
    counts["processed"] = len(sampled)
    counts["processed_collusive_share"] = _share(sampled)

    mgp_index = {t.key: t for t in mgp if not spec.zones or t.zone in spec.zones}
    missing = [t for t in sampled if t.key not in mgp_index]
    if missing:
        stamps = ", ".join(f"{t.zone} {t.date} h{t.hour}" for t in missing[:20])
        more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
        raise JoinError(f"{len(missing)} MSD tender(s) without an MGP tender: {stamps}{more}")
    records = tuple(
        Record(t, mgp_index[t.key].with_label(t.label), t.label) for t in sampled
    )
    log.info("built %s/%s dataset: %s", spec.case, spec.cartel_type, counts)
    return LabeledDataset(records, spec, counts)


def combine_datasets(*datasets: LabeledDataset) -> LabeledDataset:
    """Pool processed datasets (e.g. both cases) into one."""
    if not datasets:
        raise DatasetError("nothing to combine")
    types = {d.spec.cartel_type for d in datasets}
    if len(types) != 1:
        raise SpecError(f"cannot combine cartel types {sorted(types)}")
    records = tuple(r for d in datasets for r in d.records)
    spec = DatasetSpec(
        case="Combined",
        cartel_type=types.pop(),
        zones=tuple(z for d in datasets for z in d.spec.zones),
        seed=datasets[0].spec.seed,
    )
    counts: dict = {}
    for key in ("preprocessed", "deduplicated", "processed"):
        counts[key] = sum(d.provenance.get(key, 0) for d in datasets)
    counts["parts"] = [d.spec.case for d in datasets]
    return LabeledDataset(records, spec, counts)

