"""Synthetic coupled MSD/MGP tenders with competitive, bid-rotation and
capacity-withholding regimes.

Units have fixed characteristics (capacity, cost level) drawn once from the
seed; every hour then draws from its own generator seeded by
``(seed, day, hour)``, so hours are independent of generation order.

MGP acceptance is merit order: offers are taken cheapest first while their
price is within the hour's price cap and the accepted quantity is below the
hour's demand.  Prices are kept to cents and quantities to kWh so that the
CSV files reproduce the in-memory tenders exactly.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .data import Label, Market, Offer, Tender, write_tenders
from .seeding import rng_for

STRATEGIES = ("withholding", "rotation", "none")
WITHHOLDING_MODES = ("physical", "economic")


@dataclass(frozen=True)
class MarketConfig:
    zone: str = "SIMZ"
    start: dt.date = dt.date(2021, 3, 1)
    days: int = 30
    hours: int = 24
    # 1-based inclusive day ranges; days before the first window are pre-cartel
    collusive_windows: tuple[tuple[int, int], ...] = ((4, 10),)
    strategy: str = "withholding"
    withholding_mode: str = "physical"
    n_units_mgp: int = 130
    n_units_msd: int = 8
    cartel_size: int = 4
    # MGP: lognormal prices around a unit cost level, capacities, participation
    mgp_mu: float = math.log(60.0)
    mgp_sigma: float = 0.25
    mgp_cost_sd: float = 0.3
    cartel_cost_shift: float = -0.4
    capacity_mu: float = math.log(80.0)
    capacity_sigma: float = 0.5
    cartel_capacity_factor: float = 1.2
    availability_low: float = 0.6
    participation: float = 0.955
    demand_share: float = 0.9
    demand_sigma: float = 0.08
    price_cap: float = 75.0
    price_cap_sigma: float = 0.03
    # MSD startup prices
    msd_mu: float = math.log(120.0)
    msd_sigma: float = 0.35
    msd_unit_sd: float = 0.2
    # withholding: cartel MSD prices inflated, less dispersed
    inflation: float = 1.5
    cartel_sigma_ratio: float = 0.5
    # economic withholding / rotation: MGP markup above the price cap
    reject_markup_low: float = 0.05
    reject_markup_high: float = 0.6
    # rotation: winner's markup and cover-bid markup over the winner
    rotation_markup: float = 1.2
    cover_low: float = 0.4
    cover_high: float = 0.9
    seed: int = 42

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.withholding_mode not in WITHHOLDING_MODES:
            raise ValueError(f"withholding_mode must be one of {WITHHOLDING_MODES}")
        if not 0 <= self.cartel_size <= min(self.n_units_msd, self.n_units_mgp):
            raise ValueError("cartel must be a subset of both markets' units")
        if self.strategy == "rotation" and self.cartel_size < 2:
            raise ValueError("bid rotation needs at least two cartel units")
        if not 0 < self.participation <= 1:
            raise ValueError("participation must be in (0, 1]")
        positive = ("mgp_sigma", "capacity_sigma", "msd_sigma", "inflation", "cartel_sigma_ratio",
                    "demand_share", "price_cap", "rotation_markup")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.days < 1 or not 1 <= self.hours <= 24:
            raise ValueError("need at least one day and 1..24 hours per day")
        for a, b in self.collusive_windows:
            if not 1 <= a <= b <= self.days:
                raise ValueError(f"window {a}..{b} outside days 1..{self.days}")

    @property
    def cartel_units(self) -> tuple[str, ...]:
        return tuple(f"G{i + 1:03d}" for i in range(self.cartel_size))

    def date_of(self, day: int) -> dt.date:
        return self.start + dt.timedelta(days=day - 1)

    def window_dates(self) -> tuple[tuple[dt.date, dt.date], ...]:
        return tuple((self.date_of(a), self.date_of(b)) for a, b in self.collusive_windows)

    def is_collusive_day(self, day: int) -> bool:
        return any(a <= day <= b for a, b in self.collusive_windows)

    def label_for_day(self, day: int) -> Label:
        if self.is_collusive_day(day):
            return Label.COLLUSIVE
        if self.collusive_windows and day > max(b for _, b in self.collusive_windows):
            return Label.COMPETITIVE
        return Label.UNLABELED


@dataclass(frozen=True)
class UnitTable:
    mgp_ids: tuple[str, ...]
    mgp_cost: np.ndarray = field(repr=False)
    mgp_capacity: np.ndarray = field(repr=False)
    mgp_cartel: np.ndarray = field(repr=False)
    msd_ids: tuple[str, ...] = ()
    msd_effect: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    msd_cartel: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, bool))


@lru_cache(maxsize=32)
def unit_table(config: MarketConfig) -> UnitTable:
    """Fixed unit characteristics; cartel units come first in both markets."""
    rng = rng_for(config.seed, 0)
    k = config.cartel_size
    mgp_ids = config.cartel_units + tuple(f"U{i:03d}" for i in range(k + 1, config.n_units_mgp + 1))
    cost = rng.normal(0.0, config.mgp_cost_sd, config.n_units_mgp)
    cost[:k] = config.cartel_cost_shift
    cap = np.exp(rng.normal(config.capacity_mu, config.capacity_sigma, config.n_units_mgp))
    cap[:k] = math.exp(config.capacity_mu) * config.cartel_capacity_factor
    mgp_cartel = np.arange(config.n_units_mgp) < k
    msd_ids = config.cartel_units + tuple(f"M{i:03d}" for i in range(k + 1, config.n_units_msd + 1))
    effect = rng.normal(0.0, config.msd_unit_sd, config.n_units_msd)
    return UnitTable(mgp_ids, cost, cap, mgp_cartel, msd_ids, effect,
                     np.arange(config.n_units_msd) < k)


def _cents(x: float) -> tuple[float, str]:
    text = f"{max(x, 0.01):.2f}"
    return float(text), text


def _kwh(x: float) -> tuple[float, str]:
    text = f"{max(x, 0.0):.3f}"
    return float(text), text


def _hour_profile(hour: int) -> float:
    return 1.0 + 0.15 * math.sin(2 * math.pi * (hour - 9) / 24)


class _Hour:
    """Random draws shared by every regime for one hour."""

    def __init__(self, config: MarketConfig, rng: np.random.Generator, hour: int):
        units = unit_table(config)
        n = config.n_units_mgp
        self.present = rng.random(n) < config.participation
        self.mgp_price = np.exp(config.mgp_mu + units.mgp_cost + config.mgp_sigma * rng.standard_normal(n))
        avail = rng.uniform(config.availability_low, 1.0, n)
        self.qty = units.mgp_capacity * avail
        expected_supply = float(units.mgp_capacity.sum()) * (1 + config.availability_low) / 2
        self.demand = (config.demand_share * expected_supply * _hour_profile(hour)
                       * math.exp(config.demand_sigma * rng.standard_normal()))
        self.cap = config.price_cap * math.exp(config.price_cap_sigma * rng.standard_normal())
        self.reject_markup = rng.uniform(config.reject_markup_low, config.reject_markup_high, n)
        m = config.n_units_msd
        self.msd_z = rng.standard_normal(m)
        self.cover = rng.uniform(config.cover_low, config.cover_high, m)


def _mgp_tender(config: MarketConfig, date, hour, h: _Hour, present, price, quota=None) -> Tender:
    units = unit_table(config)
    offers = []
    for i in np.flatnonzero(present):
        p, pt = _cents(price[i])
        q, qt = _kwh(h.qty[i])
        offers.append((p, units.mgp_ids[i], q, pt, qt))
    offers.sort(key=lambda o: (o[0], o[1]))
    demand = h.demand if quota is None else quota
    cum = 0.0
    out = []
    for p, uid, q, pt, qt in offers:
        acc = p <= h.cap and cum < demand
        if acc:
            cum += q
        out.append(Offer(uid, p, q, acc, pt, qt))
    out.sort(key=lambda o: o.unit_id)
    return Tender(Market.MGP, config.zone, date, hour, tuple(out))


def _msd_tender(config: MarketConfig, date, hour, prices) -> Tender:
    units = unit_table(config)
    offers = []
    for uid, x in zip(units.msd_ids, prices):
        p, pt = _cents(x)
        offers.append(Offer(uid, p, price_text=pt))
    return Tender(Market.MSD, config.zone, date, hour, tuple(offers))


def _competitive_msd(config: MarketConfig, h: _Hour) -> np.ndarray:
    units = unit_table(config)
    return np.exp(config.msd_mu + units.msd_effect + config.msd_sigma * h.msd_z)


def gen_competitive_hour(config: MarketConfig, rng: np.random.Generator, date: dt.date | None = None,
                         hour: int = 1, quota: float | None = None) -> tuple[Tender, Tender]:
    """Every unit offers independently; ``quota`` overrides the hour's demand."""
    date = date or config.start
    h = _Hour(config, rng, hour)
    msd = _msd_tender(config, date, hour, _competitive_msd(config, h))
    mgp = _mgp_tender(config, date, hour, h, h.present, h.mgp_price, quota)
    return msd, mgp


def _priced_out(h: _Hour, units: UnitTable) -> np.ndarray:
    """MGP prices with cartel offers moved above the hour's price cap."""
    price = h.mgp_price.copy()
    c = units.mgp_cartel
    price[c] = np.maximum(price[c], h.cap) * (1 + h.reject_markup[c])
    return price


def gen_withholding_hour(config: MarketConfig, rng: np.random.Generator, date: dt.date | None = None,
                         hour: int = 1, mode: str | None = None) -> tuple[Tender, Tender]:
    """Cartel withholds MGP capacity and inflates its MSD startup prices.

    Physical mode drops cartel offers from the MGP; economic mode keeps them
    at prices above the cap so that they are never accepted.
    """
    date = date or config.start
    mode = mode or config.withholding_mode
    if mode not in WITHHOLDING_MODES:
        raise ValueError(f"unknown withholding mode {mode!r}")
    units = unit_table(config)
    h = _Hour(config, rng, hour)
    prices = _competitive_msd(config, h)
    c = units.msd_cartel
    prices[c] = np.exp(config.msd_mu + math.log(config.inflation) + units.msd_effect[c]
                       + config.msd_sigma * config.cartel_sigma_ratio * h.msd_z[c])
    msd = _msd_tender(config, date, hour, prices)
    if mode == "physical":
        mgp = _mgp_tender(config, date, hour, h, h.present & ~units.mgp_cartel, h.mgp_price)
    else:
        mgp = _mgp_tender(config, date, hour, h, h.present, _priced_out(h, units))
    return msd, mgp


def rotation_winner(config: MarketConfig, rotation_index: int) -> str:
    return config.cartel_units[rotation_index % config.cartel_size]


def gen_rotation_hour(config: MarketConfig, rotation_index: int, rng: np.random.Generator,
                      date: dt.date | None = None, hour: int = 1) -> tuple[Tender, Tender]:
    """Designated winner posts the lowest cartel MSD price, the rest cover above it;
    all cartel MGP offers are priced out."""
    date = date or config.start
    units = unit_table(config)
    h = _Hour(config, rng, hour)
    prices = _competitive_msd(config, h)
    k = config.cartel_size
    w = rotation_index % k
    win = math.exp(config.msd_mu + math.log(config.rotation_markup) + units.msd_effect[w]
                   + config.msd_sigma * h.msd_z[w])
    win = float(_cents(win)[0])
    prices[w] = win
    for j in range(k):
        if j != w:
            # at least one cent above the winner after rounding
            prices[j] = max(win * (1 + h.cover[j]), win + 0.01)
    msd = _msd_tender(config, date, hour, prices)
    mgp = _mgp_tender(config, date, hour, h, h.present, _priced_out(h, units))
    return msd, mgp


@dataclass(frozen=True)
class SimulatedData:
    config: MarketConfig
    msd: tuple[Tender, ...]
    mgp: tuple[Tender, ...]
    labels: tuple[tuple[str, dt.date, int, Label], ...]


def simulate(config: MarketConfig) -> SimulatedData:
    """All hours of the configured horizon, tenders left unlabeled."""
    msd, mgp, labels = [], [], []
    rotation = 0
    for day in range(1, config.days + 1):
        date = config.date_of(day)
        collusive = config.is_collusive_day(day)
        for hour in range(1, config.hours + 1):
            rng = rng_for(config.seed, day, hour)
            if collusive and config.strategy == "withholding":
                s, g = gen_withholding_hour(config, rng, date, hour)
            elif collusive and config.strategy == "rotation":
                s, g = gen_rotation_hour(config, rotation, rng, date, hour)
                rotation += 1
            else:
                s, g = gen_competitive_hour(config, rng, date, hour)
            msd.append(s)
            mgp.append(g)
            labels.append((config.zone, date, hour, config.label_for_day(day)))
    return SimulatedData(config, tuple(msd), tuple(mgp), tuple(labels))


def dataset_spec_text(config: MarketConfig) -> str:
    """Dataset configuration matching the simulated horizon (complete cartel)."""
    windows = ", ".join(f"{a.isoformat()}..{b.isoformat()}" for a, b in config.window_dates())
    return "\n".join([
        "case = Custom",
        "cartel_type = Complete",
        f"windows = {windows}",
        f"cartel_units = {', '.join(config.cartel_units)}",
        f"zones = {config.zone}",
        f"seed = {config.seed}",
        "",
    ])


def gen_dataset(config: MarketConfig, out_dir) -> SimulatedData:
    """Write ``msd.csv``, ``mgp.csv``, ``labels.csv`` and ``dataset.cfg`` into ``out_dir``."""
    data = simulate(config)
    os.makedirs(out_dir, exist_ok=True)
    write_tenders(data.msd, os.path.join(out_dir, "msd.csv"), Market.MSD)
    write_tenders(data.mgp, os.path.join(out_dir, "mgp.csv"), Market.MGP)
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", "date", "hour", "label"])
        for zone, date, hour, label in data.labels:
            w.writerow([zone, date.isoformat(), hour, label.value])
    with open(os.path.join(out_dir, "dataset.cfg"), "w", encoding="utf-8") as fh:
        fh.write(dataset_spec_text(config))
    return data


def with_overrides(config: MarketConfig, **kw) -> MarketConfig:
    return replace(config, **kw)
