"""Shared fixtures and the acceptance-criteria summary printed after the run."""
from __future__ import annotations

import datetime as dt
import os

import pytest
from hypothesis import settings

from gridscreen.data import Label, Market, Offer, Tender

# reproducible runs by default; HYPOTHESIS_PROFILE=explore draws fresh examples
settings.register_profile("ci", derandomize=True, deadline=None, print_blob=True)
settings.register_profile("explore", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# criterion name -> PASS / FAIL / SKIP, filled by the report hook below
ACCEPTANCE_RESULTS: dict[str, str] = {}


def msd(prices, date=dt.date(2016, 5, 1), hour=1, zone="BRNN", units=None, label=Label.UNLABELED):
    units = units or [f"U{i:02d}" for i in range(len(prices))]
    offers = tuple(Offer(u, float(p), price_text=str(p)) for u, p in zip(units, prices))
    return Tender(Market.MSD, zone, date, hour, offers, label)


def mgp(rows, date=dt.date(2016, 5, 1), hour=1, zone="BRNN", label=Label.UNLABELED):
    """``rows`` holds (quantity, accepted) or (unit, price, quantity, accepted)."""
    offers = []
    for i, r in enumerate(rows):
        if len(r) == 2:
            r = (f"U{i:03d}", 50.0, *r)
        unit, price, qty, acc = r
        offers.append(Offer(unit, float(price), float(qty), bool(acc), str(price), str(qty)))
    return Tender(Market.MGP, zone, date, hour, tuple(offers), label)


@pytest.fixture
def make_msd():
    return msd


@pytest.fixture
def make_mgp():
    return mgp


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if report.failed:
        status = "FAIL"
    elif report.skipped:
        status = "SKIP"
    elif report.when == "call":
        status = "PASS"
    else:
        return
    prev = ACCEPTANCE_RESULTS.get(name)
    if prev == "FAIL" or (prev == "PASS" and status == "SKIP"):
        return
    ACCEPTANCE_RESULTS[name] = status


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{status:<5} {name}")
