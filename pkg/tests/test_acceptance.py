"""Acceptance criteria, one test (or test group) per criterion.

Run ``pytest tests/test_acceptance.py`` to print the PASS/FAIL table.  The
three property suites are re-run in a subprocess so that their wall time is
measured on its own.  The real-data check needs ``GRIDSCREEN_REAL_DATA``
pointing to a directory of case configurations (see README).
"""
import csv
import datetime as dt
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import mgp, msd
from gridscreen.cli import main
from gridscreen.data import DatasetSpec, Label, build_dataset
from gridscreen.features import feature_table
from gridscreen.simulator import MarketConfig, simulate, with_overrides
from gridscreen.stats import screen_significance_report

TESTS = Path(__file__).parent
E2E_BUDGET = 300.0


def _suite(files, budget, extra=()):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / f) for f in files], *extra],
                          cwd=TESTS.parent, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stdout[-3000:] + proc.stderr[-2000:]
    assert elapsed < budget, f"suite took {elapsed:.1f}s, budget {budget}s"
    return elapsed


# ------------------------------------------------------------------ property suites

@pytest.mark.criterion("Screen correctness suite")
def test_screen_suite():
    _suite(["test_screens.py", "test_subgroups.py"], 10.0)


@pytest.mark.criterion("Statistical-test suite")
def test_stats_suite():
    _suite(["test_stats.py"], 30.0)


@pytest.mark.criterion("Learner suite")
def test_learner_suite():
    _suite(["test_learners.py", "test_evaluation.py::test_pure_noise_accuracy_near_chance"], 120.0)


# ------------------------------------------------------------------ end-to-end simulator benchmark

def best_single_accuracy(table) -> dict[str, float]:
    """In-sample accuracy of the best one-feature threshold rule, per column."""
    out = {}
    y = table.y
    for j, c in enumerate(table.columns):
        v = table.values[:, j]
        ok = ~np.isnan(v)
        if not ok.any():
            continue
        order = np.argsort(v[ok], kind="stable")
        vs, ys = v[ok][order], y[ok][order]
        pos = np.r_[0, np.cumsum(ys)]
        neg = np.r_[0, np.cumsum(1 - ys)]
        # cut after position i: everything above is called collusive, or everything below
        above = neg + (pos[-1] - pos)
        below = pos + (neg[-1] - neg)
        cuts = np.r_[True, vs[1:] > vs[:-1], True]
        out[c] = float(max(above[cuts].max(), below[cuts].max()) / len(y))
    return out


def _dataset(config: MarketConfig):
    data = simulate(config)
    spec = DatasetSpec(collusive_windows=config.window_dates(), cartel_units=config.cartel_units,
                       zones=(config.zone,), seed=config.seed)
    return build_dataset(data.msd, data.mgp, spec)


def _pvalues(ds) -> dict[str, float | None]:
    table = feature_table(ds, "combined")
    return {r.screen: r.p_mw for r in screen_significance_report(table.as_mapping(), table.y)}


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    """Default simulator at seed 42 through the command line; timed as a whole."""
    root = tmp_path_factory.mktemp("e2e")
    t0 = time.perf_counter()
    assert main(["simulate", "--seed", "42", "--out", str(root / "data")]) == 0
    assert main(["evaluate", "--data", str(root / "data"), "--seed", "42", "--block", "all",
                 "--repetitions", "10", "--out", str(root / "evaluation.csv")]) == 0
    assert main(["test-screens", "--data", str(root / "data"), "--seed", "42",
                 "--out", str(root / "significance.csv")]) == 0
    with open(root / "evaluation.csv", newline="") as fh:
        acc = {r["screen_block"]: float(r["accuracy"]) for r in csv.DictReader(fh)}
    with open(root / "significance.csv", newline="") as fh:
        sig = {r["screen"]: r for r in csv.DictReader(fh)}

    base = MarketConfig(seed=42)
    table = feature_table(_dataset(base), "combined")
    best = best_single_accuracy(table)

    rotation = _pvalues(_dataset(with_overrides(base, strategy="rotation")))

    # null: cartel behaviour switched off, labels still drawn from the windows
    null_p = []
    seed = 0
    while len(null_p) < 200:
        seed += 1
        ps = _pvalues(_dataset(with_overrides(base, strategy="none", seed=1000 + seed)))
        null_p += [p for p in ps.values() if p is not None]
    null_p = null_p[:200]
    elapsed = time.perf_counter() - t0
    print(f"\ne2e: accuracy {acc}; best single feature {max(best.items(), key=lambda kv: kv[1])}; "
          f"null rejection {np.mean(np.array(null_p) < 0.05):.3f}; {elapsed:.1f}s")
    return dict(acc=acc, sig=sig, best=best, rotation=rotation, null=null_p, elapsed=elapsed)


E2E = pytest.mark.criterion("End-to-end simulator benchmark")


@E2E
def test_e2e_accuracies(e2e):
    acc = e2e["acc"]
    assert acc["combined"] >= 0.90
    assert acc["msd_classical"] >= 0.70 and acc["mgp_new"] >= 0.70
    assert acc["combined"] >= max(acc["msd_classical"], acc["mgp_new"]) - 0.02


@E2E
def test_e2e_single_feature_calibration(e2e):
    assert max(e2e["best"].values()) <= 0.85


@E2E
def test_e2e_withholding_flags_mgp_screens(e2e):
    for screen in ("mgp_offers", "mgp_quantity", "mgp_accepted_quantity"):
        assert float(e2e["sig"][screen]["p_MW"]) < 0.01, screen


@E2E
def test_e2e_rotation_flags_low_bid_screens(e2e):
    for screen in ("diff", "diffp", "rd"):
        assert e2e["rotation"][screen] < 0.01, screen


@E2E
def test_e2e_null_false_positive_rate(e2e):
    assert len(e2e["null"]) == 200
    assert 0.01 <= float(np.mean(np.array(e2e["null"]) < 0.05)) <= 0.12


@E2E
def test_e2e_runtime(e2e):
    assert e2e["elapsed"] < E2E_BUDGET


# ------------------------------------------------------------------ protocol fidelity

CARTEL = ("C1", "C2", "C3", "C4")


def _fixture():
    """Days 1-4 collusive and 5-16 competitive, two hours each; seven MSD units.

    Day 2 repeats day 1's offers (an MSD duplicate in the collusive class)
    and every MGP tender is identical, so MGP duplicates abound.
    """
    start = dt.date(2016, 4, 21)
    ms, mg = [], []
    for d in range(16):
        date = start + dt.timedelta(days=d)
        for h in (1, 2):
            base = 0 if d == 1 else d  # day 2 copies day 1
            prices = [100 + 7 * base + 3 * h + 2 * j for j in range(7)]
            ms.append(msd(prices, date=date, hour=h, units=list(CARTEL) + ["O1", "O2", "O3"]))
            mg.append(mgp([(10, 1), (20, 0), (5, 1)], date=date, hour=h))
    spec = DatasetSpec(case="Custom", cartel_type="Complete",
                       collusive_windows=((start, start + dt.timedelta(days=3)),),
                       cartel_units=CARTEL, zones=("BRNN",), seed=11)
    return ms, mg, spec


@pytest.mark.criterion("Protocol fidelity")
def test_protocol_fidelity():
    ms, mg, spec = _fixture()
    ds = build_dataset(ms, mg, spec)
    counts = ds.provenance
    # only the MSD duplicate (day 2, both hours) is removed; identical MGP tenders survive
    assert counts["restricted"] == 32 and counts["deduplicated"] == 30
    assert counts["processed"] == 12 and counts["processed_collusive_share"] == 0.5
    assert int(ds.y.sum()) == 6 and len(ds) == 12
    for r in ds.records:
        assert len(r.msd.offers) == 4
        assert {o.unit_id for o in r.msd.offers} == set(CARTEL)
        assert len(r.mgp.offers) == 3
    dates = {r.msd.date for r in ds.records if r.label is Label.COLLUSIVE}
    assert dt.date(2016, 4, 22) not in dates


# ------------------------------------------------------------------ real data (conditional)

PAPER_ACCURACY = {
    ("campania", "complete"): (61.00, 70.00, 79.00),
    ("brindisi", "complete"): (89.71, 91.76, 95.59),
    ("combined", "complete"): (86.36, 80.91, 89.32),
    ("campania", "incomplete"): (99.91, 83.93, 99.81),
    ("brindisi", "incomplete"): (98.21, 88.86, 98.05),
    ("combined", "incomplete"): (98.78, 86.96, 98.48),
}
REAL = os.environ.get("GRIDSCREEN_REAL_DATA")


@pytest.mark.criterion("Conditional real-data check")
@pytest.mark.skipif(not REAL, reason="set GRIDSCREEN_REAL_DATA to a directory of case configs")
@pytest.mark.parametrize("case, cartel", sorted(PAPER_ACCURACY))
def test_real_data(case, cartel, tmp_path):
    cfg = Path(REAL) / f"{case}_{cartel}.cfg"
    if not cfg.is_file():
        pytest.skip(f"{cfg} not present")
    out = tmp_path / "evaluation.csv"
    assert main(["evaluate", "--config", str(cfg), "--block", "all", "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    msd_block = "msd_classical" if cartel == "complete" else "msd_subgroup"
    got = {r["screen_block"]: 100 * float(r["accuracy"]) for r in rows}
    for block, want in zip((msd_block, "mgp_new", "combined"), PAPER_ACCURACY[(case, cartel)]):
        assert abs(got[block] - want) <= 5.0, (block, got[block], want)


# ------------------------------------------------------------------ determinism

def _pipeline(root: Path) -> dict[str, bytes]:
    root.mkdir()
    cfg = root / "sim.cfg"
    cfg.write_text("sim.days = 10\nsim.windows = 4..5\nlearner.n_trees = 20\n")
    data = root / "data"
    steps = [
        ["simulate", "--config", cfg, "--seed", 5, "--out", data],
        ["screens", "--data", data, "--subgroups", "--out", root / "screens.csv"],
        ["test-screens", "--data", data, "--out", root / "significance.csv"],
        ["train", "--data", data, "--config", cfg, "--out", root / "model.json"],
        ["predict", "--data", data, "--model", root / "model.json", "--out", root / "predictions.csv"],
        ["evaluate", "--data", data, "--config", cfg, "--repetitions", 2, "--block", "mgp_new",
         "--out", root / "evaluation.csv"],
        ["report", "--data", data, "--figures", "--out", root / "report"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.criterion("Determinism")
def test_full_pipeline_is_byte_identical(tmp_path):
    a = _pipeline(tmp_path / "a")
    b = _pipeline(tmp_path / "b")
    assert sorted(a) == sorted(b)
    assert "model.json" in a and "evaluation_repetitions.csv" in a
    for name in a:
        assert a[name] == b[name], name
