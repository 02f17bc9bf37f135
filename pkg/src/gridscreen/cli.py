"""Command-line entry point.

Exit codes: 0 success, 1 input, configuration or usage errors, 2 internal errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from typing import Sequence

import numpy as np

from . import __version__
from .config import Config, ConfigError, load_config
from .data import (DataError, LabeledDataset, Market, Record, Tender, apply_labels,
                   build_dataset, combine_datasets, ingest, restrict_to_units, write_tenders)
from .evaluation import export_report, repeated_evaluation, summary_lines
from .features import (BLOCKS, block_columns, feature_table, msd_block_for, record_features,
                       tender_screen_rows, write_rows)
from .figures import export_hourly_series, read_labels
from .learners.stacking import FoldError, SchemaError, fit_super_learner
from .persist import ModelFormatError, load_model, save_model
from .screens import MGP_SCREEN_NAMES
from .seeding import ENSEMBLE, derive_seed
from .simulator import gen_dataset
from .stats import screen_significance_report, write_significance_csv
from .subgroups import SubgroupLimitError, subgroup_columns

log = logging.getLogger("gridscreen")

USER_ERRORS = (DataError, ModelFormatError, SchemaError, FoldError, SubgroupLimitError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config)")
    p.add_argument("--config", default=d(None), help="key = value configuration file")
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("--jobs", type=int, default=d(1), help="worker threads for tree fitting")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="directory holding msd.csv, mgp.csv and optionally dataset.cfg")
    p.add_argument("--msd", help="MSD offers CSV")
    p.add_argument("--mgp", help="MGP offers CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridscreen", description="Cartel screens and ensemble detection for "
                     "MSD/MGP electricity auctions.")
    parser.add_argument("--version", action="version", version=f"gridscreen {__version__}")
    _globals(parser, suppress=False)
    common = _Parser(add_help=False)
    _globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="validate an offers file")
    p.add_argument("file")
    p.add_argument("--market", required=True, choices=[m.value for m in Market])
    p.add_argument("--strict", action="store_true", help="fail on any rejected row")

    p = sub.add_parser("screens", parents=[common], help="per-tender screen values")
    _data_args(p)
    p.add_argument("--subgroups", action="store_true", help="add the 3/4-offer subgroup summaries")

    p = sub.add_parser("test-screens", parents=[common], help="MW and KS tests of every screen")
    _data_args(p)
    p.add_argument("--subgroups", action="store_true", help="include subgroup summaries")

    sub.add_parser("simulate", parents=[common], help="write a simulated market dataset")

    p = sub.add_parser("train", parents=[common], help="fit the super learner on a dataset")
    _data_args(p)
    p.add_argument("--block", choices=BLOCKS, default="combined")

    p = sub.add_parser("predict", parents=[common], help="score tenders with a trained model")
    _data_args(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="repeated split/train/test evaluation")
    _data_args(p)
    p.add_argument("--block", choices=BLOCKS + ("all",), default="all")
    p.add_argument("--repetitions", type=int, default=10)

    p = sub.add_parser("report", parents=[common], help="significance tables and figure data")
    _data_args(p)
    p.add_argument("--figures", action="store_true", help="also export hourly MGP series (CSV and SVG)")
    p.add_argument("--subgroups", action="store_true", help="include subgroup summaries")
    return parser


# ----------------------------------------------------------------------------- inputs

def _config(args) -> Config:
    """A data directory's dataset.cfg, overlaid by ``--config`` when both are given."""
    cfg = Config()
    data = getattr(args, "data", None)
    if data and os.path.isfile(os.path.join(data, "dataset.cfg")):
        cfg = load_config(os.path.join(data, "dataset.cfg"))
    if args.config:
        cfg = cfg.overlay(load_config(args.config)) if cfg.values else load_config(args.config)
    return cfg


def _master_seed(args, cfg: Config) -> int:
    if args.seed is not None:
        seed = args.seed
    else:
        seed = cfg.seed if cfg.seed is not None else 0
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return seed


def _paths(args, cfg: Config, part: bool = False) -> tuple[str | None, str | None]:
    """Offer files: command-line flags win, except that a pooled part's own keys win."""
    if part and cfg.get("msd") and cfg.get("mgp"):
        return cfg.resolve(cfg.get("msd")), cfg.resolve(cfg.get("mgp"))
    msd = getattr(args, "msd", None)
    mgp = getattr(args, "mgp", None)
    data = getattr(args, "data", None)
    if data:
        msd = msd or os.path.join(data, "msd.csv")
        mgp = mgp or os.path.join(data, "mgp.csv")
    if msd is None and cfg.get("msd"):
        msd = cfg.resolve(cfg.get("msd"))
    if mgp is None and cfg.get("mgp"):
        mgp = cfg.resolve(cfg.get("mgp"))
    return msd, mgp


def _read(path: str | None, market: Market) -> list[Tender]:
    if path is None:
        raise ConfigError(f"no {market.value} offers file given (use --data, --{market.value.lower()} "
                          f"or the '{market.value.lower()}' config key)")
    errors = []
    tenders = ingest(path, market, errors)
    for e in errors:
        log.warning("%s: %s", path, e)
    return tenders


def _load_dataset(args, cfg: Config, seed: int, part: bool = False) -> LabeledDataset:
    parts = cfg.parts()
    if parts:
        built = [_load_dataset(args, p, seed, part=True) for p in parts]
        ds = combine_datasets(*built)
        if cfg.get("cartel_type") and cfg.get("cartel_type") != ds.spec.cartel_type:
            raise ConfigError(f"parts are {ds.spec.cartel_type} cartels, config says {cfg.get('cartel_type')}")
        return ds
    if not cfg.has_dataset:
        raise ConfigError("no dataset configuration: pass --config or a --data directory with dataset.cfg")
    msd_path, mgp_path = _paths(args, cfg, part)
    spec = cfg.dataset_spec(seed)
    return build_dataset(_read(msd_path, Market.MSD), _read(mgp_path, Market.MGP), spec)


def _labeled_tenders(args, cfg: Config, need_mgp: bool) -> tuple[list[Tender], list[Tender]]:
    msd_path, mgp_path = _paths(args, cfg)
    msd = _read(msd_path, Market.MSD)
    mgp = _read(mgp_path, Market.MGP) if (mgp_path or need_mgp) else []
    if cfg.has_dataset and not cfg.parts():
        spec = cfg.dataset_spec()
        msd = apply_labels(msd, spec)
        mgp = apply_labels(mgp, spec)
    return msd, mgp


def _out(args, default: str) -> str:
    return args.out or default


def _print_resolved(args, cfg: Config, seed: int) -> None:
    print(f"command: {args.command}")
    print(f"config: {cfg.path or '(none)'}")
    for line in cfg.describe():
        print(f"  {line}")
    if args.command in ("train", "evaluate"):
        hp = cfg.hyperparameters()
        print("learner: " + ", ".join(f"{k}={v}" for k, v in hp.to_dict().items()))
    print(f"master seed: {seed}")
    print(f"jobs: {args.jobs}")


# ----------------------------------------------------------------------------- commands

def cmd_ingest(args, cfg, seed) -> int:
    errors = []
    tenders = ingest(args.file, args.market, errors)
    n_offers = sum(len(t.offers) for t in tenders)
    for e in errors:
        print(f"rejected {e}", file=sys.stderr)
    print(f"{args.file}: {len(tenders)} tenders, {n_offers} offers, {len(errors)} rejected rows")
    if args.out:
        write_tenders(tenders, args.out, args.market)
        print(f"wrote {args.out}")
    return 1 if (errors and args.strict) else 0


def cmd_screens(args, cfg, seed) -> int:
    msd, mgp = _labeled_tenders(args, cfg, need_mgp=False)
    header, rows = tender_screen_rows(msd, mgp, args.subgroups, cfg.max_subgroups)
    out = _out(args, "screens.csv")
    write_rows(header, rows, out)
    print(f"wrote {len(rows)} tenders to {out}")
    return 0


def _significance(ds: LabeledDataset, subgroups: bool, max_subgroups: int):
    columns = block_columns("msd_classical") + (subgroup_columns() if subgroups else []) \
        + list(MGP_SCREEN_NAMES)
    vals = np.array([record_features(r, columns, max_subgroups) for r in ds.records],
                    dtype=np.float64).reshape(len(ds), len(columns))
    features = {c: [None if np.isnan(v) else float(v) for v in vals[:, j]] for j, c in enumerate(columns)}
    return screen_significance_report(features, ds.y, f"{ds.spec.case}/{ds.spec.cartel_type}")


def cmd_test_screens(args, cfg, seed) -> int:
    ds = _load_dataset(args, cfg, seed)
    rows = _significance(ds, args.subgroups, cfg.max_subgroups)
    out = _out(args, "significance.csv")
    write_significance_csv(rows, out)
    print(f"{len(ds)} tenders; wrote {len(rows)} screens to {out}")
    return 0


def cmd_simulate(args, cfg, seed) -> int:
    config = cfg.market_config(seed)
    out = _out(args, "simdata")
    data = gen_dataset(config, out)
    print(f"wrote {len(data.msd)} MSD and {len(data.mgp)} MGP tenders to {out}")
    return 0


def cmd_train(args, cfg, seed) -> int:
    ds = _load_dataset(args, cfg, seed)
    table = feature_table(ds, args.block, max_subgroups=cfg.max_subgroups)
    model = fit_super_learner(table.values, table.y, table.columns, cfg.hyperparameters(),
                              seed=derive_seed(seed, ENSEMBLE), jobs=args.jobs)
    out = _out(args, "model.json")
    save_model(model, out)
    print(f"trained on {len(ds)} tenders ({args.block}); weights "
          + ", ".join(f"{w:.4f}" for w in model.weights))
    print(f"wrote {out}")
    return 0


def cmd_predict(args, cfg, seed) -> int:
    model = load_model(args.model)
    need_mgp = any(c in MGP_SCREEN_NAMES for c in model.columns)
    msd, mgp = _labeled_tenders(args, cfg, need_mgp)
    if cfg.get("cartel_type", "Complete") == "Complete" and cfg.get("cartel_units"):
        msd = restrict_to_units(msd, cfg.dataset_spec().cartel_units)
    index = {t.key: t for t in mgp}
    records = []
    for t in msd:
        m = index.get(t.key)
        if m is None:
            if need_mgp:
                raise DataError(f"{t.tender_id}: no MGP tender for the same zone and hour")
            m = Tender(Market.MGP, t.zone, t.date, t.hour)
        records.append(Record(t, m, t.label))
    if records:
        X = np.array([record_features(r, model.columns, cfg.max_subgroups) for r in records])
    else:
        X = np.empty((0, len(model.columns)))
    proba = model.predict_proba(X, model.columns) if len(X) else np.empty(0)
    out = _out(args, "predictions.csv")
    rows = [[r.msd.tender_id, r.label.value, float(p), int(p > 0.5)] for r, p in zip(records, proba)]
    write_rows(("tender_id", "label", "probability", "class"), rows, out)
    print(f"scored {len(rows)} tenders; {sum(r[3] for r in rows)} flagged collusive; wrote {out}")
    return 0


def cmd_evaluate(args, cfg, seed) -> int:
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be at least 1")
    ds = _load_dataset(args, cfg, seed)
    hp = cfg.hyperparameters()
    blocks = ([msd_block_for(ds.spec.cartel_type), "mgp_new", "combined"]
              if args.block == "all" else [args.block])
    reports = [repeated_evaluation(ds, b, args.repetitions, seed, hp, args.jobs) for b in blocks]
    out = _out(args, "evaluation.csv")
    stem, ext = os.path.splitext(out)
    reps_path = f"{stem}_repetitions{ext or '.csv'}"
    export_report(reports, out, reps_path)
    print(f"{len(ds)} tenders, {args.repetitions} repetitions")
    for line in summary_lines(reports):
        print(line)
    print(f"wrote {out} and {reps_path}")
    return 0


def cmd_report(args, cfg, seed) -> int:
    out = _out(args, "report")
    os.makedirs(out, exist_ok=True)
    written = []
    if cfg.has_dataset or cfg.parts():
        ds = _load_dataset(args, cfg, seed)
        path = os.path.join(out, "significance.csv")
        write_significance_csv(_significance(ds, args.subgroups, cfg.max_subgroups), path)
        written.append(path)
    if args.figures:
        _, mgp_path = _paths(args, cfg)
        mgp = _read(mgp_path, Market.MGP)
        labels = None
        data = getattr(args, "data", None)
        if data and os.path.isfile(os.path.join(data, "labels.csv")):
            labels = read_labels(os.path.join(data, "labels.csv"))
        elif cfg.has_dataset and not cfg.parts():
            mgp = apply_labels(mgp, cfg.dataset_spec())
        for metric in MGP_SCREEN_NAMES:
            csv_path = os.path.join(out, f"hourly_{metric}.csv")
            svg_path = os.path.join(out, f"hourly_{metric}.svg")
            export_hourly_series(mgp, labels, metric, csv_path, svg_path)
            written += [csv_path, svg_path]
    if not written:
        raise ConfigError("nothing to report: give a dataset configuration and/or --figures")
    for p in written:
        print(f"wrote {p}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "screens": cmd_screens,
    "test-screens": cmd_test_screens,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _config(args)
        seed = _master_seed(args, cfg)
        _print_resolved(args, cfg, seed)
        return COMMANDS[args.command](args, cfg, seed)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("%s", traceback.format_exc())
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
