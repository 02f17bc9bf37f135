"""Repeated 75/25 split, train and test protocol with confusion-count metrics."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import DatasetError, LabeledDataset
from .features import BLOCKS, FeatureTable, feature_table
from .learners.stacking import Hyperparameters, fit_super_learner
from .seeding import ENSEMBLE, SPLIT, derive_seed, rng_for

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.75
MIN_CLASS_SIZE = 4


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(y, seed: int, fraction: float = TRAIN_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    """Stratified random split; returns sorted (train, test) row indices.

    Each class contributes ``round(fraction * class size)`` rows (halves round
    up) to the training part.
    """
    if isinstance(y, LabeledDataset):
        y = y.y
    y = np.asarray(y)
    rng = rng_for(seed, SPLIT)
    train = []
    for cls in (1, 0):
        idx = np.flatnonzero(y == cls)
        if len(idx) < MIN_CLASS_SIZE:
            raise DatasetError(f"class {cls} has {len(idx)} tenders; at least {MIN_CLASS_SIZE} needed")
        k = _round_half_up(fraction * len(idx))
        train.append(rng.permutation(idx)[:k])
    tr = np.sort(np.concatenate(train))
    te = np.setdiff1d(np.arange(len(y)), tr)
    return tr, te


@dataclass(frozen=True)
class Metrics:
    tp: int
    tn: int
    fp: int
    fn: int

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Metrics":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(int((t & p).sum()), int((~t & ~p).sum()), int((~t & p).sum()), int((t & ~p).sum()))

    @property
    def accuracy(self) -> float:
        n = self.tp + self.tn + self.fp + self.fn
        return (self.tp + self.tn) / n if n else float("nan")

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else float("nan")

    @property
    def specificity(self) -> float:
        d = self.tn + self.fp
        return self.tn / d if d else float("nan")


@dataclass(frozen=True)
class Repetition:
    index: int
    seed: int
    metrics: Metrics


@dataclass(frozen=True)
class EvaluationReport:
    case: str
    cartel_type: str
    block: str
    repetitions: tuple[Repetition, ...] = ()
    master_seed: int = 0
    weights: tuple[tuple[float, ...], ...] = field(default=(), compare=False)

    def _mean(self, name: str) -> float:
        if not self.repetitions:
            return float("nan")
        return float(np.mean([getattr(r.metrics, name) for r in self.repetitions]))

    @property
    def accuracy(self) -> float:
        return self._mean("accuracy")

    @property
    def recall(self) -> float:
        return self._mean("recall")

    @property
    def specificity(self) -> float:
        return self._mean("specificity")


def _table(data, block: str) -> FeatureTable:
    if isinstance(data, FeatureTable):
        return data
    return feature_table(data, block)


def evaluate_once(data: LabeledDataset | FeatureTable, block: str = "combined", seed: int = 0,
                  hp: Hyperparameters | None = None, jobs: int = 1, return_model: bool = False):
    """Split, fit the super learner on the training part and score the test part."""
    table = _table(data, block)
    train, test = split(table.y, seed)
    model = fit_super_learner(table.values[train], table.y[train], table.columns, hp,
                              seed=derive_seed(seed, ENSEMBLE), jobs=jobs)
    metrics = Metrics.from_predictions(table.y[test], model.classify(table.values[test]))
    return (metrics, model) if return_model else metrics


def repeated_evaluation(dataset: LabeledDataset, block: str = "combined", repetitions: int = 10,
                        master_seed: int = 0, hp: Hyperparameters | None = None, jobs: int = 1,
                        table: FeatureTable | None = None) -> EvaluationReport:
    """``repetitions`` independent splits; repetition ``r`` uses ``derive_seed(master_seed, r)``."""
    if block not in BLOCKS:
        raise ValueError(f"unknown screen block {block!r}")
    table = table if table is not None else feature_table(dataset, block)
    reps = []
    weights = []
    for r in range(repetitions):
        seed = derive_seed(master_seed, r)
        metrics, model = evaluate_once(table, block, seed, hp, jobs, return_model=True)
        log.info("%s repetition %d: accuracy %.4f", block, r, metrics.accuracy)
        reps.append(Repetition(r, seed, metrics))
        weights.append(tuple(float(w) for w in model.weights))
    return EvaluationReport(dataset.spec.case, dataset.spec.cartel_type, block, tuple(reps),
                            int(master_seed), tuple(weights))


REPORT_HEADER = ("case", "cartel_type", "screen_block", "repetitions",
                 "accuracy", "recall", "specificity", "tp", "tn", "fp", "fn")
REPETITION_HEADER = ("case", "cartel_type", "screen_block", "repetition", "seed",
                     "accuracy", "recall", "specificity", "tp", "tn", "fp", "fn")


def _order(report: EvaluationReport):
    return (report.case, report.cartel_type, BLOCKS.index(report.block) if report.block in BLOCKS else 99)


def _f(x: float) -> str:
    return repr(round(float(x), 12))


def export_report(reports: EvaluationReport | Iterable[EvaluationReport], path,
                  repetitions_path=None) -> None:
    """One row per (case, cartel type, block) with mean metrics and summed counts.

    ``repetitions_path`` optionally receives the per-repetition rows.
    """
    if isinstance(reports, EvaluationReport):
        reports = [reports]
    reports = sorted(reports, key=_order)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for rep in reports:
            if not rep.repetitions:
                continue
            tot = [sum(getattr(r.metrics, k) for r in rep.repetitions) for k in ("tp", "tn", "fp", "fn")]
            w.writerow([rep.case, rep.cartel_type, rep.block, len(rep.repetitions),
                        _f(rep.accuracy), _f(rep.recall), _f(rep.specificity), *tot])
    if repetitions_path is not None:
        with open(repetitions_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPETITION_HEADER)
            for rep in reports:
                for r in rep.repetitions:
                    m = r.metrics
                    w.writerow([rep.case, rep.cartel_type, rep.block, r.index, r.seed,
                                _f(m.accuracy), _f(m.recall), _f(m.specificity),
                                m.tp, m.tn, m.fp, m.fn])


def summary_lines(reports: Sequence[EvaluationReport]) -> list[str]:
    out = []
    for rep in sorted(reports, key=_order):
        out.append(f"{rep.case:<13} {rep.cartel_type:<10} {rep.block:<14} "
                   f"acc {100 * rep.accuracy:6.2f}  rec {100 * rep.recall:6.2f}  "
                   f"spec {100 * rep.specificity:6.2f}")
    return out
