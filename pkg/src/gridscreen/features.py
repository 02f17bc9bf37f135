"""Feature tables for the learners: one row per tender, NaN for missing screens."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import LabeledDataset, Record, Tender
from .screens import MGP_SCREEN_NAMES, SCREEN_NAMES, classical_screens, mgp_screens
from .subgroups import DEFAULT_MAX_SUBGROUPS, subgroup_columns, subgroup_summary

BLOCKS = ("msd_classical", "msd_subgroup", "mgp_new", "combined")


def msd_block_for(cartel_type: str) -> str:
    """Complete cartels use whole-tender screens, incomplete ones subgroup summaries."""
    return "msd_classical" if cartel_type == "Complete" else "msd_subgroup"


def block_columns(block: str, cartel_type: str = "Complete") -> list[str]:
    if block == "msd_classical":
        return list(SCREEN_NAMES)
    if block == "msd_subgroup":
        return subgroup_columns()
    if block == "mgp_new":
        return list(MGP_SCREEN_NAMES)
    if block == "combined":
        return block_columns(msd_block_for(cartel_type)) + list(MGP_SCREEN_NAMES)
    raise ValueError(f"unknown screen block {block!r}; expected one of {', '.join(BLOCKS)}")


def _nan(v) -> float:
    return np.nan if v is None else float(v)


@dataclass(frozen=True)
class FeatureTable:
    columns: tuple[str, ...]
    values: np.ndarray  # float64, NaN where a screen is missing
    tender_ids: tuple[str, ...]
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.tender_ids)

    def select(self, columns: Sequence[str]) -> "FeatureTable":
        idx = [self.columns.index(c) for c in columns]
        return FeatureTable(tuple(columns), self.values[:, idx], self.tender_ids, self.y)

    def rows(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(self.columns, self.values[idx], tuple(self.tender_ids[i] for i in idx),
                            self.y[idx])

    def as_mapping(self) -> dict[str, list[float | None]]:
        return {c: [None if np.isnan(v) else float(v) for v in self.values[:, j]]
                for j, c in enumerate(self.columns)}


def record_features(record: Record, columns: Sequence[str],
                    max_subgroups: int = DEFAULT_MAX_SUBGROUPS) -> list[float]:
    want = set(columns)
    vals: dict[str, float | None] = {}
    if want & set(SCREEN_NAMES):
        vals.update(classical_screens(record.msd.prices).as_dict())
    if any(c.startswith("sub") for c in want):
        vals.update(subgroup_summary(record.msd, max_subgroups))
    if want & set(MGP_SCREEN_NAMES):
        vals.update(mgp_screens(record.mgp).as_dict())
    return [_nan(vals[c]) for c in columns]


def feature_table(dataset: LabeledDataset, block: str, cartel_type: str | None = None,
                  max_subgroups: int = DEFAULT_MAX_SUBGROUPS) -> FeatureTable:
    cartel_type = cartel_type or dataset.spec.cartel_type
    columns = block_columns(block, cartel_type)
    values = np.array([record_features(r, columns, max_subgroups) for r in dataset.records],
                      dtype=np.float64).reshape(len(dataset), len(columns))
    ids = tuple(r.msd.tender_id for r in dataset.records)
    return FeatureTable(tuple(columns), values, ids, dataset.y)


def tender_screen_rows(msd: Iterable[Tender], mgp: Iterable[Tender] = (), subgroups: bool = False,
                       max_subgroups: int = DEFAULT_MAX_SUBGROUPS):
    """Header and rows for the ``screens`` CSV.

    MGP columns are filled from the MGP tender of the same zone and hour when
    one is given, and left empty otherwise.
    """
    mgp_index = {t.key: t for t in mgp}
    header = ["tender_id", "label", *SCREEN_NAMES]
    if subgroups:
        header += subgroup_columns()
    header += list(MGP_SCREEN_NAMES)
    rows = []
    for t in msd:
        vals = classical_screens(t.prices).as_dict()
        if subgroups:
            vals.update(subgroup_summary(t, max_subgroups))
        m = mgp_index.get(t.key)
        if m is not None:
            vals.update(mgp_screens(m).as_dict())
        rows.append([t.tender_id, t.label.value, *(vals.get(c) for c in header[2:])])
    return header, rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_rows(header: Sequence[str], rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0], row[1], *(_cell(v) for v in row[2:])])
