"""Per-hour plot data for the MGP withholding screens, with an optional static SVG scatter."""
from __future__ import annotations

import csv
import datetime as dt
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from .data import Label, Market, Tender
from .screens import MGP_SCREEN_NAMES, mgp_screens

SERIES_HEADER = ("timestamp", "value", "label")

# plot geometry in SVG user units
WIDTH, HEIGHT = 800, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


def timestamp(date: dt.date, hour: int) -> str:
    """Start of delivery hour ``hour`` (1..24) as ISO text."""
    return f"{date.isoformat()}T{hour - 1:02d}:00"


def _label_of(t: Tender, labels) -> Label:
    if labels is None:
        return t.label
    if isinstance(labels, Mapping):
        lab = labels.get(t.key, Label.UNLABELED)
    else:
        raise TypeError("labels must be a mapping from (zone, date, hour) to a label")
    return Label(lab)


def hourly_series(tenders: Iterable[Tender], metric: str,
                  labels: Mapping | None = None) -> list[tuple[str, float, Label]]:
    """``(timestamp, value, label)`` per MGP tender in chronological order.

    ``labels`` maps ``(zone, date, hour)`` to a label; without it the
    tenders' own labels are used.
    """
    if metric not in MGP_SCREEN_NAMES:
        raise ValueError(f"unknown metric {metric!r}; choose from {', '.join(MGP_SCREEN_NAMES)}")
    rows = []
    for t in sorted(tenders, key=lambda t: (t.date, t.hour, t.zone)):
        if t.market is not Market.MGP:
            raise ValueError(f"{t.tender_id} is not an MGP tender")
        value = mgp_screens(t).as_dict()[metric]
        rows.append((timestamp(t.date, t.hour), value, _label_of(t, labels)))
    return rows


def _num(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def export_hourly_series(tenders: Iterable[Tender], labels: Mapping | None, metric: str, path,
                         svg_path=None) -> list[tuple[str, float, Label]]:
    """Write the series CSV (and the SVG scatter when ``svg_path`` is given)."""
    rows = hourly_series(tenders, metric, labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for ts, value, lab in rows:
            w.writerow([ts, _num(value), lab.value])
    if svg_path is not None:
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(scatter_svg(rows, metric))
    return rows


def _extent(vals: Sequence[float]) -> tuple[float, float]:
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def scatter_svg(rows: Sequence[tuple[str, float, Label]], title: str) -> str:
    """Static scatter: hour index on x, metric on y; collusive hours drawn as red squares."""
    n = len(rows)
    ylo, yhi = _extent([float(v) for _, v, _ in rows])
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(i: int) -> float:
        return MARGIN_L + (pw * i / (n - 1) if n > 1 else pw / 2)

    def sy(v: float) -> float:
        return MARGIN_T + ph * (1.0 - (v - ylo) / (yhi - ylo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
           f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>']
    for v in (ylo, (ylo + yhi) / 2, yhi):
        out.append(f'<text x="{MARGIN_L - 6}" y="{sy(v) + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{v:.6g}</text>')
    if rows:
        for i in (0, n - 1):
            out.append(f'<text x="{sx(i):.2f}" y="{MARGIN_T + ph + 18}" text-anchor="middle" '
                       f'font-size="11">{escape(rows[i][0])}</text>')
    for i, (_, v, lab) in enumerate(rows):
        x, y = sx(i), sy(float(v))
        if lab is Label.COLLUSIVE:
            out.append(f'<rect class="collusive" x="{x - 2:.2f}" y="{y - 2:.2f}" width="4" height="4" fill="#c0392b"/>')
        else:
            out.append(f'<circle class="{lab.value.lower()}" cx="{x:.2f}" cy="{y:.2f}" r="1.5" fill="#7f8c8d"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_labels(path) -> dict[tuple[str, dt.date, int], Label]:
    """Read a ``labels.csv`` (zone, date, hour, label) file."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["zone"], dt.date.fromisoformat(row["date"]), int(row["hour"]))
            out[key] = Label(row["label"])
    return out
