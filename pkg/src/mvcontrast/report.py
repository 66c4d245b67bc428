"""Aggregation of run summaries and dependency-free SVG charts.

Summaries are the per-run JSON files written next to checkpoints.  The
aggregate groups them by (mode, gap) across seeds and reports mean and
population std (a single run therefore gets std 0).  Charts are emitted
as hand-written SVG markup so reporting needs nothing beyond the
standard library.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

AGGREGATE_COLUMNS = (
    "mode",
    "gap",
    "runs",
    "test_mean",
    "test_std",
    "train_mean",
    "train_std",
)


@dataclass(frozen=True)
class AggregateRow:
    mode: str
    gap: float | None
    runs: int
    test_mean: float
    test_std: float
    train_mean: float
    train_std: float


def load_summaries(run_dirs) -> tuple[list, list]:
    """All summary.json documents under the given directories.

    Returns (summaries, problems); unreadable or malformed files and
    directories without any summary are reported in problems and skipped.
    """
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ConfigError("no run directories given")
    summaries, problems = [], []
    for root in run_dirs:
        found = sorted(root.rglob("summary.json")) if root.is_dir() else []
        if not found:
            problems.append(f"{root}: no summary.json found")
            continue
        for path in found:
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as err:
                problems.append(f"{path}: {err}")
                continue
            if not isinstance(doc, dict) or "mode" not in doc:
                problems.append(f"{path}: not a run summary")
                continue
            summaries.append(doc)
    return summaries, problems


def _mean_std(values) -> tuple[float, float]:
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def aggregate(summaries) -> tuple[list, list]:
    """Mean and std of accuracies per (mode, gap); failed runs are set aside."""
    groups: dict = {}
    problems = []
    for doc in summaries:
        if doc.get("error") is not None:
            problems.append(
                f"run {doc.get('run_id', '?')} failed and was skipped: {doc['error']}"
            )
            continue
        if doc.get("test_accuracy") is None:
            problems.append(f"run {doc.get('run_id', '?')} carries no accuracy; skipped")
            continue
        groups.setdefault((doc["mode"], doc.get("gap")), []).append(doc)
    rows = []
    for (mode, gap), docs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1] if kv[0][1] is not None else -1.0)
    ):
        test_mean, test_std = _mean_std([d["test_accuracy"] for d in docs])
        train_vals = [d["train_accuracy"] for d in docs if d.get("train_accuracy") is not None]
        train_mean, train_std = _mean_std(train_vals) if train_vals else (float("nan"), 0.0)
        rows.append(
            AggregateRow(mode, gap, len(docs), test_mean, test_std, train_mean, train_std)
        )
    return rows, problems


def write_aggregate_csv(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.mode,
                    "" if r.gap is None else repr(float(r.gap)),
                    r.runs,
                    repr(r.test_mean),
                    repr(r.test_std),
                    repr(r.train_mean),
                    repr(r.train_std),
                ]
            )


# -------------------------------------------------------------------- svg --

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 70, 20, 30, 60
_PLOT_W, _PLOT_H = _W - _ML - _MR, _H - _MT - _MB


def _y(acc: float) -> float:
    return _MT + (1.0 - acc) * _PLOT_H


def _frame(title: str) -> list:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + _PLOT_H}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT + _PLOT_H}" x2="{_ML + _PLOT_W}" '
        f'y2="{_MT + _PLOT_H}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = _y(tick)
        parts.append(f'<line x1="{_ML - 4}" y1="{y}" x2="{_ML}" y2="{y}" stroke="black"/>')
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4}" text-anchor="end">{tick:g}</text>'
        )
    parts.append(
        f'<text x="16" y="{_MT + _PLOT_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + _PLOT_H / 2})">test accuracy</text>'
    )
    return parts


def _whisker(parts: list, x: float, mean: float, std: float) -> None:
    if std <= 0:
        return
    lo, hi = _y(max(0.0, mean - std)), _y(min(1.0, mean + std))
    parts.append(f'<line x1="{x}" y1="{hi}" x2="{x}" y2="{lo}" stroke="black"/>')
    for y in (hi, lo):
        parts.append(f'<line x1="{x - 4}" y1="{y}" x2="{x + 4}" y2="{y}" stroke="black"/>')


def svg_mode_bars(rows, title: str = "Accuracy by pairing setting") -> str:
    """Bar chart over modes; error whiskers show the std across seeds."""
    rows = list(rows)
    if not rows:
        raise ConfigError("nothing to plot")
    parts = _frame(title)
    slot = _PLOT_W / len(rows)
    width = slot * 0.6
    for i, r in enumerate(rows):
        x = _ML + i * slot + (slot - width) / 2
        y = _y(r.test_mean)
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{width:.1f}" '
            f'height="{_MT + _PLOT_H - y:.1f}" fill="#4878a8"/>'
        )
        _whisker(parts, x + width / 2, r.test_mean, r.test_std)
        label = r.mode if r.gap is None else f"{r.mode} (gap {r.gap:g})"
        parts.append(
            f'<text x="{x + width / 2:.1f}" y="{_MT + _PLOT_H + 16}" '
            f'text-anchor="middle">{label}</text>'
        )
        parts.append(
            f'<text x="{x + width / 2:.1f}" y="{y - 6:.1f}" '
            f'text-anchor="middle">{r.test_mean:.3f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def svg_gap_line(rows, title: str = "Accuracy by temporal gap") -> str:
    """Line chart of accuracy against gap seconds for the sweep rows."""
    rows = sorted((r for r in rows if r.gap is not None), key=lambda r: r.gap)
    if len(rows) < 2:
        raise ConfigError("gap line chart needs at least two gap values")
    gaps = [r.gap for r in rows]
    lo, hi = min(gaps), max(gaps)
    span = hi - lo or 1.0

    def x(gap):
        return _ML + (gap - lo) / span * _PLOT_W

    parts = _frame(title)
    points = " ".join(f"{x(r.gap):.1f},{_y(r.test_mean):.1f}" for r in rows)
    parts.append(f'<polyline points="{points}" fill="none" stroke="#4878a8" stroke-width="2"/>')
    for r in rows:
        parts.append(
            f'<circle cx="{x(r.gap):.1f}" cy="{_y(r.test_mean):.1f}" r="4" fill="#4878a8"/>'
        )
        _whisker(parts, x(r.gap), r.test_mean, r.test_std)
        parts.append(
            f'<text x="{x(r.gap):.1f}" y="{_MT + _PLOT_H + 16}" '
            f'text-anchor="middle">{r.gap:g}</text>'
        )
    parts.append(
        f'<text x="{_ML + _PLOT_W / 2}" y="{_H - 16}" text-anchor="middle">gap (seconds)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def write_plots(rows, out_dir) -> list:
    """Bar chart always; gap line chart when the rows hold a sweep."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    bars = out_dir / "accuracy_by_mode.svg"
    bars.write_text(svg_mode_bars(rows) + "\n", encoding="utf-8")
    written.append(bars)
    if len({r.gap for r in rows if r.gap is not None}) >= 2:
        line = out_dir / "accuracy_by_gap.svg"
        line.write_text(svg_gap_line(rows) + "\n", encoding="utf-8")
        written.append(line)
    return written
