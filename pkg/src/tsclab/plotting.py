"""Minimal SVG line charts from run CSVs.  Pure post-processing, no deps."""

from __future__ import annotations

import csv
from typing import Dict, List, Optional, Sequence

_WIDTH, _HEIGHT = 640, 360
_MARGIN = 48
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def read_csv_columns(path: str) -> Dict[str, List[float]]:
    """Numeric columns of a CSV keyed by header; blank cells are skipped."""
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        columns: Dict[str, List[float]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name, cell in row.items():
                if cell is None or cell == "":
                    continue
                try:
                    columns[name].append(float(cell))
                except ValueError:
                    pass
    return {k: v for k, v in columns.items() if v}


def svg_line_chart(series: Dict[str, Sequence[float]], title: str = "") -> str:
    """One chart, one polyline per series, linear axes, fixed canvas."""
    if not series:
        raise ValueError("nothing to plot")
    all_y = [y for ys in series.values() for y in ys]
    y_min, y_max = min(all_y), max(all_y)
    if y_min == y_max:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    n_max = max(len(ys) for ys in series.values())
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN

    def px(i: int, n: int) -> float:
        frac = 0.0 if n <= 1 else i / (n - 1)
        return _MARGIN + frac * plot_w

    def py(y: float) -> float:
        return _MARGIN + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN + plot_h}" x2="{_MARGIN + plot_w}" '
        f'y2="{_MARGIN + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_MARGIN + plot_h}" stroke="black"/>',
        f'<text x="{_MARGIN - 6}" y="{py(y_max) + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{y_max:.4g}</text>',
        f'<text x="{_MARGIN - 6}" y="{py(y_min) + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{y_min:.4g}</text>',
    ]
    for k, (name, ys) in enumerate(sorted(series.items())):
        color = _COLORS[k % len(_COLORS)]
        points = " ".join(f"{px(i, len(ys)):.2f},{py(y):.2f}" for i, y in enumerate(ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        parts.append(f'<text x="{_MARGIN + 8}" y="{_MARGIN + 14 + 14 * k}" fill="{color}" '
                     f'font-family="sans-serif" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def plot_csv(csv_path: str, out_path: str,
             columns: Optional[Sequence[str]] = None) -> None:
    data = read_csv_columns(csv_path)
    if columns:
        missing = [c for c in columns if c not in data]
        if missing:
            raise ValueError(f"columns not in CSV: {missing}")
        data = {c: data[c] for c in columns}
    data.pop("episode", None)
    data.pop("env_steps", None)
    data.pop("eval_round", None)
    svg = svg_line_chart(data, title=csv_path.rsplit("/", 1)[-1])
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg + "\n")
