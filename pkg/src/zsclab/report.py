"""CSV and static-SVG artifact emission plus run manifests.

CSV is the authoritative data format; SVG files are derived views written
directly (no plotting dependency). Every artifact directory gets a manifest
sufficient to reproduce the run bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, asdict, field
from typing import Sequence

import numpy as np

TOOL_VERSION = "0.1.0"


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: int | None
    env_fingerprint: str | None
    tool_version: str = TOOL_VERSION
    wall_clock: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def write(self, out_dir: str, name: str = "manifest.json") -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1, default=str)
        return path


def write_matrix_csv(path: str, values: np.ndarray, run_ids: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(run_ids))
        for rid, row in zip(run_ids, values):
            w.writerow([rid] + [f"{v:.10g}" for v in row])


def write_curve_csv(path: str, rows: Sequence[dict], fields: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields))
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fields})


def _color(v: float, lo: float, hi: float) -> str:
    """Diverging blue-white-red scale centered between lo and hi."""
    if hi <= lo:
        t = 0.5
    else:
        t = (v - lo) / (hi - lo)
    t = min(1.0, max(0.0, t))
    if t < 0.5:
        u = t * 2
        r, g, b = int(60 + 195 * u), int(90 + 165 * u), 255
    else:
        u = (t - 0.5) * 2
        r, g, b = 255, int(255 - 165 * u), int(255 - 195 * u)
    return f"rgb({r},{g},{b})"


def write_heatmap_svg(
    path: str,
    values: np.ndarray,
    run_ids: Sequence[str],
    title: str = "",
    cell: int = 46,
) -> None:
    k = values.shape[0]
    margin = 60
    size = margin + k * cell + 10
    lo, hi = float(values.min()), float(values.max())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
        f'font-family="monospace" font-size="11">'
    ]
    if title:
        parts.append(f'<text x="{margin}" y="16" font-size="13">{title}</text>')
    for i, rid in enumerate(run_ids):
        parts.append(
            f'<text x="{margin + i * cell + cell / 2}" y="{margin - 8}" text-anchor="middle">{rid}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{margin + i * cell + cell / 2 + 4}" text-anchor="end">{rid}</text>'
        )
    for i in range(k):
        for j in range(k):
            x, y = margin + j * cell, margin + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_color(values[i, j], lo, hi)}" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle">'
                f"{values[i, j]:.2f}</text>"
            )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def write_curve_svg(
    path: str,
    xs: Sequence[float],
    series: dict[str, Sequence[float]],
    title: str = "",
    x_label: str = "",
    optimum: float | None = None,
) -> None:
    width, height, margin = 460, 300, 50
    all_vals = [v for vs in series.values() for v in vs if v is not None]
    if optimum is not None:
        all_vals.append(optimum)
    lo, hi = min(all_vals), max(all_vals)
    if hi == lo:
        hi = lo + 1.0
    pad = 0.08 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def px(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def py(v):
        return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<text x="{margin}" y="16" font-size="13">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="#000"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="#000"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">{x_label}</text>',
        f'<text x="{margin - 38}" y="{py(lo + pad)}" font-size="10">{lo + pad:.2f}</text>',
        f'<text x="{margin - 38}" y="{py(hi - pad)}" font-size="10">{hi - pad:.2f}</text>',
    ]
    if optimum is not None:
        parts.append(
            f'<line x1="{margin}" y1="{py(optimum)}" x2="{width - margin}" y2="{py(optimum)}" '
            f'stroke="#ff7f0e" stroke-dasharray="6,4"/>'
        )
    for ci, (name, vs) in enumerate(series.items()):
        pts = " ".join(
            f"{px(x):.1f},{py(v):.1f}" for x, v in zip(xs, vs) if v is not None
        )
        color = colors[ci % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, v in zip(xs, vs):
            if v is not None:
                parts.append(f'<circle cx="{px(x):.1f}" cy="{py(v):.1f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{width - margin + 4}" y="{20 + 14 * ci}" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def write_histogram_svg(
    path: str,
    groups: dict[str, Sequence[float]],
    n_bins: int = 20,
    title: str = "",
) -> None:
    """Overlaid per-group histograms (used for tie-break values by class)."""
    width, height, margin = 460, 300, 50
    all_vals = [v for vs in groups.values() for v in vs]
    if not all_vals:
        all_vals = [0.0]
    lo, hi = min(all_vals), max(all_vals)
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    counts = {name: np.histogram(vs, bins=edges)[0] for name, vs in groups.items()}
    peak = max(1, max(c.max() for c in counts.values()))
    bar_w = (width - 2 * margin) / n_bins
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="11">',
        f'<text x="{margin}" y="16" font-size="13">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="#000"/>',
    ]
    for ci, (name, c) in enumerate(counts.items()):
        color = colors[ci % len(colors)]
        for b in range(n_bins):
            h = (height - 2 * margin) * c[b] / peak
            x = margin + b * bar_w
            y = height - margin - h
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
                f'fill="{color}" fill-opacity="0.45"/>'
            )
        parts.append(
            f'<text x="{width - margin + 4}" y="{20 + 14 * ci}" fill="{color}">{name}</text>'
        )
    parts.append(
        f'<text x="{margin}" y="{height - 30}" font-size="10">{lo:.3g}</text>'
        f'<text x="{width - margin}" y="{height - 30}" text-anchor="end" font-size="10">{hi:.3g}</text>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
