"""Minimal SVG writers for DOA polar plots and MAE-vs-sigma sweeps."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

_HEADER = '<?xml version="1.0" encoding="UTF-8"?>\n'


def polar_plot(values: Sequence[float], title: str = "DOA spectrum", size: int = 400) -> str:
    """Polar line plot of a 360-sector spectrum; 0 deg points up, angles grow counterclockwise."""
    v = np.asarray(values, dtype=float)
    c = size / 2
    r_max = size / 2 - 30
    pts = []
    for i, val in enumerate(v):
        a = math.radians(i + 0.5)
        r = r_max * float(val)
        pts.append(f"{c - r * math.sin(a):.2f},{c - r * math.cos(a):.2f}")
    rings = "".join(
        f'<circle cx="{c}" cy="{c}" r="{r_max * f:.2f}" fill="none" stroke="#ccc"/>' for f in (0.25, 0.5, 0.75, 1.0)
    )
    labels = "".join(
        f'<text x="{c - (r_max + 14) * math.sin(math.radians(a)):.1f}" '
        f'y="{c - (r_max + 14) * math.cos(math.radians(a)) + 4:.1f}" font-size="11" text-anchor="middle">{a}</text>'
        for a in (0, 90, 180, 270)
    )
    return (
        _HEADER
        + f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
        + f"<title>{escape(title)}</title>"
        + rings
        + labels
        + f'<polygon points="{" ".join(pts)}" fill="steelblue" fill-opacity="0.3" stroke="steelblue"/>'
        + "</svg>\n"
    )


def sweep_plot(
    series: Mapping[str, Sequence[tuple[float, float]]],
    xlabel: str = "sigma (deg)",
    ylabel: str = "MAE yaw (deg)",
    width: int = 480,
    height: int = 320,
) -> str:
    """Line chart with one polyline per series.

    Each polyline carries its data in ``data-x`` / ``data-y`` attributes
    (space separated, in input units) next to the pixel coordinates.
    """
    margin = 50
    all_pts = [p for pts in series.values() for p in pts]
    xs = [p[0] for p in all_pts] or [0.0, 1.0]
    ys = [p[1] for p in all_pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = 0.0, max(ys) * 1.1 if max(ys) > 0 else 1.0
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0

    def px(x, y):
        return (
            margin + (x - x0) / (x1 - x0) * (width - 2 * margin),
            height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin),
        )

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    parts = [
        _HEADER,
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{height / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {height / 2})">{escape(ylabel)}</text>',
    ]
    for k, (name, pts) in enumerate(sorted(series.items())):
        pts = sorted(pts)
        color = colors[k % len(colors)]
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in (px(x, y) for x, y in pts))
        parts.append(
            f'<polyline class="series" data-name="{escape(name)}" '
            f'data-x="{" ".join(repr(float(x)) for x, _ in pts)}" '
            f'data-y="{" ".join(repr(float(y)) for _, y in pts)}" '
            f'points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        lx, ly = width - margin - 120, margin + 16 * k
        parts.append(f'<text x="{lx}" y="{ly}" font-size="11" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>\n")
    return "".join(parts)
