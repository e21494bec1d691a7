"""Dependency-free SVG histogram for experiment reports."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 360, 40


def histogram_svg(values: Sequence[float], marker: float | None = None, title: str = "", bins: int = 30) -> str:
    vals = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    if vals.size:
        lo, hi = float(vals.min()), float(vals.max())
        if marker is not None:
            lo, hi = min(lo, marker), max(hi, marker)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
        top = counts.max()
        plot_w, plot_h = WIDTH - 2 * PAD, HEIGHT - 2 * PAD

        def sx(x):
            return PAD + (x - lo) / (hi - lo) * plot_w

        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            h = plot_h * c / top
            parts.append(
                f'<rect x="{sx(a):.2f}" y="{HEIGHT - PAD - h:.2f}" width="{max(sx(b) - sx(a) - 1, 0.5):.2f}" '
                f'height="{h:.2f}" fill="#4477aa"/>'
            )
        parts.append(f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>')
        parts.append(f'<text x="{PAD}" y="{HEIGHT - 10}" font-size="11">{lo:.4g}</text>')
        parts.append(f'<text x="{WIDTH - PAD}" y="{HEIGHT - 10}" font-size="11" text-anchor="end">{hi:.4g}</text>')
        if marker is not None:
            x = sx(marker)
            parts.append(f'<line x1="{x:.2f}" y1="{PAD}" x2="{x:.2f}" y2="{HEIGHT - PAD}" stroke="#cc3311" stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
