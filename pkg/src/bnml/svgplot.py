"""Minimal self-contained SVG line charts (no plotting dependency).

One polyline per series, linear axes with tick labels, optional legend.  The
output embeds no external assets and parses as standalone XML.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_chart"]

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_MARGINS = (70, 20, 45, 50)  # left, right, bottom, top


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / count))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= count:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * span:
        ticks.append(v)
        v += step
    return ticks


def line_chart(series, *, title: str = "", xlabel: str = "", ylabel: str = "",
               width: int = 880, height: int = 560) -> str:
    """Render ``series`` = [(label, xs, ys), ...] as an SVG document string.

    Non-finite points are dropped per series.  A legend is drawn only when
    there are at most 10 labelled series (margin traces can have dozens).
    """
    ml, mr, mb, mt = _MARGINS
    plot_w, plot_h = width - ml - mr, height - mt - mb
    cleaned = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if keep.any():
            cleaned.append((label, xs[keep], ys[keep]))
    if not cleaned:
        cleaned = [("empty", np.array([0.0]), np.array([0.0]))]

    x_lo = min(float(xs.min()) for _, xs, _ in cleaned)
    x_hi = max(float(xs.max()) for _, xs, _ in cleaned)
    y_lo = min(float(ys.min()) for _, _, ys in cleaned)
    y_hi = max(float(ys.max()) for _, _, ys in cleaned)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return mt + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="{mt - 6}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        parts.append(f'<line x1="{px:.2f}" y1="{mt + plot_h}" x2="{px:.2f}" '
                     f'y2="{mt + plot_h + 5}" stroke="#333"/>')
        parts.append(f'<text x="{px:.2f}" y="{mt + plot_h + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{tx:.4g}</text>')
    for ty in _ticks(y_lo, y_hi):
        py = sy(ty)
        parts.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#333"/>')
        parts.append(f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{ty:.4g}</text>')
    if xlabel:
        parts.append(f'<text x="{ml + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    if ylabel:
        cx, cy = 16, mt + plot_h / 2
        parts.append(f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12" '
                     f'transform="rotate(-90 {cx} {cy:.1f})">{escape(ylabel)}</text>')

    for k, (label, xs, ys) in enumerate(cleaned):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>')

    labelled = [c[0] for c in cleaned if c[0]]
    if 0 < len(labelled) <= 10:
        for k, (label, _, _) in enumerate(cleaned):
            color = _PALETTE[k % len(_PALETTE)]
            ly = mt + 14 + 16 * k
            parts.append(f'<line x1="{ml + 8}" y1="{ly - 4}" x2="{ml + 30}" y2="{ly - 4}" '
                         f'stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{ml + 36}" y="{ly}" font-family="sans-serif" '
                         f'font-size="11">{escape(str(label))}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
