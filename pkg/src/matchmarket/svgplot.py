"""Minimal native SVG line plots (polylines + axes), dependency-free.

Plots are verification aids; CSV outputs are the source of truth.
"""

from __future__ import annotations

import math
from pathlib import Path

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 55  # margins


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def plot_lines(path, series, title: str = "", xlabel: str = "",
               ylabel: str = "", log_x: bool = False) -> None:
    """Write a line plot to ``path``.

    ``series`` is a list of (label, xs, ys) triples. With ``log_x`` the x
    axis is base-10 logarithmic (all x must be positive).
    """
    series = [(label, list(map(float, xs)), list(map(float, ys)))
              for label, xs, ys in series if len(xs) > 0]
    if not series:
        raise ValueError("nothing to plot")

    def tx(x: float) -> float:
        return math.log10(x) if log_x else x

    all_x = [tx(x) for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = (y_hi - y_lo) * 0.08 or max(abs(y_hi), 1.0) * 0.08
    y_lo, y_hi = y_lo - pad, y_hi + pad

    px_w, px_h = _W - _ML - _MR, _H - _MT - _MB

    def X(x: float) -> float:
        return _ML + (tx(x) - x_lo) / (x_hi - x_lo) * px_w

    def Y(y: float) -> float:
        return _MT + (y_hi - y) / (y_hi - y_lo) * px_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{px_w}" height="{px_h}" '
        'fill="none" stroke="#333"/>',
    ]
    if title:
        parts.append(f'<text x="{_W / 2}" y="24" text-anchor="middle" '
                     f'font-size="15">{title}</text>')
    for t in _ticks(x_lo, x_hi):
        xpix = _ML + (t - x_lo) / (x_hi - x_lo) * px_w
        label = _fmt(10.0 ** t) if log_x else _fmt(t)
        parts.append(f'<line x1="{xpix:.1f}" y1="{_MT + px_h}" x2="{xpix:.1f}" '
                     f'y2="{_MT + px_h + 5}" stroke="#333"/>')
        parts.append(f'<text x="{xpix:.1f}" y="{_MT + px_h + 20}" '
                     f'text-anchor="middle">{label}</text>')
    for t in _ticks(y_lo, y_hi):
        ypix = Y(t)
        parts.append(f'<line x1="{_ML - 5}" y1="{ypix:.1f}" x2="{_ML}" '
                     f'y2="{ypix:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_ML - 9}" y="{ypix + 4:.1f}" '
                     f'text-anchor="end">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{_ML + px_w / 2}" y="{_H - 12}" '
                     f'text-anchor="middle">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="18" y="{_MT + px_h / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 18 {_MT + px_h / 2})">{ylabel}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{X(x):.2f},{Y(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.8"/>')
        if label:
            ly = _MT + 16 + 16 * k
            parts.append(f'<line x1="{_ML + px_w - 120}" y1="{ly - 4}" '
                         f'x2="{_ML + px_w - 100}" y2="{ly - 4}" '
                         f'stroke="{color}" stroke-width="1.8"/>')
            parts.append(f'<text x="{_ML + px_w - 94}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
