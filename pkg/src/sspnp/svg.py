"""Minimal static SVG 1.1 line plots, no plotting dependencies.

Plots are conveniences for eyeballing curves; the CSV files are the data
contract.  Output is deterministic for identical input.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot", "write_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN_LEFT = 72
_MARGIN_RIGHT = 24
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 56


def _nice_ticks(lo: float, hi: float, target: int = 6):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(abs(raw)))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if raw <= step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * abs(step):
        ticks.append(0.0 if abs(t) < 1e-12 * abs(step) else t)
        t += step
    return ticks or [lo]


def _fmt(value: float) -> str:
    if value == int(value) and abs(value) < 1e7:
        return str(int(value))
    return f"{value:.4g}"


def line_plot(
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 640,
    height: int = 480,
) -> str:
    """Render ``series = [(x, y, label), ...]`` as an SVG document string."""
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series if len(s[0])])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series if len(s[1])])
    finite = np.isfinite(xs) & np.isfinite(ys)
    x_lo, x_hi = float(xs[finite].min()), float(xs[finite].max())
    y_lo, y_hi = float(ys[finite].min()), float(ys[finite].max())
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    plot_w = width - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = height - _MARGIN_TOP - _MARGIN_BOTTOM

    def sx(x):
        return _MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        return _MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{_MARGIN_LEFT}" y="{_MARGIN_TOP}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#333" stroke-width="1"/>',
    ]

    for t in _nice_ticks(x_lo, x_hi):
        px = sx(t)
        parts.append(
            f'<line x1="{px:.2f}" y1="{_MARGIN_TOP + plot_h}" x2="{px:.2f}" '
            f'y2="{_MARGIN_TOP + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{_MARGIN_TOP + plot_h + 20}" '
            f'text-anchor="middle" font-size="12" font-family="sans-serif">{_fmt(t)}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        py = sy(t)
        parts.append(
            f'<line x1="{_MARGIN_LEFT - 5}" y1="{py:.2f}" x2="{_MARGIN_LEFT}" '
            f'y2="{py:.2f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_LEFT - 8}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-size="12" font-family="sans-serif">{_fmt(t)}</text>'
        )

    for k, entry in enumerate(series):
        x_arr, y_arr = np.asarray(entry[0], dtype=float), np.asarray(entry[1], dtype=float)
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}"
            for x, y in zip(x_arr, y_arr)
            if math.isfinite(x) and math.isfinite(y)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        label = entry[2] if len(entry) > 2 else ""
        if label:
            lx = _MARGIN_LEFT + plot_w - 8
            ly = _MARGIN_TOP + 16 + 16 * k
            parts.append(
                f'<line x1="{lx - 40}" y1="{ly - 4}" x2="{lx - 16}" y2="{ly - 4}" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{lx - 44}" y="{ly}" text-anchor="end" font-size="12" '
                f'font-family="sans-serif">{label}</text>'
            )

    if title:
        parts.append(
            f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15" '
            f'font-family="sans-serif">{title}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{_MARGIN_LEFT + plot_w / 2:.0f}" y="{height - 14}" '
            f'text-anchor="middle" font-size="13" font-family="sans-serif">{xlabel}</text>'
        )
    if ylabel:
        cy = _MARGIN_TOP + plot_h / 2
        parts.append(
            f'<text x="18" y="{cy:.0f}" text-anchor="middle" font-size="13" '
            f'font-family="sans-serif" transform="rotate(-90 18 {cy:.0f})">{ylabel}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg(path, series, **kwargs):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(line_plot(series, **kwargs))
