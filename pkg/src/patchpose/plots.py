"""Hand-written SVG emission: success curves and success heatmaps.

No plotting library: the files are assembled as strings so identical
inputs give byte-identical output. Curves get one polyline per series
with an optional low-opacity band marking that series' training support;
heatmaps map success 0..1 onto white..red.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f5fa8", "#c0392b", "#1e8449", "#b7760f", "#6c3483", "#117a8b",
           "#884ea0", "#283747")

_MARGIN_L = 62.0
_MARGIN_R = 16.0
_MARGIN_T = 40.0
_MARGIN_B = 46.0


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


@dataclass
class LineSeries:
    label: str
    xs: np.ndarray
    ys: np.ndarray
    shade: tuple[float, float] | None = None


def _axes(parts: list, x0: float, y0: float, w: float, h: float,
          xticks, yticks, to_px, title: str, xlabel: str, ylabel: str) -> None:
    parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" '
                 f'height="{_fmt(h)}" fill="none" stroke="#444" stroke-width="1"/>')
    for tv in xticks:
        px, _ = to_px(tv, 0.0)
        parts.append(f'<line x1="{_fmt(px)}" y1="{_fmt(y0 + h)}" x2="{_fmt(px)}" '
                     f'y2="{_fmt(y0 + h + 5)}" stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + h + 18)}" font-size="11" '
                     f'text-anchor="middle" fill="#222">{escape(_tick_label(tv))}</text>')
    for tv in yticks:
        _, py = to_px(xticks[0], tv)
        parts.append(f'<line x1="{_fmt(x0 - 5)}" y1="{_fmt(py)}" x2="{_fmt(x0)}" '
                     f'y2="{_fmt(py)}" stroke="#444" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(x0 - 8)}" y="{_fmt(py + 4)}" font-size="11" '
                     f'text-anchor="end" fill="#222">{escape(_tick_label(tv))}</text>')
    cx = x0 + w / 2
    parts.append(f'<text x="{_fmt(cx)}" y="22" font-size="14" text-anchor="middle" '
                 f'fill="#111">{escape(title)}</text>')
    parts.append(f'<text x="{_fmt(cx)}" y="{_fmt(y0 + h + 36)}" font-size="12" '
                 f'text-anchor="middle" fill="#222">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{_fmt(y0 + h / 2)}" font-size="12" text-anchor="middle" '
                 f'fill="#222" transform="rotate(-90 16 {_fmt(y0 + h / 2)})">'
                 f'{escape(ylabel)}</text>')


def line_plot_svg(series: list[LineSeries], *, title: str, xlabel: str,
                  ylabel: str = "success rate", width: int = 640,
                  height: int = 420) -> str:
    """Success-vs-parameter curves, y fixed to [0, 1]."""
    if not series:
        raise ValueError("no series to plot")
    xmin = min(float(np.min(s.xs)) for s in series)
    xmax = max(float(np.max(s.xs)) for s in series)
    for s in series:
        if s.shade is not None:
            xmin = min(xmin, s.shade[0])
            xmax = max(xmax, s.shade[1])
    if xmax <= xmin:
        xmax = xmin + 1.0

    x0, y0 = _MARGIN_L, _MARGIN_T
    w = width - _MARGIN_L - _MARGIN_R
    h = height - _MARGIN_T - _MARGIN_B

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (x0 + (x - xmin) / (xmax - xmin) * w,
                y0 + (1.0 - y) * h)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for idx, s in enumerate(series):
        if s.shade is None:
            continue
        color = PALETTE[idx % len(PALETTE)]
        lo, _ = to_px(s.shade[0], 0.0)
        hi, _ = to_px(s.shade[1], 0.0)
        if hi > lo:
            parts.append(f'<rect x="{_fmt(lo)}" y="{_fmt(y0)}" width="{_fmt(hi - lo)}" '
                         f'height="{_fmt(h)}" fill="{color}" fill-opacity="0.10"/>')
    xticks = [xmin + t * (xmax - xmin) / 4 for t in range(5)]
    yticks = [0.0, 0.25, 0.5, 0.75, 1.0]
    _axes(parts, x0, y0, w, h, xticks, yticks, to_px, title, xlabel, ylabel)

    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{_fmt(to_px(float(x), float(y))[0])},{_fmt(to_px(float(x), float(y))[1])}"
                       for x, y in zip(s.xs, s.ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.8"/>')
        ly = y0 + 14 + 16 * idx
        lx = x0 + w - 150
        parts.append(f'<line x1="{_fmt(lx)}" y1="{_fmt(ly - 4)}" x2="{_fmt(lx + 22)}" '
                     f'y2="{_fmt(ly - 4)}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_fmt(lx + 28)}" y="{_fmt(ly)}" font-size="11" '
                     f'fill="#222">{escape(s.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def success_color(v: float) -> str:
    """0 -> white, 1 -> red, linear in between."""
    v = min(max(float(v), 0.0), 1.0)
    g = int(round(255 * (1.0 - v)))
    return f"rgb(255,{g},{g})"


def heatmap_svg(rates: np.ndarray, xs: np.ndarray, ys: np.ndarray, *, title: str,
                xlabel: str, ylabel: str, width: int = 560, height: int = 560) -> str:
    """Matrix heatmap; rates[i, j] is the cell at row ys[i], column xs[j]."""
    rates = np.asarray(rates, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if rates.shape != (ys.shape[0], xs.shape[0]):
        raise ValueError(f"rates shape {rates.shape} does not match axes "
                         f"({ys.shape[0]}, {xs.shape[0]})")
    nrows, ncols = rates.shape
    x0, y0 = _MARGIN_L, _MARGIN_T
    w = width - _MARGIN_L - _MARGIN_R
    h = height - _MARGIN_T - _MARGIN_B
    cw = w / ncols
    ch = h / nrows

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(nrows):
        for j in range(ncols):
            parts.append(f'<rect x="{_fmt(x0 + j * cw)}" y="{_fmt(y0 + i * ch)}" '
                         f'width="{_fmt(cw)}" height="{_fmt(ch)}" '
                         f'fill="{success_color(rates[i, j])}"/>')
    parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(w)}" height="{_fmt(h)}" '
                 f'fill="none" stroke="#444" stroke-width="1"/>')
    step = max(1, ncols // 6)
    for j in range(0, ncols, step):
        px = x0 + (j + 0.5) * cw
        parts.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + h + 16)}" font-size="10" '
                     f'text-anchor="middle" fill="#222">{escape(_tick_label(float(xs[j])))}</text>')
    step = max(1, nrows // 6)
    for i in range(0, nrows, step):
        py = y0 + (i + 0.5) * ch
        parts.append(f'<text x="{_fmt(x0 - 6)}" y="{_fmt(py + 3)}" font-size="10" '
                     f'text-anchor="end" fill="#222">{escape(_tick_label(float(ys[i])))}</text>')
    cx = x0 + w / 2
    parts.append(f'<text x="{_fmt(cx)}" y="22" font-size="14" text-anchor="middle" '
                 f'fill="#111">{escape(title)}</text>')
    parts.append(f'<text x="{_fmt(cx)}" y="{_fmt(y0 + h + 34)}" font-size="12" '
                 f'text-anchor="middle" fill="#222">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{_fmt(y0 + h / 2)}" font-size="12" text-anchor="middle" '
                 f'fill="#222" transform="rotate(-90 16 {_fmt(y0 + h / 2)})">'
                 f'{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
