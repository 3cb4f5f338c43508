"""Deterministic standalone SVG 1.1 charts.

Four chart kinds cover the report: line (elbow curve, OOB trace, partial
dependence), scatter (component scores by cluster), horizontal bars
(relative influence) and heatmap (two-variable partial dependence). The
text depends only on the input, so figures can be compared byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 640
HEIGHT = 420
MARGIN = dict(left=80, right=24, top=44, bottom=56)

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

# Viridis anchors; cells interpolate linearly in RGB between them.
COLORMAP = (
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
)


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""


@dataclass
class LinePlot:
    series: list[Series]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    markers: bool = True
    vline: float | None = None


@dataclass
class ScatterPlot:
    x: Sequence[float]
    y: Sequence[float]
    groups: Sequence[int]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    note: str = ""


@dataclass
class BarChart:
    labels: Sequence[str]
    values: Sequence[float]
    title: str = ""
    xlabel: str = ""


@dataclass
class Heatmap:
    values: Sequence[Sequence[float]]  # rows along y, columns along x
    x_ticks: Sequence[float] = field(default_factory=list)
    y_ticks: Sequence[float] = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""


def fmt(v: float) -> str:
    """Fixed two-decimal coordinate text with no negative zero."""
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def tick_label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e5 or a < 1e-3:
        return f"{v:.2e}"
    return f"{v:.4g}"


def color(t: float) -> str:
    """Map t in [0, 1] onto the colormap as #rrggbb."""
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(COLORMAP, COLORMAP[1:]):
        if t <= t1:
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = [round(a + (b - a) * w) for a, b in zip(c0, c1)]
            return "#" + "".join(f"{c:02x}" for c in rgb)
    return "#" + "".join(f"{c:02x}" for c in COLORMAP[-1][1])


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _finite(name, values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError(f"{name}: empty series")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite values")
    return a


class _Frame:
    """Maps data coordinates into the plotting area."""

    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi == xlo:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if yhi == ylo:
            pad = abs(ylo) * 0.05 or 0.5
            ylo, yhi = ylo - pad, yhi + pad
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        self.left = MARGIN["left"]
        self.right = WIDTH - MARGIN["right"]
        self.top = MARGIN["top"]
        self.bottom = HEIGHT - MARGIN["bottom"]

    def px(self, x):
        return self.left + (x - self.xlo) / (self.xhi - self.xlo) * (self.right - self.left)

    def py(self, y):
        return self.bottom - (y - self.ylo) / (self.yhi - self.ylo) * (self.bottom - self.top)


def _header(title: str) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
            f'font-size="15">{escape(title)}</text>'
        )
    return out


def _axes(fr: _Frame, xlabel: str, ylabel: str, xticks=True) -> list[str]:
    out = [
        f'<line class="axis" x1="{fmt(fr.left)}" y1="{fmt(fr.bottom)}" x2="{fmt(fr.right)}" '
        f'y2="{fmt(fr.bottom)}" stroke="#000000"/>',
        f'<line class="axis" x1="{fmt(fr.left)}" y1="{fmt(fr.top)}" x2="{fmt(fr.left)}" '
        f'y2="{fmt(fr.bottom)}" stroke="#000000"/>',
    ]
    if xticks:
        for t in nice_ticks(fr.xlo, fr.xhi):
            x = fr.px(t)
            out.append(f'<line x1="{fmt(x)}" y1="{fmt(fr.bottom)}" x2="{fmt(x)}" '
                       f'y2="{fmt(fr.bottom + 5)}" stroke="#000000"/>')
            out.append(f'<text x="{fmt(x)}" y="{fmt(fr.bottom + 18)}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="10">{tick_label(t)}</text>')
    for t in nice_ticks(fr.ylo, fr.yhi):
        y = fr.py(t)
        out.append(f'<line x1="{fmt(fr.left - 5)}" y1="{fmt(y)}" x2="{fmt(fr.left)}" '
                   f'y2="{fmt(y)}" stroke="#000000"/>')
        out.append(f'<text x="{fmt(fr.left - 8)}" y="{fmt(y + 3)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{tick_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{fmt((fr.left + fr.right) / 2)}" y="{HEIGHT - 14}" '
                   f'text-anchor="middle" font-family="sans-serif" font-size="12">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        cy = fmt((fr.top + fr.bottom) / 2)
        out.append(f'<text x="16" y="{cy}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 16 {cy})">{escape(ylabel)}</text>')
    return out


def _line(plot: LinePlot) -> list[str]:
    if not plot.series:
        raise ValueError("line plot: no series")
    xs = [_finite("x", s.x) for s in plot.series]
    ys = [_finite("y", s.y) for s in plot.series]
    for x, y in zip(xs, ys):
        if x.size != y.size:
            raise ValueError("line plot: x and y lengths differ")
    allx, ally = np.concatenate(xs), np.concatenate(ys)
    fr = _Frame(allx.min(), allx.max(), ally.min(), ally.max())
    out = _axes(fr, plot.xlabel, plot.ylabel)
    if plot.vline is not None and fr.xlo <= plot.vline <= fr.xhi:
        x = fmt(fr.px(plot.vline))
        out.append(f'<line class="marker-line" x1="{x}" y1="{fmt(fr.top)}" x2="{x}" '
                   f'y2="{fmt(fr.bottom)}" stroke="#999999" stroke-dasharray="4 3"/>')
    for i, (s, x, y) in enumerate(zip(plot.series, xs, ys)):
        c = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{fmt(fr.px(a))},{fmt(fr.py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        if plot.markers and x.size <= 60:
            for a, b in zip(x, y):
                out.append(f'<circle cx="{fmt(fr.px(a))}" cy="{fmt(fr.py(b))}" r="2.5" fill="{c}"/>')
        if s.label:
            out.append(f'<text x="{fmt(fr.right - 4)}" y="{fmt(fr.top + 14 + 14 * i)}" '
                       f'text-anchor="end" font-family="sans-serif" font-size="11" fill="{c}">'
                       f'{escape(s.label)}</text>')
    return out


def _scatter(plot: ScatterPlot) -> list[str]:
    x = _finite("x", plot.x)
    y = _finite("y", plot.y)
    g = np.asarray(plot.groups, dtype=int)
    if not (x.size == y.size == g.size):
        raise ValueError("scatter: x, y and groups lengths differ")
    fr = _Frame(x.min(), x.max(), y.min(), y.max())
    out = _axes(fr, plot.xlabel, plot.ylabel)
    for a, b, k in zip(x, y, g):
        out.append(f'<circle cx="{fmt(fr.px(a))}" cy="{fmt(fr.py(b))}" r="2" '
                   f'fill="{PALETTE[int(k) % len(PALETTE)]}" fill-opacity="0.7"/>')
    for i, k in enumerate(np.unique(g)):
        yy = fmt(fr.top + 12 + 14 * i)
        out.append(f'<circle cx="{fmt(fr.right - 60)}" cy="{yy}" r="4" '
                   f'fill="{PALETTE[int(k) % len(PALETTE)]}"/>')
        out.append(f'<text x="{fmt(fr.right - 50)}" y="{fmt(fr.top + 16 + 14 * i)}" '
                   f'font-family="sans-serif" font-size="11">cluster {int(k) + 1}</text>')
    if plot.note:
        out.append(f'<text x="{MARGIN["left"]}" y="38" font-family="sans-serif" font-size="11">'
                   f'{escape(plot.note)}</text>')
    return out


def _bars(plot: BarChart) -> list[str]:
    v = _finite("bar values", plot.values)
    labels = list(plot.labels)
    if len(labels) != v.size:
        raise ValueError("bar chart: labels and values lengths differ")
    left = 190
    fr = _Frame(min(0.0, v.min()), max(0.0, v.max()), 0.0, 1.0)
    fr.left = left
    out = _axes(fr, plot.xlabel, "", xticks=True)[:1]
    for t in nice_ticks(fr.xlo, fr.xhi):
        x = fr.px(t)
        out.append(f'<text x="{fmt(x)}" y="{fmt(fr.bottom + 18)}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{tick_label(t)}</text>')
    if plot.xlabel:
        out.append(f'<text x="{fmt((fr.left + fr.right) / 2)}" y="{HEIGHT - 14}" '
                   f'text-anchor="middle" font-family="sans-serif" font-size="12">'
                   f'{escape(plot.xlabel)}</text>')
    band = (fr.bottom - fr.top) / v.size
    for i, (name, val) in enumerate(zip(labels, v)):
        y0 = fr.top + i * band + band * 0.15
        x0, x1 = sorted((fr.px(0.0), fr.px(val)))
        out.append(f'<rect class="bar" x="{fmt(x0)}" y="{fmt(y0)}" width="{fmt(x1 - x0)}" '
                   f'height="{fmt(band * 0.7)}" fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{fmt(left - 6)}" y="{fmt(y0 + band * 0.35 + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{escape(str(name))}</text>')
        out.append(f'<text x="{fmt(x1 + 4)}" y="{fmt(y0 + band * 0.35 + 4)}" '
                   f'font-family="sans-serif" font-size="9">{val:.2f}</text>')
    return out


def _heatmap(plot: Heatmap) -> list[str]:
    V = np.asarray(plot.values, dtype=float)
    if V.ndim != 2 or V.size == 0:
        raise ValueError("heatmap: need a non-empty 2-D matrix")
    if not np.all(np.isfinite(V)):
        raise ValueError("heatmap: non-finite values")
    rows, cols = V.shape
    lo, hi = V.min(), V.max()
    span = hi - lo
    fr = _Frame(0.0, float(cols), 0.0, float(rows))
    fr.right -= 40
    cw = (fr.right - fr.left) / cols
    ch = (fr.bottom - fr.top) / rows
    out = []
    for i in range(rows):
        for j in range(cols):
            t = 0.5 if span == 0 else (V[i, j] - lo) / span
            # Row 0 sits at the bottom so y grows upward.
            y = fr.bottom - (i + 1) * ch
            out.append(f'<rect class="cell" x="{fmt(fr.left + j * cw)}" y="{fmt(y)}" '
                       f'width="{fmt(cw)}" height="{fmt(ch)}" fill="{color(t)}"/>')
    out.append(f'<line class="axis" x1="{fmt(fr.left)}" y1="{fmt(fr.bottom)}" '
               f'x2="{fmt(fr.right)}" y2="{fmt(fr.bottom)}" stroke="#000000"/>')
    out.append(f'<line class="axis" x1="{fmt(fr.left)}" y1="{fmt(fr.top)}" '
               f'x2="{fmt(fr.left)}" y2="{fmt(fr.bottom)}" stroke="#000000"/>')
    for ticks, n, horizontal in ((plot.x_ticks, cols, True), (plot.y_ticks, rows, False)):
        ticks = list(ticks)
        if not ticks:
            continue
        step = max(1, len(ticks) // 5)
        for k in range(0, len(ticks), step):
            if horizontal:
                x = fr.left + (k + 0.5) * cw
                out.append(f'<text x="{fmt(x)}" y="{fmt(fr.bottom + 16)}" text-anchor="middle" '
                           f'font-family="sans-serif" font-size="9">{tick_label(ticks[k])}</text>')
            else:
                y = fr.bottom - (k + 0.5) * ch
                out.append(f'<text x="{fmt(fr.left - 6)}" y="{fmt(y + 3)}" text-anchor="end" '
                           f'font-family="sans-serif" font-size="9">{tick_label(ticks[k])}</text>')
    band = (fr.bottom - fr.top) / 10
    for k in range(10):
        y = fr.bottom - (k + 1) * band
        out.append(f'<rect x="{fmt(fr.right + 12)}" y="{fmt(y)}" '
                   f'width="12" height="{fmt(band)}" fill="{color(k / 10)}"/>')
    out.append(f'<text x="{fmt(fr.right + 18)}" y="{fmt(fr.top - 6)}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="9">{tick_label(hi)}</text>')
    out.append(f'<text x="{fmt(fr.right + 18)}" y="{fmt(fr.bottom + 12)}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="9">{tick_label(lo)}</text>')
    for text, x, y, rot in ((plot.xlabel, (fr.left + fr.right) / 2, HEIGHT - 14, False),
                            (plot.ylabel, 16, (fr.top + fr.bottom) / 2, True)):
        if text:
            tr = f' transform="rotate(-90 {fmt(x)} {fmt(y)})"' if rot else ""
            out.append(f'<text x="{fmt(x)}" y="{fmt(y)}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="12"{tr}>{escape(text)}</text>')
    return out


def emit_svg(plot) -> str:
    """Render a LinePlot, ScatterPlot, BarChart or Heatmap to SVG text."""
    if isinstance(plot, LinePlot):
        body = _line(plot)
    elif isinstance(plot, ScatterPlot):
        body = _scatter(plot)
    elif isinstance(plot, BarChart):
        body = _bars(plot)
    elif isinstance(plot, Heatmap):
        body = _heatmap(plot)
    else:
        raise TypeError(f"unsupported plot spec: {type(plot).__name__}")
    return "\n".join(_header(plot.title) + body + ["</svg>"]) + "\n"
