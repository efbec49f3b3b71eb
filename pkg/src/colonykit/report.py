"""Hand-rolled SVG rendering for growth, lineage and rate figures.

Output is plain SVG 1.1 text with no external assets, no timestamps and
no random ids; rendering the same inputs twice yields identical bytes.
Coordinates are written with exactly two decimals.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .analysis import GrowthFit, IGRSeries
from .errors import EmptyPlot, InvalidInput
from .tracking import FATE_DIVIDED, FATE_LOST, TrackletGraph
from .units import QuantitySeries

__all__ = [
    "render_growth",
    "render_lineage",
    "render_igr",
    "render_rate_distribution",
]

_WIDTH = 640
_HEIGHT = 420
_ML, _MR, _MT, _MB = 72, 24, 44, 56

_AXIS = "#444444"
_GRID = "#dddddd"
_DATA = "#2b6cb0"
_FIT = "#c05621"
_TEXT = "#222222"

_SERIES_COLORS = (
    "#2b6cb0", "#c05621", "#2f855a", "#805ad5", "#b83280",
    "#008080", "#975a16", "#4a5568", "#9b2c2c", "#276749",
)
_PHASE_FILLS = ("#e8f1e8", "#f6e8e8", "#e8ebf6", "#f6f0e0")


def _n(x: float) -> str:
    return format(float(x), ".2f")


class _Canvas:
    def __init__(self, width: int = _WIDTH, height: int = _HEIGHT) -> None:
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" '
            f'fill="#ffffff"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke=_AXIS, width=1.0, dash=None) -> None:
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
            f'stroke="{stroke}" stroke-width="{_n(width)}"{dash_attr}/>'
        )

    def rect(self, x, y, w, h, fill, stroke="none") -> None:
        self.parts.append(
            f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def circle(self, cx, cy, r, fill=_DATA, stroke="none") -> None:
        self.parts.append(
            f'<circle cx="{_n(cx)}" cy="{_n(cy)}" r="{_n(r)}" fill="{fill}" '
            f'stroke="{stroke}"/>'
        )

    def polyline(self, points, stroke, width=1.5) -> None:
        text = " ".join(f"{_n(x)},{_n(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{text}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_n(width)}"/>'
        )

    def text(self, x, y, s, anchor="start", size=12, fill=_TEXT, rotate=None) -> None:
        transform = (
            f' transform="rotate({_n(rotate)} {_n(x)} {_n(y)})"' if rotate else ""
        )
        self.parts.append(
            f'<text x="{_n(x)}" y="{_n(y)}" font-family="sans-serif" '
            f'font-size="{size}" fill="{fill}" '
            f'text-anchor="{anchor}"{transform}>{escape(s)}</text>'
        )

    def cross(self, x, y, r=3.0, stroke=_DATA) -> None:
        self.line(x - r, y, x + r, y, stroke=stroke, width=1.4)
        self.line(x, y - r, x, y + r, stroke=stroke, width=1.4)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _span(lo: float, hi: float) -> tuple[float, float]:
    if hi > lo:
        return lo, hi
    pad = 0.5 if lo == 0 else abs(lo) * 0.5
    return lo - pad, hi + pad


def _scale(lo: float, hi: float, a: float, b: float):
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _tick_label(v: float) -> str:
    return format(v, ".4g")


def _frame(canvas: _Canvas, xlo, xhi, ylo, yhi, xlabel, ylabel, log_y=False):
    """Axes, grid and tick labels; returns the two scale functions."""
    x0, x1 = _ML, canvas.width - _MR
    y0, y1 = canvas.height - _MB, _MT
    sx = _scale(xlo, xhi, x0, x1)
    sy = _scale(ylo, yhi, y0, y1)
    for v in _ticks(xlo, xhi):
        canvas.line(sx(v), y0, sx(v), y1, stroke=_GRID, width=0.6)
        canvas.text(sx(v), y0 + 18, _tick_label(v), anchor="middle", size=11)
    for v in _ticks(ylo, yhi):
        canvas.line(x0, sy(v), x1, sy(v), stroke=_GRID, width=0.6)
        label = _tick_label(10.0**v) if log_y else _tick_label(v)
        canvas.text(x0 - 6, sy(v) + 4, label, anchor="end", size=11)
    canvas.line(x0, y0, x1, y0, width=1.2)
    canvas.line(x0, y0, x0, y1, width=1.2)
    canvas.text((x0 + x1) / 2, canvas.height - 14, xlabel, anchor="middle")
    canvas.text(
        18, (y0 + y1) / 2, ylabel, anchor="middle", rotate=-90.0
    )
    return sx, sy


def render_growth(series: QuantitySeries, fit: GrowthFit) -> str:
    """Log-scale population curve with its fitted exponential.

    Non-positive values cannot appear on a log axis; the count of
    dropped points is stated in the subtitle when non-zero.
    """
    mask = series.values > 0
    if not np.any(mask):
        raise EmptyPlot("growth plot needs at least one positive value")
    t = series.times_h[mask]
    logv = np.log10(series.values[mask])
    xlo, xhi = _span(float(series.times_h.min()), float(series.times_h.max()))
    ylo, yhi = _span(float(logv.min()), float(logv.max()))
    unit = series.value_unit or "count"
    canvas = _Canvas()
    sx, sy = _frame(
        canvas, xlo, xhi, ylo, yhi,
        "time (h)", f"{series.name or 'value'} ({unit}), log scale",
        log_y=True,
    )
    ln10 = math.log(10.0)
    fit_lo = (fit.log_intercept + fit.mu_per_h * xlo) / ln10
    fit_hi = (fit.log_intercept + fit.mu_per_h * xhi) / ln10
    canvas.line(
        sx(xlo), sy(fit_lo), sx(xhi), sy(fit_hi),
        stroke=_FIT, width=1.6, dash="6,4",
    )
    for ti, vi in zip(t, logv):
        canvas.cross(sx(ti), sy(vi))
    title = (
        f"{fit.measure or series.name or 'growth'}: "
        f"mu = {format(fit.mu_per_h, '.4g')} 1/h, "
        f"R2 = {format(fit.r_squared, '.4g')}, n = {fit.n_points}"
    )
    canvas.text(_ML, 20, title, size=13)
    if fit.n_dropped:
        canvas.text(
            _ML, 36,
            f"{fit.n_dropped} non-positive point(s) not shown",
            size=11, fill="#666666",
        )
    return canvas.render()


def _lineage_rows(graph: TrackletGraph) -> dict[int, float]:
    rows: dict[int, float] = {}
    counter = [0]

    def place(label: int) -> None:
        kids = graph.children(label)
        if not kids:
            rows[label] = float(counter[0])
            counter[0] += 1
            return
        for kid in kids:
            place(kid)
        rows[label] = sum(rows[k] for k in kids) / len(kids)

    for root in sorted(graph.roots()):
        place(root)
    return rows


def _blend(t: float) -> str:
    """Two-stop blue-to-red color scale for lineage coloring."""
    t = min(1.0, max(0.0, t))
    lo = (43, 108, 176)
    hi = (192, 86, 33)
    rgb = tuple(round(a + (b - a) * t) for a, b in zip(lo, hi))
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def render_lineage(
    graph: TrackletGraph,
    frame_interval_h: float = 1.0,
    color_values: dict[int, float] | None = None,
    color_label: str = "",
) -> str:
    """Lineage forest: one horizontal bar per tracklet, forks at divisions.

    ``color_values`` (label to scalar) colors the bars on a blue-to-red
    scale with a small legend; bars without a value stay gray.
    """
    if len(graph) == 0:
        raise EmptyPlot("lineage plot needs at least one tracklet")
    if not frame_interval_h > 0:
        raise InvalidInput("frame_interval_h must be positive")
    rows = _lineage_rows(graph)
    tracklets = graph.tracklets()
    xlo = min(tr.birth_frame for tr in tracklets) * frame_interval_h
    xhi = max(tr.end_frame for tr in tracklets) * frame_interval_h
    xlo, xhi = _span(xlo, xhi)
    n_rows = max(1, sum(1 for tr in tracklets if not graph.children(tr.label)))
    canvas = _Canvas()
    x0, x1 = _ML, canvas.width - _MR
    y0, y1 = canvas.height - _MB, _MT
    sx = _scale(xlo, xhi, x0, x1)
    sy = _scale(-0.5, n_rows - 0.5, y0, y1)
    for v in _ticks(xlo, xhi):
        canvas.line(sx(v), y0, sx(v), y1, stroke=_GRID, width=0.6)
        canvas.text(sx(v), y0 + 18, _tick_label(v), anchor="middle", size=11)
    canvas.line(x0, y0, x1, y0, width=1.2)
    canvas.text((x0 + x1) / 2, canvas.height - 14, "time (h)", anchor="middle")

    vmin = vmax = None
    if color_values:
        finite = [v for v in color_values.values() if math.isfinite(v)]
        if finite:
            vmin, vmax = min(finite), max(finite)

    def bar_color(label: int) -> str:
        if color_values is None or label not in color_values or vmin is None:
            return "#888888" if color_values else _DATA
        if vmax == vmin:
            return _blend(0.5)
        return _blend((color_values[label] - vmin) / (vmax - vmin))

    for tr in tracklets:
        y = sy(rows[tr.label])
        xa = sx(tr.birth_frame * frame_interval_h)
        xb = sx(tr.end_frame * frame_interval_h)
        canvas.line(xa, y, xb, y, stroke=bar_color(tr.label), width=2.4)
        if tr.fate == FATE_DIVIDED:
            kids = graph.children(tr.label)
            xk = sx((tr.end_frame + 1) * frame_interval_h)
            for kid in kids:
                yk = sy(rows[kid])
                canvas.line(xb, y, xk, yk, stroke="#999999", width=1.0)
        elif tr.fate == FATE_LOST:
            canvas.cross(xb + 5, y, r=3.0, stroke="#aa3333")
    canvas.text(_ML, 20, f"lineage: {len(graph)} tracklets", size=13)
    if vmin is not None:
        steps = 24
        bar_w = 120.0 / steps
        bx = canvas.width - _MR - 130
        for i in range(steps):
            canvas.rect(bx + i * bar_w, 26, bar_w + 0.1, 8, fill=_blend(i / (steps - 1)))
        canvas.text(bx, 20, _tick_label(vmin), size=10, anchor="start")
        canvas.text(bx + 120, 20, _tick_label(vmax), size=10, anchor="end")
        if color_label:
            canvas.text(bx - 8, 33, color_label, size=10, anchor="end")
    return canvas.render()


def render_igr(
    series_list: list[IGRSeries],
    phases: tuple[tuple[float, float, str], ...] = (),
) -> str:
    """Per-tracklet IGR traces, optionally over shaded phase bands."""
    series_list = [s for s in series_list if s.times_h.size]
    if not series_list:
        raise EmptyPlot("IGR plot needs at least one non-empty series")
    xlo = min(float(s.times_h.min()) for s in series_list)
    xhi = max(float(s.times_h.max()) for s in series_list)
    for t0, t1, _ in phases:
        xlo = min(xlo, float(t0))
        xhi = max(xhi, float(t1))
    ylo = min(float(s.values_um2_per_h.min()) for s in series_list)
    yhi = max(float(s.values_um2_per_h.max()) for s in series_list)
    xlo, xhi = _span(xlo, xhi)
    ylo, yhi = _span(ylo, yhi)
    canvas = _Canvas()
    sx, sy = _frame(canvas, xlo, xhi, ylo, yhi, "time (h)", "IGR (um2/h)")
    fill_of: dict[str, str] = {}
    for t0, t1, name in phases:
        if name not in fill_of:
            fill_of[name] = _PHASE_FILLS[len(fill_of) % len(_PHASE_FILLS)]
        canvas.rect(
            sx(t0), _MT, sx(t1) - sx(t0), canvas.height - _MB - _MT,
            fill=fill_of[name],
        )
    for idx, series in enumerate(sorted(series_list, key=lambda s: s.label)):
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
        points = list(zip(map(sx, series.times_h), map(sy, series.values_um2_per_h)))
        if len(points) == 1:
            canvas.circle(points[0][0], points[0][1], 2.5, fill=color)
        else:
            canvas.polyline(points, stroke=color, width=1.4)
    canvas.text(
        _ML, 20, f"single-cell growth rates: {len(series_list)} tracklets",
        size=13,
    )
    legend_x = _ML
    for name, fill in fill_of.items():
        canvas.rect(legend_x, 28, 12, 10, fill=fill, stroke="#999999")
        canvas.text(legend_x + 16, 37, name, size=11)
        legend_x += 16 + 7 * len(name) + 20
    return canvas.render()


def render_rate_distribution(entries: list[tuple[str, float]]) -> str:
    """Per-replicate rate markers with a mean line and +/- std band."""
    if not entries:
        raise EmptyPlot("rate plot needs at least one replicate")
    values = np.array([v for _, v in entries], dtype=float)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    ylo, yhi = _span(
        min(float(values.min()), mean - std),
        max(float(values.max()), mean + std),
    )
    canvas = _Canvas()
    xlo, xhi = 0.0, float(len(entries) + 1)
    x0, x1 = _ML, canvas.width - _MR
    y0, y1 = canvas.height - _MB, _MT
    sx = _scale(xlo, xhi, x0, x1)
    sy = _scale(ylo, yhi, y0, y1)
    for v in _ticks(ylo, yhi):
        canvas.line(x0, sy(v), x1, sy(v), stroke=_GRID, width=0.6)
        canvas.text(x0 - 6, sy(v) + 4, _tick_label(v), anchor="end", size=11)
    canvas.line(x0, y0, x1, y0, width=1.2)
    canvas.line(x0, y0, x0, y1, width=1.2)
    canvas.text(18, (y0 + y1) / 2, "mu (1/h)", anchor="middle", rotate=-90.0)
    canvas.line(x0, sy(mean), x1, sy(mean), stroke=_FIT, width=1.4)
    if std > 0:
        canvas.line(x0, sy(mean - std), x1, sy(mean - std), stroke=_FIT,
                    width=1.0, dash="4,4")
        canvas.line(x0, sy(mean + std), x1, sy(mean + std), stroke=_FIT,
                    width=1.0, dash="4,4")
    for k, (name, value) in enumerate(entries):
        x = sx(float(k + 1))
        canvas.circle(x, sy(value), 4.0, fill=_DATA)
        canvas.text(x, y0 + 18, name, anchor="middle", size=10, rotate=-30.0)
    canvas.text(
        _ML, 20,
        f"growth rates: mean = {format(mean, '.4g')} 1/h, "
        f"std = {format(std, '.4g')} 1/h, n = {len(entries)}",
        size=13,
    )
    return canvas.render()
