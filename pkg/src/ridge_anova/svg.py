"""Small dependency-free SVG charts: line plots, stacked areas and heatmaps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape
from typing import Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 30, 50


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    err: Sequence[float] | None = None
    markers: bool = False
    dashed: bool = False


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1
        self.w = WIDTH - LEFT - RIGHT
        self.h = HEIGHT - TOP - BOTTOM

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y):
        return TOP + (1 - (y - self.y0) / (self.y1 - self.y0)) * self.h


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _axes(frame: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<rect x="{LEFT}" y="{TOP}" width="{frame.w}" height="{frame.h}" fill="none" stroke="#333"/>',
        f'<text x="{LEFT + frame.w / 2}" y="{TOP - 10}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{LEFT + frame.w / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{TOP + frame.h / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {TOP + frame.h / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(frame.x0, frame.x1):
        x = frame.px(t)
        out.append(f'<line x1="{x:.1f}" y1="{TOP + frame.h}" x2="{x:.1f}" y2="{TOP + frame.h + 4}" stroke="#333"/>')
        out.append(f'<text x="{x:.1f}" y="{TOP + frame.h + 17}" text-anchor="middle" font-size="10">{t:g}</text>')
    for t in _ticks(frame.y0, frame.y1):
        y = frame.py(t)
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.1f}" x2="{LEFT}" y2="{y:.1f}" stroke="#333"/>')
        out.append(f'<text x="{LEFT - 7}" y="{y + 3:.1f}" text-anchor="end" font-size="10">{t:.3g}</text>')
    return out


def _legend(labels: Sequence[str]) -> list[str]:
    out = []
    for k, label in enumerate(labels):
        y = TOP + 12 + 18 * k
        x = WIDTH - RIGHT + 12
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<rect x="{x}" y="{y - 8}" width="14" height="10" fill="{color}"/>')
        out.append(f'<text x="{x + 20}" y="{y + 1}" font-size="11">{escape(label)}</text>')
    return out


def _document(body: list[str]) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
        '<rect width="100%" height="100%" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n"
    )


def _finite(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[np.isfinite(arr)]


def line_plot(series: Sequence[Series], *, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    xs = np.concatenate([_finite(s.x) for s in series]) if series else np.array([0.0, 1.0])
    ys = [_finite(s.y) for s in series]
    for s in series:
        if s.err is not None:
            y, e = np.asarray(s.y, float), np.asarray(s.err, float)
            ys += [_finite(y - e), _finite(y + e)]
    ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
    frame = _Frame((xs.min(), xs.max()), (min(0.0, ys.min()), ys.max() * 1.05 if ys.max() > 0 else 1.0))
    body = _axes(frame, title, xlabel, ylabel)
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = [(frame.px(x), frame.py(y)) for x, y in zip(s.x, s.y) if math.isfinite(x) and math.isfinite(y)]
        if s.markers:
            for (x, y) in pts:
                body.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>')
            if s.err is not None:
                for x, y, e in zip(s.x, s.y, s.err):
                    body.append(
                        f'<line x1="{frame.px(x):.1f}" y1="{frame.py(y - e):.1f}" x2="{frame.px(x):.1f}" '
                        f'y2="{frame.py(y + e):.1f}" stroke="{color}"/>'
                    )
        else:
            dash = ' stroke-dasharray="6 4"' if s.dashed else ""
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
            body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
    body += _legend([s.label for s in series])
    return _document(body)


def stacked_area(x: Sequence[float], layers: dict[str, Sequence[float]], *, title: str = "",
                 xlabel: str = "", ylabel: str = "") -> str:
    """Cumulative plot: each layer is drawn on top of the previous ones."""
    x = np.asarray(x, float)
    tops = np.cumsum(np.vstack([np.maximum(np.asarray(v, float), 0) for v in layers.values()]), axis=0)
    frame = _Frame((x.min(), x.max()), (0.0, tops.max() * 1.05 if tops.size else 1.0))
    body = _axes(frame, title, xlabel, ylabel)
    lower = np.zeros_like(x)
    for k, upper in enumerate(tops):
        color = PALETTE[k % len(PALETTE)]
        pts = [(frame.px(a), frame.py(b)) for a, b in zip(x, upper)]
        pts += [(frame.px(a), frame.py(b)) for a, b in zip(x[::-1], lower[::-1])]
        path = " ".join(f"{a:.1f},{b:.1f}" for a, b in pts)
        body.append(f'<polygon points="{path}" fill="{color}" fill-opacity="0.75" stroke="none"/>')
        lower = upper
    body += _legend(list(layers))
    return _document(body)


def _color(t: float) -> str:
    """Blue to yellow ramp for ``t`` in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    stops = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))
    pos = t * (len(stops) - 1)
    k = min(int(pos), len(stops) - 2)
    f = pos - k
    rgb = [round(a + (b - a) * f) for a, b in zip(stops[k], stops[k + 1])]
    return "#%02x%02x%02x" % tuple(rgb)


def heatmap(matrix, row_values, col_values, *, title: str = "", row_label: str = "",
            col_label: str = "") -> str:
    """Colour-mapped grid; rows run bottom to top, columns left to right."""
    mat = np.asarray(matrix, float)
    finite = mat[np.isfinite(mat)]
    lo, hi = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
    frame = _Frame((float(col_values[0]), float(col_values[-1])), (float(row_values[0]), float(row_values[-1])))
    body = _axes(frame, title, col_label, row_label)
    cw = frame.w / mat.shape[1]
    ch = frame.h / mat.shape[0]
    for r in range(mat.shape[0]):
        for c in range(mat.shape[1]):
            v = mat[r, c]
            fill = "#cccccc" if not math.isfinite(v) else _color((v - lo) / (hi - lo) if hi > lo else 0.5)
            y = TOP + frame.h - (r + 1) * ch
            body.append(f'<rect x="{LEFT + c * cw:.2f}" y="{y:.2f}" width="{cw + 0.3:.2f}" '
                        f'height="{ch + 0.3:.2f}" fill="{fill}"/>')
    x = WIDTH - RIGHT + 20
    for k in range(50):
        y = TOP + frame.h * (1 - (k + 1) / 50)
        body.append(f'<rect x="{x}" y="{y:.2f}" width="16" height="{frame.h / 50 + 0.3:.2f}" fill="{_color(k / 49)}"/>')
    body.append(f'<text x="{x + 22}" y="{TOP + 8}" font-size="10">{hi:.3g}</text>')
    body.append(f'<text x="{x + 22}" y="{TOP + frame.h}" font-size="10">{lo:.3g}</text>')
    return _document(body)
