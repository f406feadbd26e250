"""Minimal SVG rendering for time series, phase-space maps and |rho| matrices.

Output is plain text with fixed number formatting, so identical data gives
byte-identical files.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=55)


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


class _Canvas:
    def __init__(self, title: str, width=WIDTH, height=HEIGHT):
        self.w, self.h = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]

    def add(self, s: str):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", extra=""):
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(s)}</text>')

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text("\n".join(self.parts + ["</svg>"]) + "\n")
        return path


def _axes(c: _Canvas, xr, yr, xlabel, ylabel, box):
    x0, y0, x1, y1 = box
    c.add(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(x1 - x0)}" height="{_f(y1 - y0)}" '
          f'fill="none" stroke="black"/>')
    sx = lambda v: x0 + (v - xr[0]) / (xr[1] - xr[0]) * (x1 - x0)
    sy = lambda v: y1 - (v - yr[0]) / (yr[1] - yr[0]) * (y1 - y0)
    for t in nice_ticks(*xr):
        x = sx(t)
        c.add(f'<line x1="{_f(x)}" y1="{_f(y1)}" x2="{_f(x)}" y2="{_f(y1 + 5)}" stroke="black"/>')
        c.text(x, y1 + 18, _fmt_tick(t))
    for t in nice_ticks(*yr):
        y = sy(t)
        c.add(f'<line x1="{_f(x0 - 5)}" y1="{_f(y)}" x2="{_f(x0)}" y2="{_f(y)}" stroke="black"/>')
        c.text(x0 - 8, y + 4, _fmt_tick(t), anchor="end")
    c.text((x0 + x1) / 2, c.h - 12, xlabel)
    c.text(16, (y0 + y1) / 2, ylabel, extra=f' transform="rotate(-90 16 {_f((y0 + y1) / 2)})"')
    return sx, sy


def _range(vals, pad=0.05):
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    d = (hi - lo) * pad
    return lo - d, hi + d


def line_plot(path, x, curves: dict, title="", xlabel="t", ylabel="", x_scale: float = 1.0,
              ylim=None, step: bool = False, markers: dict | None = None) -> Path:
    """Curves sharing one x axis.

    ``x_scale`` divides the x values (e.g. 1000 for times quoted in units of
    10^3/omega_b); ``step`` draws staircase lines; ``markers`` maps labels to
    x positions drawn as vertical dashed lines.
    """
    x = np.asarray(x, dtype=float) / x_scale
    if not curves:
        raise ValueError("nothing to plot")
    c = _Canvas(title)
    box = (MARGIN["left"], MARGIN["top"], WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"])
    ally = np.concatenate([np.asarray(v, dtype=float) for v in curves.values()])
    yr = tuple(ylim) if ylim is not None else _range(ally)
    sx, sy = _axes(c, (float(x[0]), float(x[-1])), yr, xlabel, ylabel, box)
    c.add(f'<clipPath id="plotarea"><rect x="{box[0]}" y="{box[1]}" width="{box[2] - box[0]}" '
          f'height="{box[3] - box[1]}"/></clipPath>')
    for i, (name, ys) in enumerate(curves.items()):
        ys = np.asarray(ys, dtype=float)
        colour = PALETTE[i % len(PALETTE)]
        pts = []
        for j, (a, b) in enumerate(zip(x, ys)):
            if step and j:
                pts.append(f"{_f(sx(a))},{_f(sy(ys[j - 1]))}")
            pts.append(f"{_f(sx(a))},{_f(sy(b))}")
        c.add(f'<polyline clip-path="url(#plotarea)" fill="none" stroke="{colour}" '
              f'stroke-width="1.5" points="{" ".join(pts)}"/>')
        ly = box[1] + 14 + 18 * i
        c.add(f'<line x1="{box[2] + 10}" y1="{ly}" x2="{box[2] + 30}" y2="{ly}" '
              f'stroke="{colour}" stroke-width="2"/>')
        c.text(box[2] + 35, ly + 4, name, anchor="start")
    for label, pos in (markers or {}).items():
        xm = sx(pos / x_scale)
        c.add(f'<line x1="{_f(xm)}" y1="{box[1]}" x2="{_f(xm)}" y2="{box[3]}" '
              f'stroke="gray" stroke-dasharray="4 3"/>')
        c.text(xm, box[1] - 4, label, extra=' font-size="10"')
    return c.save(path)


def _diverging(v: float, vmax: float) -> str:
    """Blue (negative) through white to red (positive)."""
    a = max(-1.0, min(1.0, v / vmax)) if vmax > 0 else 0.0
    if a >= 0:
        r, g, b = 255, int(255 * (1 - a)), int(255 * (1 - a))
    else:
        r, g, b = int(255 * (1 + a)), int(255 * (1 + a)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(path, xs, ys, values, title="", xlabel="Re(alpha)", ylabel="Im(alpha)",
            symmetric: bool = True) -> Path:
    """Cell map of ``values[i, j]`` at (xs[j], ys[i]) with a colour bar."""
    values = np.asarray(values, dtype=float)
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    c = _Canvas(title, width=WIDTH - 60)
    box = (MARGIN["left"], MARGIN["top"], c.w - 120, HEIGHT - MARGIN["bottom"])
    sx, sy = _axes(c, (xs[0], xs[-1]), (ys[0], ys[-1]), xlabel, ylabel, box)
    vmax = float(np.max(np.abs(values))) if symmetric else float(np.max(values))
    dx = (box[2] - box[0]) / max(len(xs) - 1, 1)
    dy = (box[3] - box[1]) / max(len(ys) - 1, 1)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            c.add(f'<rect x="{_f(sx(x) - dx / 2)}" y="{_f(sy(y) - dy / 2)}" width="{_f(dx)}" '
                  f'height="{_f(dy)}" fill="{_diverging(values[i, j], vmax)}" stroke="none"/>')
    bx = box[2] + 25
    for k in range(50):
        v = vmax * (1 - 2 * k / 49)
        yk = box[1] + (box[3] - box[1]) * k / 50
        c.add(f'<rect x="{bx}" y="{_f(yk)}" width="15" height="{_f((box[3] - box[1]) / 50 + 0.5)}" '
              f'fill="{_diverging(v, vmax)}"/>')
    c.text(bx + 20, box[1] + 8, _fmt_tick(round(vmax, 4)), anchor="start")
    c.text(bx + 20, box[3], _fmt_tick(round(-vmax, 4)), anchor="start")
    return c.save(path)


def matrix_plot(path, labels: list[str], magnitudes, title="") -> Path:
    """|rho_ij| drawn as a grid of shaded squares (darker is larger)."""
    m = np.asarray(magnitudes, dtype=float)
    n = len(labels)
    cell = min(36, 420 // max(n, 1))
    left, top = 70, 50
    c = _Canvas(title, width=left + n * cell + 40, height=top + n * cell + 70)
    for i in range(n):
        c.text(left - 6, top + (i + 0.6) * cell, labels[i], anchor="end", extra=' font-size="10"')
        cx = left + (i + 0.5) * cell
        c.text(cx, top + n * cell + 14, labels[i], extra=f' font-size="10" transform="rotate(45 {_f(cx)} {_f(top + n * cell + 14)})"')
        for j in range(n):
            shade = int(255 * (1 - min(1.0, m[i, j])))
            c.add(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                  f'fill="#{shade:02x}{shade:02x}ff" stroke="#cccccc"/>')
    return c.save(path)
