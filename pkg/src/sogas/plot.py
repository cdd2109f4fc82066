"""Minimal standalone SVG charts for sweep results."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=80, right=150, top=40, bottom=60)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

Series = Mapping[str, Sequence[tuple[float, float]]]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(v)
        v += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:g}"


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi, log_x=False, log_y=False):
        self.log_x, self.log_y = log_x, log_y
        self.xlo, self.xhi = self._t(xlo, log_x), self._t(xhi, log_x)
        self.ylo, self.yhi = self._t(ylo, log_y), self._t(yhi, log_y)
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    @staticmethod
    def _t(v, log):
        return math.log10(v) if log else v

    def px(self, x):
        span = (self.xhi - self.xlo) or 1.0
        return self.x0 + (self._t(x, self.log_x) - self.xlo) / span * (self.x1 - self.x0)

    def py(self, y):
        span = (self.yhi - self.ylo) or 1.0
        return self.y0 - (self._t(y, self.log_y) - self.ylo) / span * (self.y0 - self.y1)


def _svg(body: list[str], title: str, xlabel: str, ylabel: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        head.append(f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    mid_x = (MARGIN["left"] + WIDTH - MARGIN["right"]) / 2
    mid_y = (MARGIN["top"] + HEIGHT - MARGIN["bottom"]) / 2
    labels = [
        f'<text x="{mid_x}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="18" y="{mid_y}" text-anchor="middle" transform="rotate(-90 18 {mid_y})">'
        f"{escape(ylabel)}</text>",
    ]
    return "\n".join(head + body + labels + ["</svg>"]) + "\n"


def _axes(fr: _Frame, xticks, xlabels, yticks) -> list[str]:
    out = [
        f'<line x1="{fr.x0}" y1="{fr.y0}" x2="{fr.x1}" y2="{fr.y0}" stroke="black"/>',
        f'<line x1="{fr.x0}" y1="{fr.y0}" x2="{fr.x0}" y2="{fr.y1}" stroke="black"/>',
    ]
    for x, lab in zip(xticks, xlabels):
        out.append(f'<line x1="{x:.2f}" y1="{fr.y0}" x2="{x:.2f}" y2="{fr.y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{fr.y0 + 18}" text-anchor="middle">{escape(lab)}</text>')
    for y in yticks:
        py = fr.py(y)
        out.append(f'<line x1="{fr.x0 - 5}" y1="{py:.2f}" x2="{fr.x0}" y2="{py:.2f}" stroke="black"/>')
        out.append(
            f'<line x1="{fr.x0}" y1="{py:.2f}" x2="{fr.x1}" y2="{py:.2f}" stroke="#ddd"/>'
        )
        out.append(f'<text x="{fr.x0 - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(y)}</text>')
    return out


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    x = WIDTH - MARGIN["right"] + 15
    for i, name in enumerate(names):
        y = MARGIN["top"] + 10 + 20 * i
        c = COLORS[i % len(COLORS)]
        out.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{c}"/>')
        out.append(f'<text x="{x + 18}" y="{y + 1}">{escape(name)}</text>')
    return out


def _log_ticks(lo: float, hi: float) -> list[float]:
    return [10.0**e for e in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)]


def line_chart(xs: Sequence[float], series: Series, *, log_axes: bool = False, title: str = "") -> str:
    """Mean queries against the sweep value with 95% CI error bars."""
    los = [m - c for s in series.values() for m, c in s]
    his = [m + c for s in series.values() for m, c in s]
    if log_axes:
        positive = [v for v in los if v > 0] + [m for s in series.values() for m, _ in s]
        ylo, yhi = min(positive), max(his)
        yticks = _log_ticks(ylo, yhi)
        ylo, yhi = yticks[0], yticks[-1]
    else:
        ylo, yhi = 0.0, max(his) * 1.05
        yticks = _nice_ticks(ylo, yhi)
    xlo, xhi = min(xs), max(xs)
    if xlo == xhi:
        xlo, xhi = (xlo / 2, xhi * 2) if log_axes else (xlo - 1, xhi + 1)
    fr = _Frame(xlo, xhi, ylo, yhi, log_x=log_axes, log_y=log_axes)
    body = _axes(fr, [fr.px(x) for x in xs], [_fmt(x) for x in xs], yticks)
    for i, (name, pts) in enumerate(series.items()):
        c = COLORS[i % len(COLORS)]
        coords = [(fr.px(x), fr.py(m)) for x, (m, _) in zip(xs, pts)]
        path = " ".join(f"{px:.2f},{py:.2f}" for px, py in coords)
        body.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="2"/>')
        for x, (m, ci) in zip(xs, pts):
            px = fr.px(x)
            lo = max(m - ci, ylo) if log_axes else m - ci
            y_lo, y_hi = fr.py(lo), fr.py(m + ci)
            body.append(f'<line x1="{px:.2f}" y1="{y_lo:.2f}" x2="{px:.2f}" y2="{y_hi:.2f}" stroke="{c}"/>')
            for y in (y_lo, y_hi):
                body.append(f'<line x1="{px - 4:.2f}" y1="{y:.2f}" x2="{px + 4:.2f}" y2="{y:.2f}" stroke="{c}"/>')
            body.append(f'<circle cx="{px:.2f}" cy="{fr.py(m):.2f}" r="3" fill="{c}"/>')
    body += _legend(list(series))
    ylabel = "mean queries (log)" if log_axes else "mean queries"
    return _svg(body, title, "sweep value", ylabel)


def bar_chart(categories: Sequence[str], series: Series, *, title: str = "") -> str:
    """Grouped bars, one group per category and one bar per method."""
    yhi = max(m + c for s in series.values() for m, c in s) * 1.05
    fr = _Frame(0.0, float(len(categories)), 0.0, yhi)
    group = (fr.x1 - fr.x0) / len(categories)
    bar = group * 0.8 / max(1, len(series))
    centers = [fr.x0 + group * (j + 0.5) for j in range(len(categories))]
    body = _axes(fr, centers, list(categories), _nice_ticks(0.0, yhi))
    for i, (name, pts) in enumerate(series.items()):
        c = COLORS[i % len(COLORS)]
        for j, (m, ci) in enumerate(pts):
            x = fr.x0 + group * (j + 0.1) + bar * i
            top = fr.py(m)
            body.append(
                f'<rect x="{x:.2f}" y="{top:.2f}" width="{bar:.2f}" height="{fr.y0 - top:.2f}" fill="{c}"/>'
            )
            cx = x + bar / 2
            body.append(
                f'<line x1="{cx:.2f}" y1="{fr.py(max(m - ci, 0)):.2f}" x2="{cx:.2f}" '
                f'y2="{fr.py(m + ci):.2f}" stroke="black"/>'
            )
    body += _legend(list(series))
    return _svg(body, title, "distribution family", "mean queries")
