"""Dependency-free SVG line plots built from CSV rows.

The output is a pure function of the input series, so identical rows give
identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH = 480
HEIGHT = 480
MARGIN = 56


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    color: str = "#1f77b4"
    dash: str | None = None


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    span = hi - lo
    raw = span / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t / step) * step)
        t += step
    return ticks


def line_plot_svg(
    series: Sequence[Series],
    title: str,
    xlabel: str,
    ylabel: str,
    equal_aspect: bool = True,
) -> str:
    """Overlay ``series`` as polylines on one set of axes."""
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in s.y]
    if not xs:
        xs, ys = [0.0], [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if equal_aspect:
        span = max(x1 - x0, y1 - y0, 1e-9)
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        x0, x1 = cx - span / 2, cx + span / 2
        y0, y1 = cy - span / 2, cy + span / 2
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad_x, pad_y = 0.05 * (x1 - x0), 0.05 * (y1 - y0)
    x0, x1, y0, y1 = x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y
    inner_w = WIDTH - 2 * MARGIN
    inner_h = HEIGHT - 2 * MARGIN

    def px(x: float) -> float:
        return MARGIN + (x - x0) / (x1 - x0) * inner_w

    def py(y: float) -> float:
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * inner_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{inner_w}" height="{inner_h}" '
        'fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{HEIGHT - MARGIN}" x2="{px(t):.2f}" '
                   f'y2="{HEIGHT - MARGIN + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{HEIGHT - MARGIN + 16}" '
                   f'text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{MARGIN - 4}" y1="{py(t):.2f}" x2="{MARGIN}" '
                   f'y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {HEIGHT / 2:.1f})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.x, s.y))
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(f'<polyline fill="none" stroke="{s.color}" stroke-width="1.5"{dash} '
                   f'points="{pts}"/>')
        ly = MARGIN + 14 + 14 * i
        out.append(f'<line x1="{MARGIN + 8}" y1="{ly - 4}" x2="{MARGIN + 30}" y2="{ly - 4}" '
                   f'stroke="{s.color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{MARGIN + 34}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
