"""Minimal dependency-free SVG line charts for rate curves."""

from __future__ import annotations

import math

_WIDTH, _HEIGHT = 640, 440
_MARGIN = 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def write_loglog_svg(path, series: dict, title: str, xlabel: str = "n", ylabel: str = "value") -> None:
    """Write a log-log chart; series maps name -> list of (x, y) with x, y > 0."""
    pts = [(math.log10(x), math.log10(y))
           for vals in series.values() for x, y in vals if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing to plot: all points nonpositive")
    xs, ys = zip(*pts)
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi - x_lo < 1e-9:
        x_hi = x_lo + 1.0
    if y_hi - y_lo < 1e-9:
        y_hi = y_lo + 1.0

    def sx(v):
        return _MARGIN + (v - x_lo) / (x_hi - x_lo) * (_WIDTH - 2 * _MARGIN)

    def sy(v):
        return _HEIGHT - _MARGIN - (v - y_lo) / (y_hi - y_lo) * (_HEIGHT - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<text x="{_WIDTH // 2}" y="{_HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12">log10 {xlabel}</text>',
        f'<text x="16" y="{_HEIGHT // 2}" font-size="12" '
        f'transform="rotate(-90 16 {_HEIGHT // 2})" text-anchor="middle">log10 {ylabel}</text>',
    ]
    for tv in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{sx(tv):.1f}" y="{_HEIGHT - _MARGIN + 18}" text-anchor="middle" '
            f'font-size="10">{tv:.2f}</text>'
        )
    for tv in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{sy(tv):.1f}" text-anchor="end" '
            f'font-size="10">{tv:.2f}</text>'
        )
    for i, (name, vals) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(
            f"{sx(math.log10(x)):.2f},{sy(math.log10(y)):.2f}" for x, y in vals if x > 0 and y > 0
        )
        if not coords:
            continue
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{_WIDTH - _MARGIN + 4}" y="{_MARGIN + 16 * i}" font-size="11" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
