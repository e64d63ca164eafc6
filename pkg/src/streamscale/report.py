"""Hand-rolled SVG charts for fit and evaluation outputs.

Charts are plain polyline/circle SVG with fixed layout and ``%.6g`` label
formatting, so the same inputs always produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = ["Series", "line_chart"]

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
)

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 70, 170, 40, 55  # margins; right holds the legend


@dataclass
class Series:
    name: str
    points: list[tuple[float, float]] = field(default_factory=list)
    style: str = "both"  # line | points | both
    dashed: bool = False


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_chart(
    title: str,
    xlabel: str,
    ylabel: str,
    series: list[Series],
    log_x: bool = False,
) -> str:
    """Render one chart; returns the SVG document text."""
    pts = [p for s in series for p in s.points]
    if not pts:
        raise ValueError("no data to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1
    y_hi *= 1.05

    def tx(x: float) -> float:
        if log_x:
            span = math.log10(x_hi) - math.log10(max(x_lo, 1e-12))
            frac = (math.log10(max(x, 1e-12)) - math.log10(max(x_lo, 1e-12))) / span
        else:
            frac = (x - x_lo) / (x_hi - x_lo)
        return _ML + frac * (_W - _ML - _MR)

    def ty(y: float) -> float:
        frac = (y - y_lo) / (y_hi - y_lo)
        return _H - _MB - frac * (_H - _MT - _MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="20" font-size="14">{title}</text>',
    ]
    # axes
    out.append(
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="black"/>'
    )
    out.append(
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>'
    )
    x_tick_vals = sorted({p[0] for p in pts}) if len(set(xs)) <= 8 else _ticks(x_lo, x_hi)
    for t in x_tick_vals:
        if t < x_lo or t > x_hi:
            continue
        out.append(
            f'<line x1="{tx(t):.1f}" y1="{_H - _MB}" x2="{tx(t):.1f}" '
            f'y2="{_H - _MB + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{tx(t):.1f}" y="{_H - _MB + 16}" text-anchor="middle">'
            f"{_fmt(t)}</text>"
        )
    for t in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{_ML - 4}" y1="{ty(t):.1f}" x2="{_ML}" y2="{ty(t):.1f}" '
            f'stroke="black"/>'
        )
        out.append(
            f'<text x="{_ML - 7}" y="{ty(t):.1f}" text-anchor="end" '
            f'dominant-baseline="middle">{_fmt(t)}</text>'
        )
    out.append(
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 12}" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="18" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>'
    )
    # series
    for i, s in enumerate(sorted(series, key=lambda s: s.name)):
        color = _PALETTE[i % len(_PALETTE)]
        ordered = sorted(s.points)
        if s.style in ("line", "both") and len(ordered) > 1:
            path = " ".join(f"{tx(x):.1f},{ty(y):.1f}" for x, y in ordered)
            dash = ' stroke-dasharray="5,3"' if s.dashed else ""
            out.append(
                f'<polyline points="{path}" fill="none" stroke="{color}"'
                f'{dash} stroke-width="1.5"/>'
            )
        if s.style in ("points", "both"):
            for x, y in ordered:
                out.append(
                    f'<circle cx="{tx(x):.1f}" cy="{ty(y):.1f}" r="3" '
                    f'fill="{color}"/>'
                )
        ly = _MT + 14 * i
        out.append(
            f'<line x1="{_W - _MR + 8}" y1="{ly}" x2="{_W - _MR + 26}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{_W - _MR + 30}" y="{ly + 4}">{s.name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
