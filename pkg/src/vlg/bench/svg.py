"""Self-contained SVG charts: grouped bars and line plots with labelled axes."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["bar_chart", "line_chart", "nice_ticks"]

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 40, 70
PALETTE = ("#3b6ea5", "#d9822b", "#4f9a5b", "#a14d8c")


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    if ticks[-1] < hi:
        ticks.append(round(t, 10))
    return ticks


def _fmt(v: float) -> str:
    return f"{v:g}"


def _frame(title: str, xlabel: str, ylabel: str, ticks: list[float]) -> tuple[list[str], callable]:
    lo, hi = ticks[0], ticks[-1]
    ph = H - MT - MB

    def ymap(v: float) -> float:
        return MT + ph * (1 - (v - lo) / (hi - lo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
           f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>']
    for t in ticks:
        y = ymap(t)
        out.append(f'<line x1="{ML - 5}" y1="{y:.1f}" x2="{ML}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ML - 8}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{MT + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {MT + ph / 2:.1f})">{escape(ylabel)}</text>')
    return out, ymap


def _legend(out: list[str], names: Sequence[str]) -> None:
    for i, name in enumerate(names):
        x = W - MR - 150
        y = MT + 4 + 16 * i
        out.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{PALETTE[i % len(PALETTE)]}"/>')
        out.append(f'<text x="{x + 14}" y="{y + 9}">{escape(name)}</text>')


def bar_chart(title: str, groups: Sequence[str], series: dict[str, Sequence[float]],
              xlabel: str = "", ylabel: str = "") -> str:
    """Grouped bars: one group per entry of ``groups``, one bar per series."""
    vals = [v for s in series.values() for v in s if math.isfinite(v)]
    ticks = nice_ticks(min(0.0, min(vals, default=0.0)), max(vals, default=1.0))
    out, ymap = _frame(title, xlabel, ylabel, ticks)
    pw = W - ML - MR
    gw = pw / max(len(groups), 1)
    bw = 0.8 * gw / max(len(series), 1)
    for gi, g in enumerate(groups):
        x0 = ML + gi * gw + 0.1 * gw
        for si, (name, s) in enumerate(series.items()):
            v = s[gi] if math.isfinite(s[gi]) else 0.0
            y, y0 = ymap(v), ymap(max(ticks[0], 0.0))
            out.append(f'<rect x="{x0 + si * bw:.1f}" y="{min(y, y0):.1f}" width="{bw:.1f}" '
                       f'height="{abs(y0 - y):.1f}" fill="{PALETTE[si % len(PALETTE)]}"/>')
        cx = ML + (gi + 0.5) * gw
        out.append(f'<text x="{cx:.1f}" y="{H - MB + 16}" text-anchor="middle">{escape(g)}</text>')
    _legend(out, list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(title: str, xs: Sequence[float], series: dict[str, Sequence[float]],
               xlabel: str = "", ylabel: str = "") -> str:
    vals = [v for s in series.values() for v in s if math.isfinite(v)]
    ticks = nice_ticks(min(0.0, min(vals, default=0.0)), max(vals, default=1.0))
    out, ymap = _frame(title, xlabel, ylabel, ticks)
    pw = W - ML - MR
    lo, hi = min(xs), max(xs)
    span = (hi - lo) or 1.0

    def xmap(x: float) -> float:
        return ML + 20 + (pw - 40) * (x - lo) / span

    for x in xs:
        out.append(f'<line x1="{xmap(x):.1f}" y1="{H - MB}" x2="{xmap(x):.1f}" y2="{H - MB + 5}" stroke="black"/>')
        out.append(f'<text x="{xmap(x):.1f}" y="{H - MB + 18}" text-anchor="middle">{_fmt(x)}</text>')
    for si, (name, s) in enumerate(series.items()):
        pts = " ".join(f"{xmap(x):.1f},{ymap(v):.1f}" for x, v in zip(xs, s) if math.isfinite(v))
        color = PALETTE[si % len(PALETTE)]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, v in zip(xs, s):
            if math.isfinite(v):
                out.append(f'<circle cx="{xmap(x):.1f}" cy="{ymap(v):.1f}" r="3" fill="{color}"/>')
    _legend(out, list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"
