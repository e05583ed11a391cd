"""Hand-rolled SVG line/scatter plots for CLI reports. No dependencies;
just enough to eyeball trajectories and curves."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot"]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _ticks(lo: float, hi: float, n: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s for s in (mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw), default=mag)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step) + 1)]


def line_plot(series, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 420, logy: bool = False) -> str:
    """Render named (x, y) series to an SVG string.

    series: list of (label, x array, y array).
    """
    ml, mr, mt, mb = 62, 14, 30, 44
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    if logy:
        ys = ys[ys > 0]
    xlo, xhi = float(np.nanmin(xs)), float(np.nanmax(xs))
    ylo, yhi = float(np.nanmin(ys)), float(np.nanmax(ys))
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    if logy:
        ylo, yhi = math.log10(ylo), math.log10(yhi)

    def sx(v):
        return ml + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        v = math.log10(v) if logy else v
        return mt + ph - (v - ylo) / (yhi - ylo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width/2:.0f}" y="16" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{ml + pw/2:.0f}" y="{height-8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{mt + ph/2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {mt + ph/2:.0f})">{ylabel}</text>',
    ]
    for tx in _ticks(xlo, xhi):
        parts.append(f'<line x1="{sx(tx):.1f}" y1="{mt+ph}" x2="{sx(tx):.1f}" y2="{mt+ph+4}" stroke="#444"/>')
        parts.append(f'<text x="{sx(tx):.1f}" y="{mt+ph+16}" text-anchor="middle">{tx:.4g}</text>')
    for ty in _ticks(ylo, yhi):
        vy = mt + ph - (ty - ylo) / (yhi - ylo) * ph
        label = f"1e{ty:.0f}" if logy else f"{ty:.4g}"
        parts.append(f'<line x1="{ml-4}" y1="{vy:.1f}" x2="{ml}" y2="{vy:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{ml-7}" y="{vy+4:.1f}" text-anchor="end">{label}</text>')
    for k, (label, x, y) in enumerate(series):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y) & ((y > 0) if logy else True)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"/>')
        if label:
            yleg = mt + 14 + 14 * k
            parts.append(f'<line x1="{ml+pw-96}" y1="{yleg-4}" x2="{ml+pw-78}" y2="{yleg-4}" '
                         f'stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{ml+pw-72}" y="{yleg}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
