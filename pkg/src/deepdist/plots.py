"""Dependency-free SVG figures: returns with VaR bands, and PIT histograms."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, MARGIN = 900, 360, 40
BAND_COLOURS = ("#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _header(title: str, chash: str | None) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
    ]
    if chash:
        out.append(f"<!-- config_hash={chash} -->")
    out.append(f'<title>{escape(title)}</title>')
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    return out


def _scaler(lo: float, hi: float, a: float, b: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _polyline(xs, ys, colour: str, cls: str) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline class="{cls}" fill="none" stroke="{colour}" stroke-width="1" points="{pts}"/>'


def var_svg(returns, var: dict, chash: str | None = None) -> str:
    """Returns as a blue line, ``-VaR`` bands per tolerance, and a dot per exceedance.

    ``var`` maps each tolerance to its positive VaR series.
    """
    r = np.asarray(returns, dtype=float)
    n = r.size
    bands = {a: -np.asarray(v, dtype=float) for a, v in var.items()}
    lo = min([r.min()] + [b.min() for b in bands.values()])
    hi = max([r.max()] + [b.max() for b in bands.values()])
    sx = _scaler(0, max(n - 1, 1), MARGIN, WIDTH - MARGIN)
    sy = _scaler(lo, hi, HEIGHT - MARGIN, MARGIN)
    xs = sx(np.arange(n))
    out = _header("Returns with VaR bands", chash)
    out.append(f'<line x1="{MARGIN}" y1="{float(sy(0.0)):.2f}" x2="{WIDTH - MARGIN}" '
               f'y2="{float(sy(0.0)):.2f}" stroke="#999" stroke-width="0.5"/>')
    out.append(_polyline(xs, sy(r), "#1f77b4", "returns"))
    for k, (alpha, band) in enumerate(sorted(bands.items(), reverse=True)):
        colour = BAND_COLOURS[k % len(BAND_COLOURS)]
        out.append(_polyline(xs, sy(band), colour, f"var var-{alpha:g}"))
        hit = np.flatnonzero(r < band)
        for i in hit:
            out.append(f'<circle class="exceedance exceedance-{alpha:g}" cx="{xs[i]:.2f}" '
                       f'cy="{float(sy(r[i])):.2f}" r="2.5" fill="{colour}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 150}" y="{MARGIN + 14 * (k + 1)}" font-size="11" '
                   f'fill="{colour}">VaR {100 * alpha:g}%: {hit.size} exceedances</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def pit_histogram_svg(pit, chash: str | None = None, bins: int = 20) -> str:
    """PIT histogram with the uniform density as a dashed reference line."""
    u = np.asarray(pit, dtype=float)
    counts, _ = np.histogram(u, bins=bins, range=(0.0, 1.0))
    dens = counts * bins / max(u.size, 1)
    top = max(1.5, float(dens.max()) * 1.1)
    sx = _scaler(0.0, 1.0, MARGIN, WIDTH - MARGIN)
    sy = _scaler(0.0, top, HEIGHT - MARGIN, MARGIN)
    out = _header("PIT histogram", chash)
    w = (WIDTH - 2 * MARGIN) / bins
    for k, d in enumerate(dens):
        x0 = float(sx(k / bins))
        y0 = float(sy(d))
        out.append(f'<rect class="bin" x="{x0:.2f}" y="{y0:.2f}" width="{w - 1:.2f}" '
                   f'height="{HEIGHT - MARGIN - y0:.2f}" fill="#1f77b4"/>')
    y1 = float(sy(1.0))
    out.append(f'<line class="uniform" x1="{MARGIN}" y1="{y1:.2f}" x2="{WIDTH - MARGIN}" y2="{y1:.2f}" '
               f'stroke="#d62728" stroke-dasharray="4,3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
