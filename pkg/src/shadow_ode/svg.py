"""Minimal standalone SVG line plots (960x640, 10-tick axes, legend)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 960, 640
MARGIN = dict(left=80, right=200, top=30, bottom=60)
TICKS = 10
PALETTE = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def render(series, title: str = "", xlabel: str = "x", ylabel: str = "y") -> str:
    """``series`` is a list of ``(label, xs, ys)``; non-finite points are dropped."""
    cleaned = []
    for label, xs, ys in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        cleaned.append((label, xs[ok], ys[ok]))
    allx = np.concatenate([c[1] for c in cleaned] + [np.zeros(0)])
    ally = np.concatenate([c[2] for c in cleaned] + [np.zeros(0)])
    x0, x1 = (float(allx.min()), float(allx.max())) if allx.size else (0.0, 1.0)
    y0, y1 = (float(ally.min()), float(ally.max())) if ally.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    bottom, left = MARGIN["top"] + ph, MARGIN["left"]
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{left + pw}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
    for i in range(TICKS + 1):
        xv = x0 + (x1 - x0) * i / TICKS
        yv = y0 + (y1 - y0) * i / TICKS
        X, Y = px(xv), py(yv)
        out.append(f'<line x1="{X:.1f}" y1="{bottom}" x2="{X:.1f}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{bottom + 18}" text-anchor="middle">{_fmt(xv)}</text>')
        out.append(f'<line x1="{left - 5}" y1="{Y:.1f}" x2="{left}" y2="{Y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y + 4:.1f}" text-anchor="end">{_fmt(yv)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for n, (label, xs, ys) in enumerate(cleaned):
        color = PALETTE[n % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 10 + 18 * n
        lx = left + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, series, **kwargs):
    with open(path, "w") as fh:
        fh.write(render(series, **kwargs))


def solution_series(sol, label=""):
    """One series per component of a solution's samples."""
    prefix = f"{label} " if label else ""
    return [
        (f"{prefix}y{i}" if sol.dim > 1 or not label else label, sol.qs, sol.values[:, i])
        for i in range(sol.dim)
    ]
