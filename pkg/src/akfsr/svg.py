"""Minimal line charts with optional standard-deviation bands, written as SVG."""
from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    return np.linspace(lo, hi, n)


def line_chart(series, title: str = "", xlabel: str = "episode", ylabel: str = "") -> str:
    """``series`` is a list of ``(label, mean, std_or_None)`` tuples."""
    all_lo, all_hi, n_max = [], [], 1
    for _, mean, std in series:
        mean = np.asarray(mean, dtype=float)
        spread = np.zeros_like(mean) if std is None else np.asarray(std, dtype=float)
        if mean.size:
            all_lo.append(np.nanmin(mean - spread))
            all_hi.append(np.nanmax(mean + spread))
        n_max = max(n_max, mean.size)
    lo = min(all_lo) if all_lo else 0.0
    hi = max(all_hi) if all_hi else 1.0
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def xs(i):
        return MARGIN["left"] + plot_w * (i / max(n_max - 1, 1))

    def ys(v):
        return MARGIN["top"] + plot_h * (1.0 - (v - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{title}</text>',
    ]
    x0, y0 = MARGIN["left"], MARGIN["top"] + plot_h
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for v in _ticks(lo, hi):
        y = ys(v)
        out.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{v:.3g}</text>')
    for i in _ticks(0, n_max - 1):
        x = xs(i)
        out.append(f'<text x="{_fmt(x)}" y="{y0 + 16}" text-anchor="middle">{int(round(i)) + 1}</text>')
    out.append(f'<text x="{x0 + plot_w / 2}" y="{HEIGHT - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + plot_h / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + plot_h / 2})">{ylabel}</text>')

    for k, (label, mean, std) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        mean = np.asarray(mean, dtype=float)
        if mean.size == 0:
            continue
        if std is not None:
            std = np.asarray(std, dtype=float)
            upper = [f"{_fmt(xs(i))},{_fmt(ys(m + s))}" for i, (m, s) in enumerate(zip(mean, std))]
            lower = [f"{_fmt(xs(i))},{_fmt(ys(m - s))}" for i, (m, s) in enumerate(zip(mean, std))]
            pts = " ".join(upper + lower[::-1])
            out.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_fmt(xs(i))},{_fmt(ys(m))}" for i, m in enumerate(mean))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN["top"] + 14 * (k + 1)
        out.append(f'<line x1="{x0 + plot_w - 120}" y1="{ly - 4}" x2="{x0 + plot_w - 100}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x0 + plot_w - 95}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_chart(path, series, **kwargs) -> Path:
    path = Path(path)
    path.write_text(line_chart(series, **kwargs))
    return path
