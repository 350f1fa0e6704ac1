"""Minimal SVG line plots (one figure, several named series)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 30, 50


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi):
        out.append(v)
        v += step
    return out


def line_plot(series, path, title="", xlabel="", ylabel="", log_y=False):
    """Write ``{label: (xs, ys)}`` as an SVG line chart; non-finite points are skipped."""
    clean = {}
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if math.isfinite(x) and math.isfinite(y) and (not log_y or y > 0)]
        if pts:
            clean[label] = pts
    tf = (lambda y: math.log10(y)) if log_y else (lambda y: y)
    all_pts = [p for pts in clean.values() for p in pts]
    if all_pts:
        x0, x1 = min(p[0] for p in all_pts), max(p[0] for p in all_pts)
        y0, y1 = min(tf(p[1]) for p in all_pts), max(tf(p[1]) for p in all_pts)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (tf(y) - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{W / 2 - RIGHT / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>']
    for xt in _ticks(x0, x1):
        out.append(f'<line x1="{sx(xt):.1f}" y1="{TOP + ph}" x2="{sx(xt):.1f}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{sx(xt):.1f}" y="{TOP + ph + 16}" text-anchor="middle">{xt:g}</text>')
    for yt in _ticks(y0, y1):
        ypix = TOP + ph - (yt - y0) / (y1 - y0) * ph
        label = f"1e{yt:g}" if log_y else f"{yt:g}"
        out.append(f'<line x1="{LEFT - 4}" y1="{ypix:.1f}" x2="{LEFT}" y2="{ypix:.1f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{ypix + 4:.1f}" text-anchor="end">{label}</text>')
    for i, (label, pts) in enumerate(clean.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = TOP + 14 + 16 * i
        out.append(f'<line x1="{W - RIGHT + 10}" y1="{ly - 4}" x2="{W - RIGHT + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 35}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
