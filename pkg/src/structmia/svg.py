"""Minimal polyline plots written as standalone SVG."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 420, 320, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def line_plot(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
              xlog: bool = False, xlim=None, ylim=None, diagonal: bool = False) -> str:
    """Render named (x, y) series on shared axes; log-x drops non-positive x."""
    tx = (lambda v: math.log10(v)) if xlog else (lambda v: v)
    pts = {name: [(tx(x), y) for x, y in s if not xlog or x > 0] for name, s in series.items()}
    xs = [x for s in pts.values() for x, _ in s] or [0.0, 1.0]
    ys = [y for s in pts.values() for _, y in s] or [0.0, 1.0]
    x0, x1 = (tx(xlim[0]), tx(xlim[1])) if xlim else (min(xs), max(xs))
    y0, y1 = ylim if ylim else (min(ys), max(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x, y):
        u = PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)
        v = HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)
        return f"{u:.2f},{v:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
        'fill="none" stroke="#444"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>',
        f'<text x="{PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle">'
        f'{_fmt(10 ** x0 if xlog else x0)}</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle">'
        f'{_fmt(10 ** x1 if xlog else x1)}</text>',
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" text-anchor="end">{_fmt(y0)}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{_fmt(y1)}</text>',
    ]
    if diagonal:
        line = [(x, 10 ** x if xlog else x) for x in (x0, x1)]
        out.append(f'<polyline points="{" ".join(px(x, y) for x, y in line)}" fill="none" '
                   'stroke="#999" stroke-dasharray="4 3"/>')
    for i, (name, s) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        if s:
            out.append(f'<polyline points="{" ".join(px(x, y) for x, y in s)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{PAD + 8}" y="{PAD + 16 + 14 * i}" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_svgs(curves: dict[str, list[tuple[float, float]]], title: str) -> tuple[str, str]:
    """Linear ROC and log-FPR ROC for the same set of curves."""
    linear = line_plot(curves, title, "FPR", "TPR", xlim=(0, 1), ylim=(0, 1), diagonal=True)
    fprs = [f for c in curves.values() for f, _ in c if f > 0]
    lo = min(fprs) if fprs else 1e-3
    lo = 10 ** math.floor(math.log10(min(lo, 1e-3)))
    log = line_plot(curves, title + " (log FPR)", "FPR", "TPR", xlog=True, xlim=(lo, 1), ylim=(0, 1),
                    diagonal=True)
    return linear, log
