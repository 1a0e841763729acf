"""Minimal deterministic SVG line charts for accuracy-vs-strength curves.

Pure text serialization of report rows: identical input produces identical
bytes, so regenerated figures diff clean.
"""

from __future__ import annotations

from .errors import ContractError

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 150, 24, 56
_COLORS = ("#1b6ca8", "#c23b22", "#2e8540", "#8e44ad",
           "#b8860b", "#16a2b8", "#d81b60", "#5d4037")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_line_chart(series, x_label: str = "strength",
                      y_label: str = "accuracy", title: str = "") -> str:
    """``series`` is a list of (label, [(x, y), ...]) pairs; y is expected in
    [0, 1]. Returns the SVG document text."""
    series = [(label, list(pts)) for label, pts in series]
    if not series or all(not pts for _, pts in series):
        raise ContractError("nothing to plot")
    xs = [x for _, pts in series for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return _MT + (1.0 - y) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444444"/>',
    ]
    if title:
        out.append(f'<text x="{_ML}" y="16" font-family="sans-serif" '
                   f'font-size="13">{title}</text>')
    for i in range(5):
        y = i / 4.0
        yy = _fmt(py(y))
        out.append(f'<line x1="{_ML}" y1="{yy}" x2="{_ML + plot_w}" y2="{yy}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{_ML - 8}" y="{_fmt(py(y) + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{_fmt(y)}</text>')
    n_xticks = 5
    for i in range(n_xticks):
        x = x_lo + (x_hi - x_lo) * i / (n_xticks - 1)
        xx = _fmt(px(x))
        out.append(f'<line x1="{xx}" y1="{_MT + plot_h}" x2="{xx}" '
                   f'y2="{_MT + plot_h + 5}" stroke="#444444"/>')
        out.append(f'<text x="{xx}" y="{_MT + plot_h + 20}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{_fmt(x)}</text>')
    out.append(f'<text x="{_ML + plot_w // 2}" y="{_H - 12}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{x_label}</text>')
    out.append(f'<text x="18" y="{_MT + plot_h // 2}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 18 {_MT + plot_h // 2})">{y_label}</text>')
    for i, (label, pts) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        if pts:
            coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="2"/>')
            for x, y in pts:
                out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" '
                           f'r="3" fill="{color}"/>')
        ly = _MT + 16 + 18 * i
        out.append(f'<line x1="{_ML + plot_w + 12}" y1="{ly}" '
                   f'x2="{_ML + plot_w + 34}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{_ML + plot_w + 40}" y="{ly + 4}" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_to_series(report):
    """Group report rows into per-defense (value, accuracy) polylines,
    preserving first-seen defense order."""
    order = []
    grouped = {}
    for row in report.rows:
        if row.defense not in grouped:
            grouped[row.defense] = []
            order.append(row.defense)
        grouped[row.defense].append((float(row.value), float(row.accuracy)))
    return [(d, grouped[d]) for d in order]
