"""Static SVG emission: 2-d scatter plots colored by class and
confusion-matrix heatmaps.

Hand-rolled SVG keeps plots dependency-free, byte-deterministic and easy to
parse back in tests (every data point is a <circle> with a class attribute).
"""

from __future__ import annotations

import numpy as np

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]

_W, _H = 640, 520
_MARGIN = 48


def class_colors(classes) -> dict:
    return {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(sorted(classes))}


def scatter_svg(points: np.ndarray, labels, title: str = "") -> str:
    """Scatter of N x 2 points; one circle per point, colored by label."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("points must be (n, 2)")
    labels = list(labels)
    colors = class_colors(set(labels))
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    inner_w = _W - 2 * _MARGIN
    inner_h = _H - 2 * _MARGIN - 24

    def sx(x):
        return _MARGIN + (x - lo[0]) / span[0] * inner_w

    def sy(y):
        return _H - _MARGIN - (y - lo[1]) / span[1] * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{_esc(title)}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN - 16}" width="{inner_w}" height="{inner_h}" '
        f'fill="none" stroke="#cccccc"/>',
    ]
    for (x, y), lab in zip(points, labels):
        parts.append(
            f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{colors[lab]}" '
            f'fill-opacity="0.75" class="{_esc(str(lab))}"/>'
        )
    for i, (cls, col) in enumerate(sorted(colors.items())):
        ly = _MARGIN + i * 18
        parts.append(f'<circle cx="{_W - 120}" cy="{ly}" r="5" fill="{col}"/>')
        parts.append(
            f'<text x="{_W - 108}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{_esc(str(cls))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def confusion_svg(matrix: np.ndarray, classes, title: str = "") -> str:
    """Row-normalized heatmap with count annotations; rows are true classes."""
    m = np.asarray(matrix, dtype=np.float64)
    k = len(classes)
    if m.shape != (k, k):
        raise ValueError("matrix must be square and match classes")
    cell = max(28, min(64, (min(_W, _H) - 2 * _MARGIN - 40) // max(k, 1)))
    x0, y0 = _MARGIN + 40, _MARGIN + 10
    width = x0 + k * cell + _MARGIN
    height = y0 + k * cell + _MARGIN
    row_sums = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    norm = m / row_sums
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{_esc(title)}</text>',
    ]
    for i in range(k):
        for j in range(k):
            v = norm[i, j]
            # white -> blue ramp
            r = int(255 - 200 * v)
            g = int(255 - 140 * v)
            parts.append(
                f'<rect x="{x0 + j * cell}" y="{y0 + i * cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({r},{g},255)" stroke="#dddddd" data-true="{_esc(str(classes[i]))}" '
                f'data-pred="{_esc(str(classes[j]))}" data-count="{int(m[i, j])}"/>'
            )
            parts.append(
                f'<text x="{x0 + j * cell + cell // 2}" y="{y0 + i * cell + cell // 2 + 4}" '
                f'text-anchor="middle" font-family="sans-serif" font-size="11">{int(m[i, j])}</text>'
            )
    for i, cls in enumerate(classes):
        parts.append(
            f'<text x="{x0 - 6}" y="{y0 + i * cell + cell // 2 + 4}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_esc(str(cls))}</text>'
        )
        parts.append(
            f'<text x="{x0 + i * cell + cell // 2}" y="{y0 + k * cell + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_esc(str(classes[i]))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def parse_scatter_points(svg_text: str):
    """Recover (points, labels) from a scatter SVG; inverse of scatter_svg up
    to the affine screen transform."""
    import re

    pts = []
    labs = []
    for mt in re.finditer(r'<circle cx="([-\d.]+)" cy="([-\d.]+)" r="3"[^>]*class="([^"]*)"', svg_text):
        pts.append((float(mt.group(1)), float(mt.group(2))))
        labs.append(mt.group(3))
    return np.array(pts), labs
