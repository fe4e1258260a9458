"""Hand-rolled SVG renderers for correlation heatmaps and histograms."""

from __future__ import annotations

import numpy as np

from .analysis import CorrelationMatrix


def _heat_color(v: float) -> str:
    """Map [-1, 1] to blue-white-red."""
    v = max(-1.0, min(1.0, v))
    if v >= 0:
        r, g, b = 255, int(255 * (1 - v)), int(255 * (1 - v))
    else:
        r, g, b = int(255 * (1 + v)), int(255 * (1 + v)), 255
    return f"rgb({r},{g},{b})"


def render_correlation_svg(matrix: CorrelationMatrix, path, cell: int = 64) -> None:
    """Lower-triangle heatmap annotated with two-decimal values."""
    labels = matrix.labels
    vals = matrix.as_array()
    k = len(labels)
    margin = 120
    size = margin + k * cell + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'font-family="monospace" font-size="12">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<text x="{margin}" y="16">{matrix.stat} correlation (lower triangle)</text>',
    ]
    for i in range(k):
        y = margin + i * cell
        parts.append(
            f'<text x="{margin - 6}" y="{y + cell / 2 + 4}" text-anchor="end">{labels[i]}</text>'
        )
        for j in range(i + 1):
            x = margin + j * cell
            v = vals[i, j]
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_heat_color(v)}" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" '
                f'text-anchor="middle">{v:.2f}</text>'
            )
    for j in range(k):
        x = margin + j * cell + cell / 2
        y = margin + k * cell + 14
        parts.append(
            f'<text x="{x}" y="{y}" text-anchor="middle" '
            f'transform="rotate(35 {x} {y})">{labels[j]}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def render_histograms_svg(series: dict, path, bins: int = 40,
                          width: int = 640, height: int = 360) -> None:
    """Overlaid step histograms of several value lists, shared binning."""
    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]
    allv = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    lo, hi = float(allv.min()), float(allv.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    margin = 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    counts = {k: np.histogram(np.asarray(v), bins=edges)[0] for k, v in series.items()}
    peak = max(c.max() for c in counts.values()) or 1

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 28}">{lo:.1f}</text>',
        f'<text x="{width - margin}" y="{height - margin + 28}" text-anchor="end">{hi:.1f}</text>',
    ]
    for idx, (label, c) in enumerate(counts.items()):
        color = colors[idx % len(colors)]
        pts = []
        for b in range(bins):
            x0 = margin + plot_w * b / bins
            x1 = margin + plot_w * (b + 1) / bins
            y = height - margin - plot_h * c[b] / peak
            pts.append(f"{x0:.1f},{y:.1f} {x1:.1f},{y:.1f}")
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" '
            f'points="{" ".join(pts)}"/>'
        )
        parts.append(
            f'<text x="{width - margin - 4}" y="{margin + 16 * idx + 12}" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
