"""Standalone SVG emission for run artifacts.

Hand-built SVG strings keep the output byte-deterministic: no library
timestamps, hashes or random ids. Three plots are supported: a confusion
matrix heatmap, per-stage loss curves, and a 2-D embedding scatter.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["confusion_svg", "curves_svg", "scatter_svg", "write_svg"]

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _fmt(value: float) -> str:
    return f"{value:.4f}".rstrip("0").rstrip(".")


def _heat_color(fraction: float) -> str:
    """Linear white-to-blue ramp."""
    fraction = min(max(fraction, 0.0), 1.0)
    r = round(255 - 179 * fraction)
    g = round(255 - 141 * fraction)
    b = round(255 - 79 * fraction)
    return f"#{r:02x}{g:02x}{b:02x}"


def _document(width: int, height: int, body: list[str], title: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{title}</title>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def confusion_svg(counts: np.ndarray, class_names: list[str] | None = None) -> str:
    """Heatmap with one rect per (true, predicted) cell plus count labels."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    names = class_names or [str(i) for i in range(n)]
    cell, margin = 90, 70
    width = margin + n * cell + 20
    height = margin + n * cell + 20
    peak = counts.max() if counts.max() > 0 else 1
    body = [f'<text x="{margin + n * cell / 2}" y="24" text-anchor="middle" font-size="15">predicted</text>']
    body.append(
        f'<text x="18" y="{margin + n * cell / 2}" text-anchor="middle" font-size="15" '
        f'transform="rotate(-90 18 {margin + n * cell / 2})">true</text>'
    )
    for t in range(n):
        body.append(
            f'<text x="{margin - 8}" y="{margin + t * cell + cell / 2 + 5}" text-anchor="end" '
            f'font-size="13">{names[t]}</text>'
        )
        body.append(
            f'<text x="{margin + t * cell + cell / 2}" y="{margin - 10}" text-anchor="middle" '
            f'font-size="13">{names[t]}</text>'
        )
        for p in range(n):
            x, y = margin + p * cell, margin + t * cell
            fill = _heat_color(counts[t, p] / peak)
            body.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{fill}" stroke="#444"/>'
            )
            body.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 5}" text-anchor="middle" '
                f'font-size="14">{int(counts[t, p])}</text>'
            )
    return _document(width, height, body, "confusion matrix")


def curves_svg(rows: list[tuple[int, str, float]]) -> str:
    """Loss-per-epoch polylines, one per stage."""
    width, height, margin = 560, 360, 55
    stages = []
    for _, stage, _ in rows:
        if stage not in stages:
            stages.append(stage)
    losses = [loss for _, _, loss in rows]
    epochs = [epoch for epoch, _, _ in rows]
    lo, hi = min(losses), max(losses)
    if hi == lo:
        hi = lo + 1.0
    max_epoch = max(epochs) if max(epochs) > 0 else 1

    def sx(epoch):
        return margin + (width - 2 * margin) * epoch / max_epoch

    def sy(loss):
        return height - margin - (height - 2 * margin) * (loss - lo) / (hi - lo)

    body = [
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="#222"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="#222"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="14">epoch</text>',
        f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="14" transform="rotate(-90 16 {height / 2})">loss</text>',
        f'<text x="{margin - 6}" y="{sy(lo) + 4}" text-anchor="end" font-size="11">{_fmt(lo)}</text>',
        f'<text x="{margin - 6}" y="{sy(hi) + 4}" text-anchor="end" font-size="11">{_fmt(hi)}</text>',
    ]
    for k, stage in enumerate(stages):
        pts = [(epoch, loss) for epoch, s, loss in rows if s == stage]
        color = _PALETTE[k % len(_PALETTE)]
        path = " ".join(f"{_fmt(sx(e))},{_fmt(sy(v))}" for e, v in pts)
        body.append(f'<polyline class="curve" points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(
            f'<text x="{width - margin}" y="{margin + 16 * k}" text-anchor="end" font-size="12" '
            f'fill="{color}">{stage}</text>'
        )
    return _document(width, height, body, "loss curves")


def scatter_svg(points: np.ndarray, labels: np.ndarray) -> str:
    """2-D embedding scatter, colored by class."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    width, height, margin = 480, 480, 40
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    span[span == 0] = 1.0

    def sx(v):
        return margin + (width - 2 * margin) * (v - lo[0]) / span[0]

    def sy(v):
        return height - margin - (height - 2 * margin) * (v - lo[1]) / span[1]

    body = []
    for class_id in sorted({int(label) for label in labels}):
        color = _PALETTE[class_id % len(_PALETTE)]
        body.append(
            f'<text x="{width - margin}" y="{margin + 16 * class_id}" text-anchor="end" '
            f'font-size="12" fill="{color}">class {class_id}</text>'
        )
    for (x, y), label in zip(points, labels):
        color = _PALETTE[int(label) % len(_PALETTE)]
        body.append(
            f'<circle class="point" cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" '
            f'fill="{color}" fill-opacity="0.7"/>'
        )
    return _document(width, height, body, "embedding scatter")


def write_svg(content: str, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(content)
    return path
