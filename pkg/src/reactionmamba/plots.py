"""Deterministic SVG rendering of motion sequences.

Hand-written SVG (no plotting library) so identical inputs produce
byte-identical files, which makes golden-file tests possible. Two modes:
joint trajectories projected onto the x-y plane, and a strip of sampled
skeleton poses.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .model import MotionSequence

WIDTH, HEIGHT = 800, 500
MARGIN = 40
LEGEND_ROW = 18
PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb")


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def _bounds(motions: list[MotionSequence]) -> tuple[float, float, float, float]:
    xs = np.concatenate([m.joints()[..., 0].reshape(-1) for m in motions])
    ys = np.concatenate([m.joints()[..., 1].reshape(-1) for m in motions])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    # degenerate (static/point) data still needs a nonzero viewport
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    return x0, x1, y0, y1


def _projector(bounds, width=WIDTH, height=HEIGHT):
    x0, x1, y0, y1 = bounds
    sx = (width - 2 * MARGIN) / (x1 - x0)
    sy = (height - 2 * MARGIN) / (y1 - y0)

    def project(x, y):
        px = MARGIN + (x - x0) * sx
        py = height - MARGIN - (y - y0) * sy  # svg y grows downward
        return px, py

    return project


def _legend(labels: list[str]) -> list[str]:
    parts = []
    for i, label in enumerate(labels):
        color = PALETTE[i % len(PALETTE)]
        y = MARGIN + i * LEGEND_ROW
        parts.append(
            f'<rect x="{WIDTH - 190}" y="{y - 10}" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{WIDTH - 172}" y="{y}" font-size="12" font-family="monospace">{label}</text>'
        )
    return parts


def render_svg(motions: list[tuple[str, MotionSequence]], mode: str = "trajectory",
               max_poses: int = 8) -> str:
    """Render labeled motions to an SVG string."""
    if not motions:
        raise UsageError("nothing to plot")
    if mode not in ("trajectory", "skeleton-frames"):
        raise UsageError(f"unknown plot mode {mode!r}")
    labels = [label for label, _ in motions]
    seqs = [m for _, m in motions]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    project = _projector(_bounds(seqs))

    if mode == "trajectory":
        for i, seq in enumerate(seqs):
            color = PALETTE[i % len(PALETTE)]
            joints = seq.joints()
            for j in range(seq.joint_count):
                points = " ".join(
                    f"{_fmt(px)},{_fmt(py)}"
                    for px, py in (project(x, y) for x, y in joints[:, j, :2])
                )
                parts.append(
                    f'<polyline points="{points}" fill="none" stroke="{color}" '
                    f'stroke-width="1.2" opacity="0.8"/>'
                )
    else:
        for i, seq in enumerate(seqs):
            color = PALETTE[i % len(PALETTE)]
            count = min(max_poses, seq.t)
            frame_ids = np.linspace(0, seq.t - 1, count).astype(int)
            joints = seq.joints()
            for t in frame_ids:
                for j in range(seq.joint_count):
                    px, py = project(joints[t, j, 0], joints[t, j, 1])
                    parts.append(
                        f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" '
                        f'fill="{color}" opacity="0.7"/>'
                    )

    parts += _legend(labels)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_motions(paths_and_motions: list[tuple[str, MotionSequence]], out_path: str,
                 mode: str = "trajectory") -> None:
    svg = render_svg(paths_and_motions, mode=mode)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
