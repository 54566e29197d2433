"""SVG stick-figure rendering of frame sequences for qualitative inspection."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import ChannelLayout


def _scale_points(points: np.ndarray, size: int, margin: int) -> np.ndarray:
    """Map (x, y) points into the SVG viewport, preserving aspect ratio."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    scale = (size - 2 * margin) / span.max()
    return margin + (points - lo) * scale


def render_frame_svg(frame: np.ndarray, layout: ChannelLayout,
                     size: int = 320) -> str:
    """One frame as SVG: joint circles with a connecting chain, landmark
    dots, and a bar strip for AU intensities."""
    margin = 20
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size + 40}" viewBox="0 0 {size} {size + 40}">',
             f'<rect width="{size}" height="{size + 40}" fill="white"/>']

    joints = frame[layout.manual_slice].reshape(-1, 3)[:, :2]
    if len(joints):
        pts = _scale_points(joints, size, margin)
        chain = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        parts.append(f'<polyline points="{chain}" fill="none" '
                     'stroke="#bbbbbb" stroke-width="1"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" '
                         'fill="#3366cc"/>')

    landmarks = frame[layout.landmark_slice].reshape(
        -1, layout.landmark_coords)[:, :2]
    if len(landmarks):
        pts = _scale_points(landmarks, size, margin)
        for x, y in pts:
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="1.5" '
                         'fill="#cc3333"/>')

    aus = frame[layout.au_slice]
    if len(aus):
        bar_w = (size - 2 * margin) / len(aus)
        for i, value in enumerate(aus):
            height = 30.0 * min(max(float(value), 0.0), 5.0) / 5.0
            x = margin + i * bar_w
            parts.append(f'<rect x="{x:.1f}" y="{size + 35 - height:.1f}" '
                         f'width="{bar_w * 0.8:.1f}" height="{height:.1f}" '
                         'fill="#33aa55"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_sequence(frames: np.ndarray, layout: ChannelLayout, out_dir,
                    prefix: str = "frame", every: int = 1) -> list[Path]:
    """Write every k-th frame of a sequence as an SVG file."""
    if every < 1:
        raise ValueError("every must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in range(0, frames.shape[0], every):
        path = out_dir / f"{prefix}_{t:04d}.svg"
        path.write_text(render_frame_svg(frames[t], layout), encoding="utf-8")
        written.append(path)
    return written
