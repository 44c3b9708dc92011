"""Synthetic moving-shape sequences for desk-scale training and benchmarks.

Each sequence is a brightly colored textured blob translating (and
optionally slowly rescaling) over a smooth static background, written in
the same on-disk layout the evaluation harness ingests. Colors, sizes,
velocities and trajectories derive from the supplied generator only.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .geometry import TargetState

_MARGIN = 70  # keep the object this far from frame edges so crops rarely pad


def _smooth_background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    coarse = rng.uniform(40, 150, size=(6, 8, 3)).astype(np.float32)
    bg = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_CUBIC)
    return np.clip(bg, 0, 255).astype(np.uint8)


def _object_palette(rng: np.random.Generator):
    base = rng.uniform(170, 255, size=3)
    dim_channel = int(rng.integers(3))
    base[dim_channel] = rng.uniform(0, 60)
    inner = np.clip(base * 0.45, 0, 255)
    return base, inner


def _draw_object(frame: np.ndarray, cx: float, cy: float, w: float, h: float,
                 color, inner_color) -> None:
    center = (int(round(cx)), int(round(cy)))
    axes = (max(int(round(w / 2)), 2), max(int(round(h / 2)), 2))
    cv2.ellipse(frame, center, axes, 0, 0, 360, tuple(float(c) for c in color), -1)
    inner_axes = (max(axes[0] // 2, 1), max(axes[1] // 2, 1))
    cv2.ellipse(frame, center, inner_axes, 0, 0, 360,
                tuple(float(c) for c in inner_color), -1)
    cv2.ellipse(frame, center, axes, 0, 0, 360, (20.0, 20.0, 20.0), 2)


def make_synthetic_sequence(out_dir: str, num_frames: int, rng: np.random.Generator,
                            frame_size=(320, 240), max_step: float = 3.0,
                            scale_drift: float = 0.0, object_size=(44, 40),
                            velocity=None) -> None:
    """Write one sequence directory: img/*.jpg + groundtruth_rect.txt.

    ``velocity`` pins (vx, vy) in px/frame; otherwise speed and heading are
    drawn from ``rng`` with |v| <= max_step.
    """
    width, height = frame_size
    img_dir = os.path.join(out_dir, "img")
    os.makedirs(img_dir, exist_ok=True)

    background = _smooth_background(rng, width, height)
    color, inner = _object_palette(rng)
    w, h = (float(object_size[0]), float(object_size[1]))
    cx = rng.uniform(_MARGIN + w, width - _MARGIN - w)
    cy = rng.uniform(_MARGIN + h, height - _MARGIN - h)
    if velocity is not None:
        vx, vy = (float(velocity[0]), float(velocity[1]))
    else:
        angle = rng.uniform(0, 2 * np.pi)
        step = rng.uniform(0.5, 1.0) * max_step
        vx, vy = step * np.cos(angle), step * np.sin(angle)
    drift = rng.uniform(-scale_drift, scale_drift) if scale_drift > 0 else 0.0

    lines = []
    for idx in range(num_frames):
        frame = background.copy()
        _draw_object(frame, cx, cy, w, h, color, inner)
        box = TargetState(cx, cy, w, h)
        x, y, bw, bh = box.to_topleft()
        lines.append(f"{x:.2f},{y:.2f},{bw:.2f},{bh:.2f}")
        cv2.imwrite(os.path.join(img_dir, f"{idx + 1:04d}.jpg"),
                    frame, [cv2.IMWRITE_JPEG_QUALITY, 95])

        cx, cy = cx + vx, cy + vy
        if not (_MARGIN < cx < width - _MARGIN):
            vx = -vx
            cx = float(np.clip(cx, _MARGIN, width - _MARGIN))
        if not (_MARGIN < cy < height - _MARGIN):
            vy = -vy
            cy = float(np.clip(cy, _MARGIN, height - _MARGIN))
        w *= 1.0 + drift
        h *= 1.0 + drift

    with open(os.path.join(out_dir, "groundtruth_rect.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def make_synthetic_dataset(root: str, num_sequences: int, frames_per_sequence: int,
                           rng: np.random.Generator, **kwargs) -> list:
    """Write ``num_sequences`` sequences under ``root``; returns their paths."""
    paths = []
    for i in range(num_sequences):
        path = os.path.join(root, f"shape_{i:03d}")
        make_synthetic_sequence(path, frames_per_sequence, rng, **kwargs)
        paths.append(path)
    return paths
