"""OTB-style sequence ingestion.

Expected on-disk layout per sequence::

    <root>/<name>/img/0001.jpg ...
    <root>/<name>/groundtruth_rect.txt   # one "x,y,w,h" line per frame

Annotation lines use the top-left convention; comma or tab delimiters are
accepted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import DataError
from .geometry import TargetState

_IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp")


@dataclass
class TrackSequence:
    name: str
    frame_paths: list
    ground_truth: list           # one TargetState per frame
    attributes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame_paths)

    def read_frame(self, index: int) -> np.ndarray:
        frame = cv2.imread(self.frame_paths[index], cv2.IMREAD_COLOR)
        if frame is None:
            raise DataError(f"{self.name}: cannot read frame {self.frame_paths[index]}")
        return frame


def parse_rect_line(line: str, lineno: int, path: str) -> TargetState:
    text = line.strip().replace("\t", ",").replace(" ", ",")
    parts = [p for p in text.split(",") if p]
    if len(parts) != 4:
        raise DataError(f"{path}:{lineno}: expected 'x,y,w,h', got {line.strip()!r}")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric field in {line.strip()!r}")
    if w <= 0 or h <= 0:
        raise DataError(f"{path}:{lineno}: non-positive box {w}x{h}")
    return TargetState.from_topleft(x, y, w, h)


def load_sequence(path: str) -> TrackSequence:
    """Parse one sequence directory into frames + per-frame ground truth."""
    name = os.path.basename(os.path.normpath(path))
    img_dir = os.path.join(path, "img")
    gt_path = os.path.join(path, "groundtruth_rect.txt")
    if not os.path.isdir(img_dir):
        raise DataError(f"{path}: missing img/ directory")
    if not os.path.isfile(gt_path):
        raise DataError(f"{path}: missing groundtruth_rect.txt")

    frame_paths = sorted(
        os.path.join(img_dir, f)
        for f in os.listdir(img_dir)
        if f.lower().endswith(_IMAGE_EXTS)
    )
    boxes = []
    with open(gt_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            boxes.append(parse_rect_line(line, lineno, gt_path))
    if len(boxes) != len(frame_paths):
        raise DataError(
            f"{path}: {len(frame_paths)} frames but {len(boxes)} annotation lines"
        )
    if not frame_paths:
        raise DataError(f"{path}: no frames found")
    return TrackSequence(name=name, frame_paths=frame_paths, ground_truth=boxes)


def discover_sequences(root: str) -> list:
    """All loadable sequence directories under ``root``, sorted by name."""
    if not os.path.isdir(root):
        raise DataError(f"dataset root {root} does not exist")
    names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
    )
    return [os.path.join(root, d) for d in names]
