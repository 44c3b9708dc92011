"""Crop geometry, training-pair sampling and tensor conversion.

Crops follow the classic Siamese recipe: a square window around the target
center whose side adds a context margin of half the box perimeter, resized
to 127 (exemplar) or 255 (instance). Regions falling outside the frame are
filled with the frame's per-channel means so border targets do not import
black edges into the feature statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
import torch

from .errors import DataError
from .geometry import TargetState
from .labels import (DEFAULT_RADIUS_PX, DEFAULT_STRIDE, LabelMap,
                     balance_weights, make_label_map)
from .specs import EXEMPLAR_SIZE, INSTANCE_SIZE, RESPONSE_SIZE, TOTAL_STRIDE

DEFAULT_CONTEXT = 0.5


def context_side(box: TargetState, context: float = DEFAULT_CONTEXT) -> float:
    """Side of the square exemplar region: sqrt((w + c(w+h)) * (h + c(w+h)))."""
    margin = context * (box.width + box.height)
    return float(np.sqrt((box.width + margin) * (box.height + margin)))


def crop_centered(frame: np.ndarray, cx: float, cy: float, side: float,
                  out_size: int, pad_value=None) -> np.ndarray:
    """Square crop of ``side`` pixels around (cx, cy), resized to ``out_size``.

    Out-of-frame regions are padded with ``pad_value`` (default: the frame's
    channel means). Returns float32 HxWxC.
    """
    if side <= 0:
        raise ValueError(f"crop side must be positive, got {side}")
    if pad_value is None:
        pad_value = frame.reshape(-1, frame.shape[-1]).mean(axis=0)
    pad_value = tuple(float(v) for v in np.atleast_1d(pad_value))
    if len(pad_value) == 1:
        pad_value = pad_value * frame.shape[-1]

    size = max(int(round(side)), 2)
    x1 = int(round(cx - (size - 1) / 2.0))
    y1 = int(round(cy - (size - 1) / 2.0))
    x2, y2 = x1 + size, y1 + size
    h, w = frame.shape[:2]
    npad = max(0, -x1, -y1, x2 - w, y2 - h)
    patch_src = frame.astype(np.float32, copy=False)
    if npad > 0:
        patch_src = cv2.copyMakeBorder(
            patch_src, npad, npad, npad, npad, cv2.BORDER_CONSTANT, value=pad_value
        )
    patch = patch_src[y1 + npad : y2 + npad, x1 + npad : x2 + npad]
    if patch.shape[0] != out_size:
        patch = cv2.resize(patch, (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    return np.ascontiguousarray(patch, dtype=np.float32)


def crop_patch(frame: np.ndarray, box: TargetState, out_size: int,
               context: float = DEFAULT_CONTEXT) -> np.ndarray:
    """Context crop for a target box; side scales with out_size / 127."""
    if box.width <= 0 or box.height <= 0:
        raise ValueError(f"box must have positive size, got {box.width}x{box.height}")
    side = context_side(box, context) * out_size / EXEMPLAR_SIZE
    return crop_centered(frame, box.center_x, box.center_y, side, out_size)


def to_tensor(patch: np.ndarray) -> torch.Tensor:
    """HxWxC float image in [0, 255] -> (C, H, W) float32 tensor in [0, 1]."""
    arr = np.ascontiguousarray(patch, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)


@dataclass
class TrainingPair:
    """One exemplar/instance crop pair with its label grid."""

    exemplar: torch.Tensor       # (3, 127, 127)
    instance: torch.Tensor       # (3, 255, 255)
    label: LabelMap              # 17x17
    weights: np.ndarray


class PairSampler:
    """Draws exemplar/instance pairs from annotated sequences.

    Frames come from the same sequence within ``max_gap`` frames of each
    other. The instance crop center is shifted so the target lands up to
    ``translate_jitter`` instance pixels off-center, and the crop side is
    jittered by up to ``scale_jitter``; the label center records the induced
    displacement. All randomness flows through the supplied generator, so a
    fixed seed reproduces the identical pair stream.
    """

    def __init__(self, sequences, rng: np.random.Generator, max_gap: int = 100,
                 translate_jitter: float = 32.0, scale_jitter: float = 0.05,
                 context: float = DEFAULT_CONTEXT, label_radius: float = DEFAULT_RADIUS_PX):
        self.sequences = [s for s in sequences if len(s) >= 2]
        if not self.sequences:
            raise DataError("no sequence with at least two annotated frames")
        self.rng = rng
        self.max_gap = max_gap
        self.translate_jitter = translate_jitter
        self.scale_jitter = scale_jitter
        self.context = context
        self.label_radius = label_radius

    def _choose_frames(self, sequence):
        """Exemplar/instance frame indices within the temporal gap."""
        n = len(sequence)
        i = int(self.rng.integers(n))
        lo, hi = max(0, i - self.max_gap), min(n - 1, i + self.max_gap)
        candidates = [j for j in range(lo, hi + 1) if j != i]
        j = candidates[int(self.rng.integers(len(candidates)))]
        return i, j

    def sample(self) -> TrainingPair:
        seq = self.sequences[int(self.rng.integers(len(self.sequences)))]
        i, j = self._choose_frames(seq)

        exemplar = crop_patch(seq.read_frame(i), seq.ground_truth[i],
                              EXEMPLAR_SIZE, self.context)

        frame_x = seq.read_frame(j)
        box_x = seq.ground_truth[j]
        s_x = context_side(box_x, self.context) * INSTANCE_SIZE / EXEMPLAR_SIZE
        side = s_x * (1.0 + self.rng.uniform(-self.scale_jitter, self.scale_jitter))
        # displacement of the target from the crop center, in instance pixels
        dx, dy = self.rng.uniform(-self.translate_jitter, self.translate_jitter, size=2)
        px_per_instance = side / INSTANCE_SIZE
        instance = crop_centered(
            frame_x,
            box_x.center_x - dx * px_per_instance,
            box_x.center_y - dy * px_per_instance,
            side,
            INSTANCE_SIZE,
        )

        center = (
            (RESPONSE_SIZE - 1) / 2.0 + dy / TOTAL_STRIDE,
            (RESPONSE_SIZE - 1) / 2.0 + dx / TOTAL_STRIDE,
        )
        label = make_label_map(RESPONSE_SIZE, DEFAULT_STRIDE, self.label_radius, center)
        return TrainingPair(
            exemplar=to_tensor(exemplar),
            instance=to_tensor(instance),
            label=label,
            weights=balance_weights(label),
        )


class FixedPairSampler:
    """Always returns the same pair; the overfit-one-batch sanity harness."""

    def __init__(self, pair: TrainingPair):
        self.pair = pair

    def sample(self) -> TrainingPair:
        return self.pair
