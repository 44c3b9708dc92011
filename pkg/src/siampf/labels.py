"""Training label maps and the class-balanced logistic loss.

A response cell is a positive example when its offset from the target
center, scaled back to input pixels by the network stride, lies within a
fixed radius; everything else is negative. Positive and negative cells
then receive equal total weight so the (much larger) negative ring cannot
dominate the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ShapeError

# Defaults: positive radius in input pixels and the network's total stride.
DEFAULT_RADIUS_PX = 16.0
DEFAULT_STRIDE = 8


@dataclass(frozen=True)
class LabelMap:
    """A square grid of {+1, -1} labels with its generating parameters."""

    values: np.ndarray          # (size, size) int8 of +1/-1
    radius_px: float
    stride: int
    center: tuple               # (row, col), may be fractional

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def positive_count(self) -> int:
        return int(np.sum(self.values > 0))


def make_label_map(size: int, stride: int, radius_px: float, center=None) -> LabelMap:
    """Build the +-1 label grid: +1 where stride * ||u - c||_2 <= radius.

    ``center`` is a (row, col) grid coordinate and may be fractional (the
    target does not land exactly on a cell in jittered training pairs).
    Defaults to the geometric center of the grid.
    """
    if size < 1:
        raise ValueError(f"label map size must be >= 1, got {size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if radius_px < 0:
        raise ValueError(f"radius must be >= 0, got {radius_px}")
    if center is None:
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
    cy, cx = float(center[0]), float(center[1])
    if not (0 <= cy <= size - 1 and 0 <= cx <= size - 1):
        raise ValueError(f"label center {center} lies outside the {size}x{size} grid")

    rows = np.arange(size, dtype=np.float64)[:, None]
    cols = np.arange(size, dtype=np.float64)[None, :]
    dist_px = stride * np.sqrt((rows - cy) ** 2 + (cols - cx) ** 2)
    values = np.where(dist_px <= radius_px, 1, -1).astype(np.int8)
    return LabelMap(values=values, radius_px=float(radius_px), stride=int(stride), center=(cy, cx))


def balance_weights(labels: LabelMap) -> np.ndarray:
    """Per-cell weights: 0.5 mass on each class; uniform if one class is absent."""
    values = labels.values
    n = values.size
    n_pos = int(np.sum(values > 0))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.full(values.shape, 1.0 / n, dtype=np.float64)
    weights = np.where(values > 0, 0.5 / n_pos, 0.5 / n_neg)
    return weights.astype(np.float64)


def _softplus(x):
    # log(1 + exp(x)) without overflow for large |x|
    return torch.clamp(x, min=0) + torch.log1p(torch.exp(-torch.abs(x)))


def logistic_loss(response, labels, weights) -> torch.Tensor:
    """Weighted per-cell logistic loss: sum_u w[u] * log(1 + exp(-y[u] r[u])).

    ``response`` may be a single (H, W) map or a batch (B, H, W); labels and
    weights broadcast against it. Batched inputs return the mean of the
    per-map losses. Numerically stable for |response| up to at least 1e4.
    """
    response = _as_tensor(response)
    y = _as_tensor(labels.values if isinstance(labels, LabelMap) else labels).to(response.dtype)
    w = _as_tensor(weights).to(response.dtype)

    if response.shape[-2:] != y.shape[-2:] or response.shape[-2:] != w.shape[-2:]:
        raise ShapeError(
            f"response {tuple(response.shape)}, labels {tuple(y.shape)} and "
            f"weights {tuple(w.shape)} do not align"
        )
    per_cell = w * _softplus(-y * response)
    if response.dim() == 2:
        return per_cell.sum()
    return per_cell.sum(dim=(-2, -1)).mean()


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)
