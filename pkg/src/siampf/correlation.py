"""Cross-correlation response maps, branch fusion and score-map upsampling.

All operations are pure functions of their inputs and stay in torch so the
same code path serves both the differentiable training graph and tracking
inference. Feature maps are (C, H, W) tensors; response maps are (H, W).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ShapeError


@dataclass(frozen=True)
class FusionConfig:
    """Balance between the backbone and side-branch response maps."""

    fusion_lambda: float = 0.75
    bias_v: float = 0.0
    bias_a: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.fusion_lambda <= 1.0):
            raise ValueError(f"lambda must lie in [0, 1], got {self.fusion_lambda}")


def xcorr(template: torch.Tensor, instance: torch.Tensor, bias: float = 0.0) -> torch.Tensor:
    """Dense cross-correlation of a template over an instance feature map.

    out[u, v] = sum over channels and template support of
    template * instance window at (u, v), plus a uniform bias.
    Output side = instance side - template side + 1 (valid placement only).
    """
    if template.dim() != 3 or instance.dim() != 3:
        raise ShapeError(
            f"xcorr expects (C, H, W) inputs, got {tuple(template.shape)} "
            f"and {tuple(instance.shape)}"
        )
    if template.shape[0] != instance.shape[0]:
        raise ShapeError(
            f"channel mismatch: template has {template.shape[0]}, "
            f"instance has {instance.shape[0]}"
        )
    if template.shape[1] > instance.shape[1] or template.shape[2] > instance.shape[2]:
        raise ShapeError(
            f"template {tuple(template.shape[1:])} larger than "
            f"instance {tuple(instance.shape[1:])}"
        )
    out = F.conv2d(instance.unsqueeze(0), template.unsqueeze(0))[0, 0]
    return out + bias


def batch_xcorr(templates: torch.Tensor, instances: torch.Tensor) -> torch.Tensor:
    """Per-pair cross-correlation for batches: (B,C,h,w) x (B,C,H,W) -> (B,Ho,Wo).

    Implemented as one grouped convolution with each template acting as the
    filter for its own instance.
    """
    if templates.dim() != 4 or instances.dim() != 4:
        raise ShapeError("batch_xcorr expects (B, C, H, W) inputs")
    if templates.shape[:2] != instances.shape[:2]:
        raise ShapeError(
            f"batch/channel mismatch: {tuple(templates.shape[:2])} vs "
            f"{tuple(instances.shape[:2])}"
        )
    b, c, h, w = instances.shape
    out = F.conv2d(instances.reshape(1, b * c, h, w), templates, groups=b)
    return out.reshape(b, out.shape[-2], out.shape[-1])


def fuse(r_v: torch.Tensor, r_a: torch.Tensor, cfg: FusionConfig) -> torch.Tensor:
    """Convex combination S = lambda * r_v + (1 - lambda) * r_a."""
    if r_v.shape != r_a.shape:
        raise ShapeError(f"response shapes differ: {tuple(r_v.shape)} vs {tuple(r_a.shape)}")
    lam = cfg.fusion_lambda
    return lam * r_v + (1.0 - lam) * r_a


def upsample_response(response: torch.Tensor, target_size: int) -> torch.Tensor:
    """Bicubic upsampling of a square response map for sub-stride localization."""
    if response.dim() != 2:
        raise ShapeError(f"expected a 2D response map, got shape {tuple(response.shape)}")
    size = response.shape[0]
    if response.shape[1] != size:
        raise ShapeError(f"response map must be square, got {tuple(response.shape)}")
    if target_size < size:
        raise ValueError(f"target size {target_size} smaller than map size {size}")
    if target_size == size:
        return response.clone()
    return F.interpolate(
        response[None, None],
        size=(target_size, target_size),
        mode="bicubic",
        align_corners=False,
    )[0, 0]
