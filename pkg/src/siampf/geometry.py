"""Bounding-box state and overlap arithmetic."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class TargetState:
    """Axis-aligned box as center + size, in pixels."""

    center_x: float
    center_y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {self.width}x{self.height}")

    @classmethod
    def from_topleft(cls, x: float, y: float, w: float, h: float) -> "TargetState":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def to_topleft(self):
        return (self.center_x - self.width / 2.0,
                self.center_y - self.height / 2.0,
                self.width, self.height)

    def area(self) -> float:
        return self.width * self.height

    def clamped_center(self, frame_w: int, frame_h: int) -> "TargetState":
        cx = min(max(self.center_x, 0.0), frame_w - 1.0)
        cy = min(max(self.center_y, 0.0), frame_h - 1.0)
        return TargetState(cx, cy, self.width, self.height)


def iou(a: TargetState, b: TargetState) -> float:
    """Intersection area over union area, in [0, 1].

    All areas are computed from the same corner coordinates so identical
    boxes score exactly 1.0 (mixing corner and width/height arithmetic
    lets rounding push the ratio past 1 by an ulp).
    """
    ax1, ay1, aw, ah = a.to_topleft()
    bx1, by1, bw, bh = b.to_topleft()
    ax2, ay2 = ax1 + aw, ay1 + ah
    bx2, by2 = bx1 + bw, by1 + bh
    ix = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    iy = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = ix * iy
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def center_distance(a: TargetState, b: TargetState) -> float:
    return ((a.center_x - b.center_x) ** 2 + (a.center_y - b.center_y) ** 2) ** 0.5
