"""Response-map confidence scores and the tracking-failure gate.

``apce`` is the classic peak-to-correlation-energy sharpness measure; it is
invariant to shifting and positive scaling of the map, and for any
non-constant map it is >= 1 (every squared deviation from the minimum is
bounded by the squared peak-to-minimum range). ``apcep`` squares the
peak-energy ratio built from F_max^2 - F_min^2, which stretches the score
range upward on sharp maps and collapses it on flat ones, making
confident and failing frames much easier to separate with a single
threshold. A constant map carries no target evidence and scores 0 by
definition rather than raising on the zero denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _validate_map(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("confidence score of an empty map is undefined")
    if not np.all(np.isfinite(arr)):
        raise ValueError("response map contains NaN or infinite values")
    return arr


def apce(values) -> float:
    """|F_max - F_min|^2 over the mean squared deviation from F_min."""
    arr = _validate_map(values)
    f_min = arr.min()
    f_max = arr.max()
    denom = np.mean((arr - f_min) ** 2)
    if denom == 0.0:
        return 0.0
    return float((f_max - f_min) ** 2 / denom)


def apcep(values) -> float:
    """((F_max^2 - F_min^2) / mean squared deviation from F_min)^2.

    Equals apce^2 exactly whenever F_min = 0.
    """
    arr = _validate_map(values)
    f_min = arr.min()
    f_max = arr.max()
    denom = np.mean((arr - f_min) ** 2)
    if denom == 0.0:
        return 0.0
    return float(((f_max**2 - f_min**2) / denom) ** 2)


@dataclass
class ConfidenceHistory:
    """Sliding window of recent confidence values owned by one tracker."""

    capacity: int = 30
    window: list = field(default_factory=list)

    def append(self, value: float) -> None:
        self.window.append(float(value))
        if len(self.window) > self.capacity:
            del self.window[: len(self.window) - self.capacity]

    @property
    def running_mean(self) -> float:
        if not self.window:
            return 0.0
        return float(np.mean(self.window))

    def __len__(self) -> int:
        return len(self.window)


def gate(history: ConfidenceHistory, current: float, ratio: float, warmup: int = 3) -> bool:
    """True when the current confidence clears ``ratio`` times the recent mean.

    The first ``warmup`` frames always pass (no meaningful baseline yet).
    ``current`` is appended to the history either way, so a long occlusion
    drags the baseline down and lets the tracker re-engage.
    """
    if not (0 < ratio <= 1):
        raise ValueError(f"gate ratio must lie in (0, 1], got {ratio}")
    confident = len(history) < warmup or current >= ratio * history.running_mean
    history.append(current)
    return confident
