"""Online tracking loop.

Per frame: crop a small scale pyramid of search regions, score each with
both correlation heads, fuse, upsample the fused maps, pick the best scale
under a side-change penalty, blend with a cosine window, and convert the
windowed peak offset back to frame pixels. A confidence score of the
chosen (pre-window) map feeds a failure gate: on low confidence the scale
update is skipped and the displacement damped, since a flat response still
carries weak localization signal but no reliable size evidence.

The exemplar features are computed once at init and never updated; the
side-branch exemplar features pass through the channel attention block.

Flags used by the ablation matrix: ``use_branch`` (off forces the fused
map to the backbone head alone), ``use_attention`` (off bypasses the
attention block), ``use_apcep`` (off disables the gate entirely), and
``use_pretrained`` (a provenance flag for reports; at inference time the
checkpoint already fixes the weights).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .confidence import ConfidenceHistory, apcep, gate
from .correlation import upsample_response
from .data import DEFAULT_CONTEXT, context_side, crop_centered, to_tensor
from .errors import DataError
from .geometry import TargetState
from .network import SiamPFModel
from .specs import EXEMPLAR_SIZE, INSTANCE_SIZE, RESPONSE_SIZE, TOTAL_STRIDE


@dataclass
class TrackerConfig:
    num_scales: int = 3
    scale_step: float = 1.0375
    scale_penalty: float = 0.9745
    scale_damping: float = 0.59
    window_influence: float = 0.176
    fusion_lambda: float = 0.75
    response_upsample: int = 272
    context: float = DEFAULT_CONTEXT
    gate_ratio: float = 0.3
    gate_window: int = 30
    gate_warmup: int = 3
    gate_strategy: str = "damp"          # "damp" | "freeze"
    use_pretrained: bool = True
    use_branch: bool = True
    use_attention: bool = True
    use_apcep: bool = True

    def __post_init__(self):
        if self.num_scales < 1 or self.num_scales % 2 == 0:
            raise ValueError(f"num_scales must be odd, got {self.num_scales}")
        if self.scale_step <= 1.0:
            raise ValueError(f"scale_step must exceed 1, got {self.scale_step}")
        for name in ("scale_penalty", "scale_damping", "window_influence"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not (0.0 <= self.fusion_lambda <= 1.0):
            raise ValueError(f"lambda must lie in [0, 1], got {self.fusion_lambda}")
        if self.response_upsample < RESPONSE_SIZE:
            raise ValueError("response_upsample must be >= the raw response size")
        if self.gate_strategy not in ("damp", "freeze"):
            raise ValueError(f"unknown gate strategy {self.gate_strategy!r}")

    @property
    def effective_lambda(self) -> float:
        """Fusion weight with the side branch disabled collapsing to 1."""
        return 1.0 if not self.use_branch else self.fusion_lambda


@dataclass
class TrackerState:
    """Mutable per-sequence state; exemplar features are fixed at init."""

    target: TargetState
    search_side: float                   # instance crop side at scale 1, frame px
    min_side: float
    max_side: float
    avg_chans: np.ndarray
    exemplar_v: torch.Tensor             # (1, C, 3, 3)
    exemplar_a: torch.Tensor = None      # (1, C, 5, 5), attention-weighted
    confidence: ConfidenceHistory = field(default_factory=ConfidenceHistory)
    frame_index: int = 0


def cosine_window(size: int) -> np.ndarray:
    """Outer product of Hann vectors, normalized to unit sum."""
    if size < 1:
        raise ValueError(f"window size must be >= 1, got {size}")
    hann = np.hanning(size)
    window = np.outer(hann, hann)
    total = window.sum()
    if total == 0:  # size 2: both Hann samples sit on the zero endpoints
        return np.full((size, size), 1.0 / (size * size))
    return window / total


def blend_window(response: np.ndarray, window: np.ndarray, influence: float) -> np.ndarray:
    """(1 - influence) * response + influence * window, elementwise."""
    if response.shape != window.shape:
        raise ValueError(f"shape mismatch: {response.shape} vs {window.shape}")
    return (1.0 - influence) * response + influence * window


class Tracker:
    """Runs one frozen model over sequences; one TrackerState per sequence."""

    def __init__(self, model: SiamPFModel, cfg: TrackerConfig = None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self.model = model.eval()
        self.window = cosine_window(self.cfg.response_upsample)
        half = self.cfg.num_scales // 2
        self.scale_factors = self.cfg.scale_step ** np.arange(-half, half + 1)

    def init(self, frame: np.ndarray, box: TargetState) -> TrackerState:
        """Embed the first-frame target; returns fresh tracking state."""
        self._check_frame(frame)
        h, w = frame.shape[:2]
        if not (0 <= box.center_x < w and 0 <= box.center_y < h):
            raise ValueError(f"initial box center {box.center_x, box.center_y} outside frame")
        avg_chans = frame.reshape(-1, frame.shape[-1]).mean(axis=0)
        s_z = context_side(box, self.cfg.context)
        patch = crop_centered(frame, box.center_x, box.center_y, s_z,
                              EXEMPLAR_SIZE, avg_chans)
        z = to_tensor(patch).unsqueeze(0)
        with torch.no_grad():
            feats = self.model.embed_exemplar(
                z,
                use_branch=self.cfg.use_branch and self.cfg.effective_lambda < 1.0,
                use_attention=self.cfg.use_attention,
            )
        search_side = s_z * INSTANCE_SIZE / EXEMPLAR_SIZE
        return TrackerState(
            target=replace(box),
            search_side=search_side,
            min_side=0.2 * search_side,
            max_side=5.0 * search_side,
            avg_chans=avg_chans,
            exemplar_v=feats["v"],
            exemplar_a=feats["a"],
            confidence=ConfidenceHistory(capacity=self.cfg.gate_window),
        )

    def track_frame(self, state: TrackerState, frame: np.ndarray):
        """Advance one frame; returns (new TargetState, diagnostics dict)."""
        self._check_frame(frame)
        cfg = self.cfg
        frame_h, frame_w = frame.shape[:2]
        target = state.target

        crops = [
            crop_centered(frame, target.center_x, target.center_y,
                          state.search_side * f, INSTANCE_SIZE, state.avg_chans)
            for f in self.scale_factors
        ]
        x = torch.stack([to_tensor(c) for c in crops])
        lam = cfg.effective_lambda
        use_branch = cfg.use_branch and lam < 1.0
        with torch.no_grad():
            xf = self.model.embed_instance(x, use_branch=use_branch)
            n = x.shape[0]
            zv = state.exemplar_v.expand(n, -1, -1, -1).contiguous()
            fused = self.model.response_v(zv, xf["v"])
            if use_branch:
                za = state.exemplar_a.expand(n, -1, -1, -1).contiguous()
                fused = lam * fused + (1.0 - lam) * self.model.response_a(za, xf["a"])
            upsampled = torch.stack(
                [upsample_response(fused[i], cfg.response_upsample) for i in range(n)]
            ).numpy()

        peaks = upsampled.reshape(n, -1).max(axis=1)
        penalized = peaks * np.where(
            np.arange(n) == n // 2, 1.0, cfg.scale_penalty
        )
        best = int(np.argmax(penalized))
        chosen = upsampled[best]
        scale_factor = float(self.scale_factors[best])

        # confidence is scored on the zero-floored pre-window maps, the same
        # normalization the localization uses; the raw maps carry a head bias
        # whose offset would swamp the sharpness signal
        shifted_maps = upsampled - upsampled.reshape(n, -1).min(axis=1)[:, None, None]
        apcep_per_scale = [apcep(shifted_maps[i]) for i in range(n)]
        confidence_score = apcep_per_scale[best]
        confident = True
        if cfg.use_apcep:
            confident = gate(state.confidence, confidence_score,
                             cfg.gate_ratio, cfg.gate_warmup)

        shifted = shifted_maps[best]
        total = shifted.sum()
        normalized = shifted / total if total > 0 else np.full_like(chosen, 1.0 / chosen.size)
        windowed = blend_window(normalized, self.window, cfg.window_influence)

        peak_idx = np.unravel_index(int(np.argmax(windowed)), windowed.shape)
        center_off = (cfg.response_upsample - 1) / 2.0
        disp_up = np.array([peak_idx[0] - center_off, peak_idx[1] - center_off])
        # upsampled px -> response cells -> instance px -> frame px
        disp_instance = disp_up * (RESPONSE_SIZE * TOTAL_STRIDE / cfg.response_upsample)
        disp_frame = disp_instance * (state.search_side * scale_factor / INSTANCE_SIZE)

        update_scale = confident
        if not confident:
            if cfg.gate_strategy == "damp":
                disp_frame = disp_frame * 0.5
            else:
                disp_frame = disp_frame * 0.0

        new_cx = float(np.clip(target.center_x + disp_frame[1], 0, frame_w - 1))
        new_cy = float(np.clip(target.center_y + disp_frame[0], 0, frame_h - 1))
        new_w, new_h = target.width, target.height
        if update_scale:
            blended = (1.0 - cfg.scale_damping) + cfg.scale_damping * scale_factor
            state.search_side = float(
                np.clip(state.search_side * blended, state.min_side, state.max_side)
            )
            new_w *= blended
            new_h *= blended

        state.target = TargetState(new_cx, new_cy, new_w, new_h)
        state.frame_index += 1
        diagnostics = {
            "frame_index": state.frame_index,
            "apcep_per_scale": [float(v) for v in apcep_per_scale],
            "apcep": float(confidence_score),
            "raw_peak": float(peaks[best]),
            "windowed_peak": float(windowed.max()),
            "scale_index": best,
            "scale_factor": scale_factor,
        }
        if cfg.use_apcep:  # gate events appear only when the gate runs
            diagnostics["gate_passed"] = bool(confident)
        return replace(state.target), diagnostics

    def track_sequence(self, sequence, init_box: TargetState = None):
        """One-pass run over a loaded sequence; frame 0 reports the init box."""
        if init_box is None:
            init_box = sequence.ground_truth[0]
        state = self.init(sequence.read_frame(0), init_box)
        boxes = [replace(init_box)]
        diagnostics = [{"frame_index": 0, "init": True}]
        for idx in range(1, len(sequence)):
            box, diag = self.track_frame(state, sequence.read_frame(idx))
            boxes.append(box)
            diagnostics.append(diag)
        return boxes, diagnostics

    @staticmethod
    def _check_frame(frame: np.ndarray):
        if frame is None or frame.ndim != 3 or frame.shape[-1] != 3:
            raise DataError("expected an HxWx3 frame")
        if frame.shape[0] < 8 or frame.shape[1] < 8:
            raise DataError(
                f"frame {frame.shape[1]}x{frame.shape[0]} smaller than the minimal crop"
            )
