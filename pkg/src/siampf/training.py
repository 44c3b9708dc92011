"""SGD training loop with backbone freezing, plus checkpoint serialization.

Backbone convs 1..frozen_backbone_convs stay frozen (no gradients, no
BatchNorm statistic updates); everything else — the last two backbone
convs, the whole side branch, the attention block and the response-head
gains/biases — trains. The learning rate follows a stepwise schedule:
plateaus of 1e-1 / 1e-2 / 1e-3 switching at epochs 20 and 40 by default.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .errors import CheckpointError
from .labels import logistic_loss
from .network import SiamPFModel
from .specs import NetworkSpec

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr_schedule: tuple = ((0, 1e-1), (20, 1e-2), (40, 1e-3))
    momentum: float = 0.9
    weight_decay: float = 5e-4
    fusion_lambda: float = 0.75
    frozen_backbone_convs: int = 9
    pairs_per_epoch: int = 256
    seed: int = 0

    def __post_init__(self):
        self.lr_schedule = tuple((int(e), float(lr)) for e, lr in self.lr_schedule)
        epochs_in_schedule = [e for e, _ in self.lr_schedule]
        lrs = [lr for _, lr in self.lr_schedule]
        if not self.lr_schedule:
            raise ValueError("lr_schedule must not be empty")
        if sorted(set(epochs_in_schedule)) != epochs_in_schedule:
            raise ValueError(f"schedule epochs must be strictly increasing: {epochs_in_schedule}")
        if any(e >= self.epochs for e in epochs_in_schedule[1:]) or epochs_in_schedule[0] != 0:
            raise ValueError("schedule must start at epoch 0 and switch before the last epoch")
        if any(lrs[i + 1] >= lrs[i] for i in range(len(lrs) - 1)):
            raise ValueError(f"learning rates must be strictly decreasing: {lrs}")
        if not (0.0 <= self.fusion_lambda <= 1.0):
            raise ValueError(f"lambda must lie in [0, 1], got {self.fusion_lambda}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def lr_at_epoch(self, epoch: int) -> float:
        lr = self.lr_schedule[0][1]
        for e, value in self.lr_schedule:
            if epoch >= e:
                lr = value
        return lr


def _collate(pairs):
    z = torch.stack([p.exemplar for p in pairs])
    x = torch.stack([p.instance for p in pairs])
    labels = np.stack([p.label.values for p in pairs])
    weights = np.stack([p.weights for p in pairs])
    return z, x, torch.from_numpy(labels).float(), torch.from_numpy(weights).float()


def train(model: SiamPFModel, sampler, cfg: TrainConfig, log_every: int = 0) -> dict:
    """Run the full schedule; returns per-step loss history.

    ``sampler`` provides ``.sample() -> TrainingPair``. Raises RuntimeError
    naming the step if the loss diverges to NaN/inf.
    """
    model.train()
    model.freeze_backbone_convs(cfg.frozen_backbone_convs)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.SGD(
        params, lr=cfg.lr_at_epoch(0), momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    steps_per_epoch = max(1, (cfg.pairs_per_epoch + cfg.batch_size - 1) // cfg.batch_size)

    losses = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at_epoch(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        for step in range(steps_per_epoch):
            pairs = [sampler.sample() for _ in range(cfg.batch_size)]
            z, x, labels, weights = _collate(pairs)
            response = model.fused_response(z, x, cfg.fusion_lambda)
            loss = logistic_loss(response, labels, weights)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch} step {step}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            if log_every and len(losses) % log_every == 0:
                print(f"epoch {epoch} step {step} lr {lr:g} loss {losses[-1]:.4f}")
    model.eval()
    return {"losses": losses, "steps_per_epoch": steps_per_epoch}


def save_checkpoint(path: str, model: SiamPFModel, train_config: TrainConfig = None) -> None:
    """Self-describing checkpoint: format version, specs, weights, train config."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "backbone_spec": model.backbone.spec.to_dict(),
        "branch_spec": model.branch.spec.to_dict(),
        "backbone_digest": model.backbone.spec.digest(),
        "branch_digest": model.branch.spec.digest(),
        "attention_reduction": model.attention.reduction,
        "state_dict": model.state_dict(),
        "train_config": asdict(train_config) if train_config is not None else None,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(payload, path)


def _read_payload(path: str) -> dict:
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a recognized checkpoint")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {payload['format_version']} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    return payload


def load_checkpoint(path: str, model: SiamPFModel = None):
    """Rebuild (or restore into) a model from a checkpoint.

    With ``model=None`` the architecture embedded in the file is
    reconstructed. Passing an existing model validates every weight shape
    first and names the first mismatched layer on incompatibility.

    Returns (model, train_config_or_None).
    """
    payload = _read_payload(path)
    if model is None:
        backbone = NetworkSpec.from_dict(payload["backbone_spec"])
        branch = NetworkSpec.from_dict(payload["branch_spec"])
        model = SiamPFModel(backbone, branch,
                            attention_reduction=payload["attention_reduction"])
    state = payload["state_dict"]
    current = model.state_dict()
    if set(state) != set(current):
        missing = sorted(set(current) - set(state)) + sorted(set(state) - set(current))
        raise CheckpointError(f"{path}: state mismatch at {missing[0]}")
    for key, tensor in current.items():
        if tuple(state[key].shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"{path}: shape mismatch at {key}: checkpoint "
                f"{tuple(state[key].shape)} vs model {tuple(tensor.shape)}"
            )
    model.load_state_dict(state)
    model.eval()
    cfg = payload.get("train_config")
    train_config = TrainConfig(**cfg) if cfg else None
    return model, train_config
