"""Executable networks built from layer specs, plus the channel attention block.

The exemplar (template) and instance (search) crops share one backbone and
one side branch. The side branch consumes the backbone's 128-channel tap
activation; its exemplar features pass through a squeeze-excite style
channel attention block before correlation, while instance features and
the whole backbone path stay untouched. Convolutions followed by
BatchNorm carry no bias (the normalization would absorb it); only the
final raw-output conv of each branch is biased.
"""

from __future__ import annotations

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .correlation import batch_xcorr
from .errors import CheckpointError, ShapeError, SpecError
from .specs import ConvLayerSpec, NetworkSpec


class _ConvBlock(nn.Module):
    """Conv2d with optional BatchNorm+ReLU, valid padding only."""

    def __init__(self, spec: ConvLayerSpec):
        super().__init__()
        with_bn = spec.post == "batchnorm_relu"
        self.conv = nn.Conv2d(
            spec.in_channels,
            spec.out_channels,
            kernel_size=spec.kernel,
            stride=spec.stride,
            bias=not with_bn,
        )
        self.bn = nn.BatchNorm2d(spec.out_channels) if with_bn else None

    def forward(self, x):
        x = self.conv(x)
        if self.bn is not None:
            x = F.relu(self.bn(x))
        return x


class FeatureNetwork(nn.Module):
    """One branch executed layer-by-layer from its :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        self.layer_names = spec.layer_names()
        blocks = []
        self._conv_blocks = {}  # conv ordinal (1-based) -> block index
        ordinal = 0
        for layer in spec.layers:
            if layer.kind == "conv":
                ordinal += 1
                self._conv_blocks[ordinal] = len(blocks)
                blocks.append(_ConvBlock(layer))
            else:
                blocks.append(nn.MaxPool2d(layer.kernel, stride=layer.stride))
        self.blocks = nn.ModuleList(blocks)
        self.reset_parameters()

    def reset_parameters(self):
        for block in self.blocks:
            if isinstance(block, _ConvBlock):
                nn.init.kaiming_normal_(block.conv.weight, mode="fan_in", nonlinearity="relu")
                if block.conv.bias is not None:
                    nn.init.zeros_(block.conv.bias)
                if block.bn is not None:
                    block.bn.reset_parameters()
                    block.bn.reset_running_stats()

    def conv_block(self, ordinal: int) -> _ConvBlock:
        return self.blocks[self._conv_blocks[ordinal]]

    @property
    def num_convs(self) -> int:
        return len(self._conv_blocks)

    def _check_input(self, x: torch.Tensor):
        if x.dim() != 4:
            raise ShapeError(f"expected (B, C, H, W) input, got shape {tuple(x.shape)}")
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"{self.spec.name}: expected {self.spec.in_channels} input channels, "
                f"got {x.shape[1]}"
            )
        # per-layer collapse check names the first offending layer
        for side in set(x.shape[2:]):
            self.spec.output_sizes(int(side))

    def _run(self, x: torch.Tensor):
        self._check_input(x)
        tap = None
        for idx, block in enumerate(self.blocks):
            x = block(x)
            if self.spec.tap_index is not None and idx == self.spec.tap_index:
                tap = x
        return tap, x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self._run(x)[1]

    def forward_with_tap(self, x: torch.Tensor):
        """Returns (tap, final); requires a spec with a configured tap_index."""
        if self.spec.tap_index is None:
            raise SpecError(f"{self.spec.name}: no tap_index configured")
        tap, final = self._run(x)
        return tap, final


class ChannelAttention(nn.Module):
    """Per-channel gating from global spatial pooling.

    Global average pool -> affine reduction by ``reduction`` -> ReLU ->
    affine expansion -> sigmoid. Each channel of the input is multiplied by
    its gate, a scalar in (0, 1), so attention is a positive diagonal
    rescaling that cannot move the spatial argmax within a channel.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if channels % reduction != 0:
            raise SpecError(f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.reduction = reduction
        self.reduce = nn.Linear(channels, channels // reduction)
        self.expand = nn.Linear(channels // reduction, channels)

    def channel_weights(self, feat: torch.Tensor) -> torch.Tensor:
        pooled = feat.mean(dim=(-2, -1))
        return torch.sigmoid(self.expand(F.relu(self.reduce(pooled))))

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        if feat.shape[-3] != self.channels:
            raise ShapeError(
                f"attention block expects {self.channels} channels, got {feat.shape[-3]}"
            )
        weights = self.channel_weights(feat)
        return feat * weights[..., None, None]


def apply_attention(block: ChannelAttention, feat: torch.Tensor) -> torch.Tensor:
    """Functional form of the attention block for single (C, H, W) maps."""
    return block(feat)


def build_network(spec: NetworkSpec, init: str = "random",
                  pretrained_path: Optional[str] = None) -> FeatureNetwork:
    """Construct one branch; ``init='pretrained'`` maps VGG16 weights onto it."""
    if init not in ("random", "pretrained"):
        raise ValueError(f"unknown init {init!r}")
    net = FeatureNetwork(spec)
    if init == "pretrained":
        if pretrained_path is None:
            raise CheckpointError("pretrained init requested but no weights path given")
        load_pretrained_backbone(net, pretrained_path)
    return net


def load_pretrained_backbone(net: FeatureNetwork, path: str, num_convs: int = 10) -> None:
    """Copy the first ``num_convs`` conv kernels of a stock VGG16 weights file.

    The file is a torch-serialized state dict in the torchvision VGG16
    layout (``features.N.weight`` entries). Conv kernels are matched
    positionally; our BN convs are biasless so pretrained biases are
    dropped, and the final 512->256 conv has no pretrained counterpart and
    keeps its fresh He initialization. BatchNorm statistics start fresh.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise CheckpointError(f"pretrained weights file not found: {path}")
    except Exception as exc:  # torch raises several unpickling error types
        raise CheckpointError(f"cannot read pretrained weights {path}: {exc}")
    if isinstance(payload, dict) and "state_dict" in payload:
        payload = payload["state_dict"]
    if not isinstance(payload, dict):
        raise CheckpointError(f"{path} does not contain a state dict")

    # state dicts preserve layer order; 4-dim tensors are exactly the conv kernels
    conv_weights = [
        v for v in payload.values() if isinstance(v, torch.Tensor) and v.dim() == 4
    ]
    if len(conv_weights) < num_convs:
        raise CheckpointError(
            f"{path}: found {len(conv_weights)} conv kernels, need {num_convs}"
        )
    with torch.no_grad():
        for ordinal in range(1, num_convs + 1):
            block = net.conv_block(ordinal)
            src = conv_weights[ordinal - 1]
            if tuple(src.shape) != tuple(block.conv.weight.shape):
                raise CheckpointError(
                    f"pretrained kernel {ordinal} has shape {tuple(src.shape)}, "
                    f"Conv{ordinal} expects {tuple(block.conv.weight.shape)}"
                )
            block.conv.weight.copy_(src.to(block.conv.weight.dtype))


class SiamPFModel(nn.Module):
    """Both branches, attention, and the two per-branch response heads.

    Each head applies a learnable scalar gain (initialized small so raw
    correlation sums do not saturate the logistic loss) and a learnable
    uniform bias to its correlation map. Fusion weight lambda is a run
    parameter, not a model parameter.
    """

    def __init__(self, backbone_spec: NetworkSpec, branch_spec: NetworkSpec,
                 attention_reduction: int = 4, response_scale: float = 1e-3):
        super().__init__()
        if backbone_spec.tap_index is None:
            raise SpecError("backbone spec must define a tap_index for the side branch")
        if branch_spec.in_channels != backbone_spec.tap_channels():
            raise SpecError(
                f"side branch expects {branch_spec.in_channels} channels but the "
                f"backbone tap provides {backbone_spec.tap_channels()}"
            )
        self.backbone = FeatureNetwork(backbone_spec)
        self.branch = FeatureNetwork(branch_spec)
        self.attention = ChannelAttention(branch_spec.out_channels, attention_reduction)
        self.scale_v = nn.Parameter(torch.tensor(float(response_scale)))
        self.scale_a = nn.Parameter(torch.tensor(float(response_scale)))
        self.bias_v = nn.Parameter(torch.tensor(0.0))
        self.bias_a = nn.Parameter(torch.tensor(0.0))
        self._frozen_backbone_convs = 0

    # -- feature embedding -------------------------------------------------

    def embed_exemplar(self, z: torch.Tensor, use_branch: bool = True,
                       use_attention: bool = True) -> dict:
        """Template features for both heads; attention applies to the branch path only."""
        tap, final = self.backbone.forward_with_tap(z)
        feats = {"v": final, "a": None}
        if use_branch:
            a = self.branch(tap)
            if use_attention:
                a = self.attention(a)
            feats["a"] = a
        return feats

    def embed_instance(self, x: torch.Tensor, use_branch: bool = True) -> dict:
        tap, final = self.backbone.forward_with_tap(x)
        feats = {"v": final, "a": None}
        if use_branch:
            feats["a"] = self.branch(tap)
        return feats

    # -- response heads -----------------------------------------------------

    def response_v(self, zf: torch.Tensor, xf: torch.Tensor) -> torch.Tensor:
        return self.scale_v * batch_xcorr(zf, xf) + self.bias_v

    def response_a(self, zf: torch.Tensor, xf: torch.Tensor) -> torch.Tensor:
        return self.scale_a * batch_xcorr(zf, xf) + self.bias_a

    def fused_response(self, z: torch.Tensor, x: torch.Tensor, fusion_lambda: float = 0.75,
                       use_branch: bool = True, use_attention: bool = True) -> torch.Tensor:
        """(B, 17, 17) fused response for training batches of crop pairs."""
        use_branch = use_branch and fusion_lambda < 1.0
        zf = self.embed_exemplar(z, use_branch=use_branch, use_attention=use_attention)
        xf = self.embed_instance(x, use_branch=use_branch)
        r_v = self.response_v(zf["v"], xf["v"])
        if not use_branch:
            return r_v
        r_a = self.response_a(zf["a"], xf["a"])
        return fusion_lambda * r_v + (1.0 - fusion_lambda) * r_a

    # -- freezing -----------------------------------------------------------

    def freeze_backbone_convs(self, num_convs: int) -> None:
        """Freeze backbone convs 1..num_convs: no gradients, no BN stat updates."""
        num_convs = min(num_convs, self.backbone.num_convs)
        self._frozen_backbone_convs = num_convs
        for ordinal in range(1, num_convs + 1):
            block = self.backbone.conv_block(ordinal)
            block.requires_grad_(False)
            block.eval()

    def train(self, mode: bool = True):
        super().train(mode)
        if mode:
            for ordinal in range(1, self._frozen_backbone_convs + 1):
                self.backbone.conv_block(ordinal).eval()
        return self

    # -- parameter bookkeeping ----------------------------------------------

    def parameter_groups(self) -> dict:
        """Logical name -> list of (param_name, tensor) incl. BN buffers.

        Used by the freezing audit and the finite-difference gradient check.
        """
        sd = self.state_dict()
        groups = {}
        for net_name, net in (("backbone", self.backbone), ("branch", self.branch)):
            for ordinal, block_idx in net._conv_blocks.items():
                prefix = f"{net_name}.blocks.{block_idx}."
                groups[f"{net_name}.Conv{ordinal}"] = [
                    (name, tensor) for name, tensor in sd.items() if name.startswith(prefix)
                ]
        groups["attention"] = [(n, t) for n, t in sd.items() if n.startswith("attention.")]
        groups["head"] = [(n, sd[n]) for n in ("scale_v", "scale_a", "bias_v", "bias_a")]
        return groups
