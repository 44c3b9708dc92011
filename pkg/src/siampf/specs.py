"""Declarative layer specifications for the two feature-extraction branches.

A :class:`NetworkSpec` is the single source of truth for shape arithmetic:
everything downstream (network construction, input-size validation, the
shape oracle used in tests) derives from the ordered layer list held here.
All convolutions and pools use valid (no) padding; border padding would
bias the correlation response toward the center, so it is deliberately
unavailable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

from .errors import ShapeError, SpecError

# Canonical geometry: exemplar/instance crop sizes, cumulative stride of the
# three stride-2 pools, and the side of both correlation response maps.
EXEMPLAR_SIZE = 127
INSTANCE_SIZE = 255
TOTAL_STRIDE = 8
RESPONSE_SIZE = 17


@dataclass(frozen=True)
class ConvLayerSpec:
    """One layer of a branch: a convolution or a max-pool.

    ``post`` selects the BatchNorm+ReLU block appended to a convolution;
    the final convolution of each branch emits raw features (``post="none"``).
    Pool layers carry no channel fields.
    """

    kind: str                      # "conv" | "maxpool"
    kernel: int
    stride: int = 1
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    post: str = "none"             # "batchnorm_relu" | "none"

    def validate(self) -> None:
        if self.kind not in ("conv", "maxpool"):
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1:
            raise SpecError(f"kernel/stride must be >= 1, got {self.kernel}/{self.stride}")
        if self.post not in ("batchnorm_relu", "none"):
            raise SpecError(f"unknown post stage {self.post!r}")
        if self.kind == "conv":
            if not self.in_channels or self.in_channels < 1:
                raise SpecError("conv layer needs in_channels >= 1")
            if not self.out_channels or self.out_channels < 1:
                raise SpecError("conv layer needs out_channels >= 1")
        else:
            if self.in_channels is not None or self.out_channels is not None:
                raise SpecError("maxpool layers carry no channel fields")
            if self.post != "none":
                raise SpecError("maxpool layers have no post stage")

    def output_size(self, size: int) -> int:
        """Valid-padding output side for a square input of side ``size``."""
        return (size - self.kernel) // self.stride + 1


def conv(k: int, cin: int, cout: int, stride: int = 1, post: str = "batchnorm_relu") -> ConvLayerSpec:
    return ConvLayerSpec("conv", k, stride, cin, cout, post)


def maxpool(k: int, stride: int) -> ConvLayerSpec:
    return ConvLayerSpec("maxpool", k, stride)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list for one branch.

    ``tap_index`` (backbone only) is the index of the layer whose output is
    forwarded to the side branch in addition to flowing down the backbone.
    """

    name: str
    layers: tuple = ()
    tap_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    def validate(self) -> None:
        if not self.layers:
            raise SpecError(f"{self.name}: empty layer list")
        convs = [l for l in self.layers if l.kind == "conv"]
        if not convs:
            raise SpecError(f"{self.name}: needs at least one conv layer")
        for l in self.layers:
            l.validate()
        # channel chaining with pooling passthrough
        channels = None
        for name, l in zip(self.layer_names(), self.layers):
            if l.kind != "conv":
                continue
            if channels is not None and l.in_channels != channels:
                raise SpecError(
                    f"{self.name}: {name} expects {l.in_channels} input channels "
                    f"but receives {channels}"
                )
            channels = l.out_channels
        # exactly the final conv emits raw features
        for l in convs[:-1]:
            if l.post != "batchnorm_relu":
                raise SpecError(f"{self.name}: only the final conv may have post='none'")
        if convs[-1].post != "none":
            raise SpecError(f"{self.name}: the final conv must have post='none'")
        if self.tap_index is not None and not (0 <= self.tap_index < len(self.layers)):
            raise SpecError(f"{self.name}: tap_index {self.tap_index} out of range")

    def layer_names(self) -> list[str]:
        """Human-readable names (Conv1.., MaxPool1..) used in errors and weight maps."""
        names, nc, np_ = [], 0, 0
        for l in self.layers:
            if l.kind == "conv":
                nc += 1
                names.append(f"Conv{nc}")
            else:
                np_ += 1
                names.append(f"MaxPool{np_}")
        return names

    @property
    def in_channels(self) -> int:
        return next(l.in_channels for l in self.layers if l.kind == "conv")

    @property
    def out_channels(self) -> int:
        return [l.out_channels for l in self.layers if l.kind == "conv"][-1]

    def tap_channels(self) -> int:
        """Channel count of the activation at ``tap_index``."""
        if self.tap_index is None:
            raise SpecError(f"{self.name}: no tap_index configured")
        channels = self.in_channels
        for l in self.layers[: self.tap_index + 1]:
            if l.kind == "conv":
                channels = l.out_channels
        return channels

    def output_sizes(self, input_size: int) -> list[int]:
        """Per-layer output sides for a square input, raising on collapse.

        The error names the first layer whose output would be smaller than
        one pixel, which is the message surfaced for too-small inputs.
        """
        sizes, size = [], input_size
        for name, l in zip(self.layer_names(), self.layers):
            size = l.output_size(size)
            if size < 1:
                raise ShapeError(
                    f"{self.name}: input of size {input_size} collapses at {name} "
                    f"(would produce size {size})"
                )
            sizes.append(size)
        return sizes

    def output_size(self, input_size: int) -> int:
        return self.output_sizes(input_size)[-1]

    def tap_size(self, input_size: int) -> int:
        if self.tap_index is None:
            raise SpecError(f"{self.name}: no tap_index configured")
        return self.output_sizes(input_size)[self.tap_index]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tap_index": self.tap_index,
            "layers": [
                {
                    "kind": l.kind,
                    "kernel": l.kernel,
                    "stride": l.stride,
                    "in_channels": l.in_channels,
                    "out_channels": l.out_channels,
                    "post": l.post,
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = tuple(
            ConvLayerSpec(
                kind=l["kind"],
                kernel=l["kernel"],
                stride=l.get("stride", 1),
                in_channels=l.get("in_channels"),
                out_channels=l.get("out_channels"),
                post=l.get("post", "none"),
            )
            for l in d["layers"]
        )
        spec = cls(name=d["name"], layers=layers, tap_index=d.get("tap_index"))
        spec.validate()
        return spec

    def digest(self) -> str:
        """Stable content hash used to detect checkpoint/spec mismatches."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def backbone_spec() -> NetworkSpec:
    """The modified VGG16 backbone: 11 convs, 3 stride-2 pools, 512->256 head.

    The side branch taps the output of MaxPool2 (index 5): it is the only
    tap point at which both correlation heads emit 17x17 response maps for
    the 127/255 crop pair, and it carries the 128 channels the side branch
    expects.
    """
    return NetworkSpec(
        name="vgg16_backbone",
        layers=(
            conv(3, 3, 64),
            conv(3, 64, 64),
            maxpool(2, 2),
            conv(3, 64, 128),
            conv(3, 128, 128),
            maxpool(2, 2),
            conv(3, 128, 256),
            conv(3, 256, 256),
            conv(3, 256, 256),
            maxpool(2, 2),
            conv(3, 256, 512),
            conv(3, 512, 512),
            conv(3, 512, 512),
            conv(3, 512, 256, post="none"),
        ),
        tap_index=5,
    )


def branch_spec() -> NetworkSpec:
    """The AlexNet-like side branch consuming the 128-channel backbone tap."""
    return NetworkSpec(
        name="alexnet_branch",
        layers=(
            conv(5, 128, 256),
            maxpool(3, 2),
            conv(3, 256, 384),
            conv(3, 384, 256),
            conv(3, 256, 256, post="none"),
        ),
    )


def tiny_backbone_spec(widths=(8, 16, 16, 24, 16)) -> NetworkSpec:
    """Channel-reduced twin of the backbone with identical geometry.

    Keeps every kernel, stride and pool placement of the full backbone so
    that all spatial sizes (tap 28/60, head 3/19, response 17) are
    preserved, while shrinking channels enough to train on a CPU in
    minutes. Used for desk-scale training and as a config override.
    """
    w1, w2, w3, w4, wout = widths
    return NetworkSpec(
        name="tiny_backbone",
        layers=(
            conv(3, 3, w1),
            conv(3, w1, w1),
            maxpool(2, 2),
            conv(3, w1, w2),
            conv(3, w2, w2),
            maxpool(2, 2),
            conv(3, w2, w3),
            conv(3, w3, w3),
            conv(3, w3, w3),
            maxpool(2, 2),
            conv(3, w3, w4),
            conv(3, w4, w4),
            conv(3, w4, w4),
            conv(3, w4, wout, post="none"),
        ),
        tap_index=5,
    )


def tiny_branch_spec(in_channels=16, widths=(24, 24, 24, 16)) -> NetworkSpec:
    """Channel-reduced twin of the side branch (same geometry)."""
    w1, w2, w3, wout = widths
    return NetworkSpec(
        name="tiny_branch",
        layers=(
            conv(5, in_channels, w1),
            maxpool(3, 2),
            conv(3, w1, w2),
            conv(3, w2, w3),
            conv(3, w3, wout, post="none"),
        ),
    )
