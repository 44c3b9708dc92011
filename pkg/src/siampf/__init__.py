"""SiamPF: a Siamese visual tracker with a fused two-branch feature extractor.

A modified VGG16 backbone and an AlexNet-like side branch (fed from the
backbone's 128-channel tap) each score the search region by
cross-correlating against exemplar features; the two 17x17 response maps
are fused by a convex weight lambda, upsampled, and post-processed with a
confidence gate before the peak is read off as the new target location.
"""

from .confidence import ConfidenceHistory, apce, apcep, gate
from .correlation import FusionConfig, fuse, upsample_response, xcorr
from .errors import (CheckpointError, ConfigError, DataError, ShapeError,
                     SiamPFError, SpecError)
from .geometry import TargetState, iou
from .labels import LabelMap, balance_weights, logistic_loss, make_label_map
from .network import ChannelAttention, FeatureNetwork, SiamPFModel, build_network
from .specs import (ConvLayerSpec, NetworkSpec, backbone_spec, branch_spec,
                    tiny_backbone_spec, tiny_branch_spec)
from .tracker import Tracker, TrackerConfig, cosine_window
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ChannelAttention", "CheckpointError", "ConfidenceHistory", "ConfigError",
    "ConvLayerSpec", "DataError", "FeatureNetwork", "FusionConfig", "LabelMap",
    "NetworkSpec", "ShapeError", "SiamPFError", "SiamPFModel", "SpecError",
    "TargetState", "Tracker", "TrackerConfig", "TrainConfig", "apce", "apcep",
    "backbone_spec", "balance_weights", "branch_spec", "build_network",
    "cosine_window", "fuse", "gate", "iou", "load_checkpoint", "logistic_loss",
    "make_label_map", "save_checkpoint", "tiny_backbone_spec",
    "tiny_branch_spec", "train", "upsample_response", "xcorr",
]
