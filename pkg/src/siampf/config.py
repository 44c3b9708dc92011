"""Layered run configuration: defaults < JSON file < environment < flags.

Every key has a declared type and default; unknown keys and type
mismatches are rejected with one error listing every violation. The
environment override for key ``a.b`` is ``SIAMPF_A_B``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import ConfigError
from .specs import NetworkSpec, backbone_spec, branch_spec, tiny_backbone_spec, tiny_branch_spec
from .tracker import TrackerConfig
from .training import TrainConfig

ENV_PREFIX = "SIAMPF_"


@dataclass(frozen=True)
class SchemaKey:
    key: str
    type: str             # int | float | bool | str | list | dict
    default: object
    help: str
    choices: tuple = None


SCHEMA = [
    SchemaKey("seed", "int", 0, "master seed; all sub-generators derive from it"),
    SchemaKey("lambda", "float", 0.75, "fusion weight of the backbone response map"),
    SchemaKey("output_dir", "str", "runs", "directory for checkpoints, reports and plots"),
    SchemaKey("checkpoint", "str", "", "checkpoint path (written by train, read by track/eval/ablate)"),
    SchemaKey("data.root", "str", "", "dataset root: <root>/<sequence>/img + groundtruth_rect.txt"),
    SchemaKey("data.context", "float", 0.5, "context margin added around the target box"),
    SchemaKey("data.max_gap", "int", 100, "max frame distance between pair members"),
    SchemaKey("data.translate_jitter", "float", 32.0, "max |instance-center offset| in instance px"),
    SchemaKey("data.scale_jitter", "float", 0.05, "max relative crop-side jitter"),
    SchemaKey("data.label_radius", "float", 16.0, "positive-label radius in input pixels"),
    SchemaKey("model.preset", "str", "vgg16", "network preset", choices=("vgg16", "tiny")),
    SchemaKey("model.network", "dict", None, "explicit {'backbone':…,'branch':…} spec override"),
    SchemaKey("model.attention_reduction", "int", 4, "channel reduction ratio of the attention block"),
    SchemaKey("model.response_scale", "float", 1e-3, "initial gain applied to raw correlation maps"),
    SchemaKey("model.pretrained_weights", "str", "", "path to a serialized VGG16 weights file"),
    SchemaKey("train.epochs", "int", 50, "training epochs"),
    SchemaKey("train.batch_size", "int", 8, "pairs per SGD step"),
    SchemaKey("train.lr_schedule", "list", [[0, 0.1], [20, 0.01], [40, 0.001]],
              "[epoch, lr] plateaus; lr anneals stepwise"),
    SchemaKey("train.momentum", "float", 0.9, "SGD momentum"),
    SchemaKey("train.weight_decay", "float", 5e-4, "SGD weight decay"),
    SchemaKey("train.frozen_convs", "int", 9, "backbone convs 1..N stay frozen"),
    SchemaKey("train.pairs_per_epoch", "int", 256, "sampled pairs per epoch"),
    SchemaKey("tracker.num_scales", "int", 3, "scale pyramid size (odd)"),
    SchemaKey("tracker.scale_step", "float", 1.0375, "geometric step between pyramid scales"),
    SchemaKey("tracker.scale_penalty", "float", 0.9745, "peak penalty for non-middle scales"),
    SchemaKey("tracker.scale_damping", "float", 0.59, "blend factor for size updates"),
    SchemaKey("tracker.window_influence", "float", 0.176, "cosine window blend weight"),
    SchemaKey("tracker.response_upsample", "int", 272, "upsampled response side (16x the raw map)"),
    SchemaKey("tracker.use_pretrained", "bool", True, "ablation flag: pretrained frozen backbone"),
    SchemaKey("tracker.use_branch", "bool", True, "ablation flag: fuse the side branch"),
    SchemaKey("tracker.use_attention", "bool", True, "ablation flag: exemplar channel attention"),
    SchemaKey("tracker.use_apcep", "bool", True, "ablation flag: confidence gate on the response"),
    SchemaKey("confidence.ratio", "float", 0.3, "gate threshold as a fraction of the running mean"),
    SchemaKey("confidence.window", "int", 30, "confidence history capacity (frames)"),
    SchemaKey("confidence.warmup", "int", 3, "frames that always pass the gate"),
    SchemaKey("confidence.strategy", "str", "damp", "gate-failure action",
              choices=("damp", "freeze")),
    SchemaKey("track.sequence", "str", "", "sequence directory for the track subcommand"),
    SchemaKey("track.init_box", "str", "", "initial box 'x,y,w,h' (top-left); default: first GT line"),
    SchemaKey("track.boxes_out", "str", "", "output CSV path (default <output_dir>/boxes.csv)"),
    SchemaKey("track.diagnostics_out", "str", "",
              "output JSON-lines path (default <output_dir>/diagnostics.jsonl)"),
]

SCHEMA_BY_KEY = {entry.key: entry for entry in SCHEMA}


def env_name(key: str) -> str:
    return ENV_PREFIX + key.upper().replace(".", "_")


def _check_type(entry: SchemaKey, value):
    """Returns (coerced_value, error_or_None)."""
    if value is None and entry.type == "dict":
        return None, None
    expected = entry.type
    if expected == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return value, f"{entry.key}: expected int, got {value!r}"
    elif expected == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return value, f"{entry.key}: expected float, got {value!r}"
        value = float(value)
    elif expected == "bool":
        if not isinstance(value, bool):
            return value, f"{entry.key}: expected bool, got {value!r}"
    elif expected == "str":
        if not isinstance(value, str):
            return value, f"{entry.key}: expected str, got {value!r}"
    elif expected == "list":
        if not isinstance(value, list):
            return value, f"{entry.key}: expected list, got {value!r}"
    elif expected == "dict":
        if not isinstance(value, dict):
            return value, f"{entry.key}: expected dict, got {value!r}"
    if entry.choices and value not in entry.choices:
        return value, f"{entry.key}: {value!r} not in {entry.choices}"
    return value, None


def parse_env_value(entry: SchemaKey, raw: str):
    if entry.type == "int":
        return int(raw)
    if entry.type == "float":
        return float(raw)
    if entry.type == "bool":
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if entry.type in ("list", "dict"):
        return json.loads(raw)
    return raw


def _flatten(tree: dict, prefix: str = "") -> dict:
    """Nested {'train': {'epochs': 5}} and flat {'train.epochs': 5} both work."""
    flat = {}
    for key, value in tree.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict) and full not in SCHEMA_BY_KEY:
            flat.update(_flatten(value, prefix=f"{full}."))
        else:
            flat[full] = value
    return flat


class RunConfig:
    """Immutable validated key-value view with typed accessors."""

    def __init__(self, values: dict):
        self._values = dict(values)

    def __getitem__(self, key: str):
        return self._values[key]

    def get(self, key: str, default=None):
        return self._values.get(key, default)

    def as_dict(self) -> dict:
        return dict(self._values)

    # -- derived structured configs ---------------------------------------

    def resolve_specs(self):
        """(backbone, branch) NetworkSpecs from preset or explicit override."""
        override = self._values.get("model.network")
        if override:
            backbone = NetworkSpec.from_dict(override["backbone"])
            branch = NetworkSpec.from_dict(override["branch"])
            return backbone, branch
        if self._values["model.preset"] == "tiny":
            backbone = tiny_backbone_spec()
            return backbone, tiny_branch_spec(in_channels=backbone.tap_channels())
        return backbone_spec(), branch_spec()

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            lr_schedule=tuple((int(e), float(lr)) for e, lr in self["train.lr_schedule"]),
            momentum=self["train.momentum"],
            weight_decay=self["train.weight_decay"],
            fusion_lambda=self["lambda"],
            frozen_backbone_convs=self["train.frozen_convs"],
            pairs_per_epoch=self["train.pairs_per_epoch"],
            seed=self["seed"],
        )

    def to_tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            num_scales=self["tracker.num_scales"],
            scale_step=self["tracker.scale_step"],
            scale_penalty=self["tracker.scale_penalty"],
            scale_damping=self["tracker.scale_damping"],
            window_influence=self["tracker.window_influence"],
            fusion_lambda=self["lambda"],
            response_upsample=self["tracker.response_upsample"],
            context=self["data.context"],
            gate_ratio=self["confidence.ratio"],
            gate_window=self["confidence.window"],
            gate_warmup=self["confidence.warmup"],
            gate_strategy=self["confidence.strategy"],
            use_pretrained=self["tracker.use_pretrained"],
            use_branch=self["tracker.use_branch"],
            use_attention=self["tracker.use_attention"],
            use_apcep=self["tracker.use_apcep"],
        )


def parse_config(file_path: str = None, overrides: dict = None,
                 environ: dict = None) -> RunConfig:
    """Merge defaults, file, environment and flag overrides; validate all.

    Precedence: defaults < file < environment < overrides. Every violation
    (unknown key, type mismatch, bad enum value) is collected and reported
    in a single ConfigError.
    """
    environ = os.environ if environ is None else environ
    values = {entry.key: entry.default for entry in SCHEMA}
    violations = []

    if file_path:
        try:
            with open(file_path) as fh:
                tree = json.load(fh)
        except FileNotFoundError:
            raise ConfigError([f"config file not found: {file_path}"])
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {file_path} is not valid JSON: {exc}"])
        if not isinstance(tree, dict):
            raise ConfigError([f"config file {file_path} must hold a JSON object"])
        for key, value in _flatten(tree).items():
            if key not in SCHEMA_BY_KEY:
                violations.append(f"unknown config key {key!r}")
                continue
            value, error = _check_type(SCHEMA_BY_KEY[key], value)
            if error:
                violations.append(error)
            else:
                values[key] = value

    for entry in SCHEMA:
        raw = environ.get(env_name(entry.key))
        if raw is None:
            continue
        try:
            value = parse_env_value(entry, raw)
        except (ValueError, json.JSONDecodeError):
            violations.append(f"{env_name(entry.key)}: cannot parse {raw!r} as {entry.type}")
            continue
        value, error = _check_type(entry, value)
        if error:
            violations.append(error)
        else:
            values[entry.key] = value

    for key, value in (overrides or {}).items():
        if key not in SCHEMA_BY_KEY:
            violations.append(f"unknown config key {key!r}")
            continue
        value, error = _check_type(SCHEMA_BY_KEY[key], value)
        if error:
            violations.append(error)
        else:
            values[key] = value

    if not (0.0 <= values["lambda"] <= 1.0):
        violations.append(f"lambda: must lie in [0, 1], got {values['lambda']}")

    if violations:
        raise ConfigError(violations)
    return RunConfig(values)
