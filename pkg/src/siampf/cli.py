"""Command-line entry point: train / track / eval / ablate.

Every configuration key is exposed as a ``--<key>`` flag (see ``--help``),
can be set in a JSON config file (``--config``), or via the environment as
``SIAMPF_<KEY>``. Precedence: defaults < file < environment < flags.
Exit codes: 0 success, 1 runtime error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as config_mod
from .config import RunConfig, parse_config
from .errors import CheckpointError, ConfigError, SiamPFError
from .evalbench import (default_track_fn, format_ablation_table, run_ablation,
                        run_benchmark, write_boxes_csv)
from .geometry import TargetState
from .network import SiamPFModel, load_pretrained_backbone
from .seeding import named_generators, seed_torch
from .sequences import discover_sequences, load_sequence
from .tracker import Tracker
from .training import load_checkpoint, save_checkpoint, train

SUBCOMMANDS = ("train", "track", "eval", "ablate")


def _flag_parser(entry: config_mod.SchemaKey):
    if entry.type == "int":
        return int
    if entry.type == "float":
        return float
    if entry.type == "bool":
        return lambda raw: config_mod.parse_env_value(entry, raw)
    if entry.type in ("list", "dict"):
        return json.loads
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siampf",
        description="Siamese tracker: training, tracking, benchmark evaluation, ablation.",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="{train,track,eval,ablate}")
    for name, doc in (
        ("train", "train a model on a sequence dataset and write a checkpoint"),
        ("track", "run the tracker over one sequence; writes boxes CSV + diagnostics"),
        ("eval", "one-pass benchmark over a dataset; writes report.json and plots"),
        ("ablate", "run eval across the cumulative ablation switch matrix"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", metavar="FILE", help="JSON config file")
        for entry in config_mod.SCHEMA:
            p.add_argument(
                f"--{entry.key}",
                dest=entry.key,
                metavar=entry.type.upper(),
                type=_flag_parser(entry),
                default=None,
                help=f"{entry.help} (default: {entry.default!r})",
            )
    return parser


def _collect_overrides(namespace) -> dict:
    return {
        key: value
        for key, value in vars(namespace).items()
        if key in config_mod.SCHEMA_BY_KEY and value is not None
    }


def _build_model(cfg: RunConfig, init_generators=True) -> SiamPFModel:
    if init_generators:
        seed_torch(cfg["seed"])
    backbone, branch = cfg.resolve_specs()
    model = SiamPFModel(
        backbone, branch,
        attention_reduction=cfg["model.attention_reduction"],
        response_scale=cfg["model.response_scale"],
    )
    weights = cfg["model.pretrained_weights"]
    if weights:
        load_pretrained_backbone(model.backbone, weights)
    return model


def _load_checkpoint_model(cfg: RunConfig) -> SiamPFModel:
    path = cfg["checkpoint"]
    if not path:
        raise CheckpointError("no checkpoint path configured (set --checkpoint)")
    model, _ = load_checkpoint(path)
    return model


def _checkpoint_out_path(cfg: RunConfig) -> str:
    return cfg["checkpoint"] or os.path.join(cfg["output_dir"], "checkpoint.pt")


def cmd_train(cfg: RunConfig) -> int:
    root = cfg["data.root"]
    if not root:
        raise SiamPFError("train needs --data.root pointing at a sequence dataset")
    train_cfg = cfg.to_train_config()  # validate the schedule before heavy work
    generators = named_generators(cfg["seed"])
    model = _build_model(cfg)
    sequences = [load_sequence(p) for p in discover_sequences(root)]
    from .data import PairSampler

    sampler = PairSampler(
        sequences, generators["sampling"],
        max_gap=cfg["data.max_gap"],
        translate_jitter=cfg["data.translate_jitter"],
        scale_jitter=cfg["data.scale_jitter"],
        context=cfg["data.context"],
        label_radius=cfg["data.label_radius"],
    )
    history = train(model, sampler, train_cfg, log_every=10)
    out_path = _checkpoint_out_path(cfg)
    save_checkpoint(out_path, model, train_cfg)
    print(f"trained {len(history['losses'])} steps; "
          f"final loss {history['losses'][-1]:.4f}; checkpoint -> {out_path}")
    return 0


def _parse_init_box(text: str) -> TargetState:
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 4:
        raise SiamPFError(f"init box must be 'x,y,w,h', got {text!r}")
    return TargetState.from_topleft(*parts)


def cmd_track(cfg: RunConfig) -> int:
    seq_path = cfg["track.sequence"]
    if not seq_path:
        raise SiamPFError("track needs --track.sequence pointing at a sequence directory")
    model = _load_checkpoint_model(cfg)
    sequence = load_sequence(seq_path)
    init_box = (_parse_init_box(cfg["track.init_box"])
                if cfg["track.init_box"] else sequence.ground_truth[0])
    tracker = Tracker(model, cfg.to_tracker_config())
    boxes, diagnostics = tracker.track_sequence(sequence, init_box)

    os.makedirs(cfg["output_dir"], exist_ok=True)
    boxes_path = cfg["track.boxes_out"] or os.path.join(cfg["output_dir"], "boxes.csv")
    diag_path = (cfg["track.diagnostics_out"]
                 or os.path.join(cfg["output_dir"], "diagnostics.jsonl"))
    write_boxes_csv(boxes_path, boxes)
    with open(diag_path, "w") as fh:
        for record in diagnostics:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"tracked {len(boxes)} frames of {sequence.name}; "
          f"boxes -> {boxes_path}; diagnostics -> {diag_path}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    root = cfg["data.root"]
    if not root:
        raise SiamPFError("eval needs --data.root pointing at a sequence dataset")
    model = _load_checkpoint_model(cfg)
    report = run_benchmark(
        root, cfg["output_dir"],
        default_track_fn(model, cfg.to_tracker_config()),
        meta={"seed": cfg["seed"], "config": cfg.as_dict()},
    )
    results = report["results"]
    print(f"evaluated {len(results['sequences'])} sequences "
          f"({len(results['failures'])} failures): "
          f"AUC {results['mean_success_auc']:.4f}, "
          f"P@20 {results['mean_precision_at_20']:.4f}")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    root = cfg["data.root"]
    if not root:
        raise SiamPFError("ablate needs --data.root pointing at a sequence dataset")
    model = _load_checkpoint_model(cfg)
    table = run_ablation(
        root, cfg["output_dir"], model, cfg.to_tracker_config(),
        meta={"seed": cfg["seed"], "config": cfg.as_dict()},
    )
    print(format_ablation_table(table))
    return 0


_HANDLERS = {"train": cmd_train, "track": cmd_track, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code or 0)
    if args.subcommand not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = parse_config(getattr(args, "config", None), _collect_overrides(args))
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[args.subcommand](cfg)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except (SiamPFError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
