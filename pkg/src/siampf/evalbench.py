"""One-pass benchmark evaluation: success/precision metrics, reports, plots.

Success counts a frame when predicted/ground-truth overlap exceeds the
threshold strictly; precision counts center distances within the threshold
inclusively ("within 20 pixels"). The summary AUC is the arithmetic mean
of the 21 success-curve samples. The first frame is the initialization
frame and is included (its overlap is 1 by construction).
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .geometry import center_distance, iou
from .sequences import discover_sequences, load_sequence
from .tracker import Tracker, TrackerConfig

REPORT_SCHEMA_VERSION = 1
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PRECISION_THRESHOLDS = np.arange(0, 51, dtype=float)


@dataclass
class EvalResult:
    sequence: str
    predicted: list
    success_curve: np.ndarray
    success_auc: float
    precision_curve: np.ndarray
    precision_at_20: float


def success_metrics(pred, gt):
    """Overlap-success curve over 21 thresholds (strict >) and its mean."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} truths")
    overlaps = np.array([iou(p, g) for p, g in zip(pred, gt)])
    curve = np.array([(overlaps > t).mean() for t in SUCCESS_THRESHOLDS])
    return curve, float(curve.mean())


def precision_metrics(pred, gt):
    """Center-distance precision curve for 0..50 px (inclusive) and value at 20."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} truths")
    distances = np.array([center_distance(p, g) for p, g in zip(pred, gt)])
    curve = np.array([(distances <= d).mean() for d in PRECISION_THRESHOLDS])
    return curve, float(curve[20])


def evaluate_sequence(sequence, predicted) -> EvalResult:
    s_curve, auc = success_metrics(predicted, sequence.ground_truth)
    p_curve, p20 = precision_metrics(predicted, sequence.ground_truth)
    return EvalResult(
        sequence=sequence.name,
        predicted=[replace(b) for b in predicted],
        success_curve=s_curve,
        success_auc=auc,
        precision_curve=p_curve,
        precision_at_20=p20,
    )


def default_track_fn(model, cfg: TrackerConfig):
    """Per-sequence tracking callable built from a frozen model."""
    tracker = Tracker(model, cfg)

    def track(sequence):
        boxes, diagnostics = tracker.track_sequence(sequence)
        return boxes, diagnostics

    return track


def oracle_track_fn(sequence):
    """Returns the ground truth itself; exercises the pipeline end to end."""
    return [replace(b) for b in sequence.ground_truth], [
        {"frame_index": i, "oracle": True} for i in range(len(sequence))
    ]


def write_boxes_csv(path: str, boxes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "x", "y", "w", "h"])
        for idx, box in enumerate(boxes):
            x, y, w, h = box.to_topleft()
            writer.writerow([idx, f"{x:.4f}", f"{y:.4f}", f"{w:.4f}", f"{h:.4f}"])


def run_benchmark(dataset_root: str, out_dir: str, track_fn, meta: dict = None,
                  make_plots: bool = True) -> dict:
    """OPE over every sequence under ``dataset_root``.

    ``track_fn(sequence) -> (boxes, diagnostics)`` is injectable so oracle
    or ablated trackers flow through the identical pipeline. Unreadable
    sequences are recorded as failures and the run continues. Writes
    report.json, one <sequence>_boxes.csv each, and success/precision
    plots into ``out_dir``.
    """
    sequence_dirs = discover_sequences(dataset_root)
    if not sequence_dirs:
        raise DataError(f"no sequences found under {dataset_root}")
    os.makedirs(out_dir, exist_ok=True)

    per_sequence, failures, results = [], [], []
    for seq_dir in sequence_dirs:
        name = os.path.basename(seq_dir)
        try:
            sequence = load_sequence(seq_dir)
            boxes, _diag = track_fn(sequence)
            result = evaluate_sequence(sequence, boxes)
        except Exception as exc:
            failures.append({"sequence": name, "error": str(exc)})
            continue
        results.append(result)
        write_boxes_csv(os.path.join(out_dir, f"{result.sequence}_boxes.csv"),
                        result.predicted)
        per_sequence.append({
            "name": result.sequence,
            "num_frames": len(result.predicted),
            "success_auc": round(result.success_auc, 6),
            "precision_at_20": round(result.precision_at_20, 6),
        })

    mean_auc = float(np.mean([r.success_auc for r in results])) if results else 0.0
    mean_p20 = float(np.mean([r.precision_at_20 for r in results])) if results else 0.0
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "meta": dict(meta or {}, created_at=time.strftime("%Y-%m-%dT%H:%M:%S")),
        "results": {
            "sequences": per_sequence,
            "failures": failures,
            "mean_success_auc": round(mean_auc, 6),
            "mean_precision_at_20": round(mean_p20, 6),
        },
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if make_plots and results:
        _write_plots(out_dir, results)
    return report


def _write_plots(out_dir: str, results) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mean_success = np.mean([r.success_curve for r in results], axis=0)
    mean_precision = np.mean([r.precision_curve for r in results], axis=0)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(SUCCESS_THRESHOLDS, mean_success)
    ax.set_xlabel("overlap threshold")
    ax.set_ylabel("success rate")
    ax.set_title(f"Success (AUC {mean_success.mean():.3f})")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "success.png"), dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(PRECISION_THRESHOLDS, mean_precision)
    ax.set_xlabel("center distance threshold (px)")
    ax.set_ylabel("precision")
    ax.set_title(f"Precision (p20 {mean_precision[20]:.3f})")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "precision.png"), dpi=100)
    plt.close(fig)


ABLATION_ROWS = (
    ("baseline", dict(use_pretrained=False, use_branch=False,
                      use_attention=False, use_apcep=False)),
    ("pretrained", dict(use_pretrained=True, use_branch=False,
                        use_attention=False, use_apcep=False)),
    ("pretrained+branch", dict(use_pretrained=True, use_branch=True,
                               use_attention=False, use_apcep=False)),
    ("pretrained+branch+attention", dict(use_pretrained=True, use_branch=True,
                                         use_attention=True, use_apcep=False)),
    ("pretrained+branch+attention+apcep", dict(use_pretrained=True, use_branch=True,
                                               use_attention=True, use_apcep=True)),
)


def run_ablation(dataset_root: str, out_dir: str, model, base_cfg: TrackerConfig,
                 meta: dict = None) -> dict:
    """Evaluate the cumulative switch matrix; one row per configuration.

    The pretrained flag is recorded per row but cannot alter a fixed
    checkpoint at inference time; it matters when each row is evaluated
    with its own training run.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for index, (name, flags) in enumerate(ABLATION_ROWS):
        row_cfg = replace(base_cfg, **flags)
        row_dir = os.path.join(out_dir, f"row{index}_{name.replace('+', '_')}")
        report = run_benchmark(
            dataset_root, row_dir, default_track_fn(model, row_cfg),
            meta=dict(meta or {}, ablation_row=name, **flags),
            make_plots=False,
        )
        rows.append({
            "row": index,
            "name": name,
            **flags,
            "mean_success_auc": report["results"]["mean_success_auc"],
            "mean_precision_at_20": report["results"]["mean_precision_at_20"],
        })
    table = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "meta": dict(meta or {}, created_at=time.strftime("%Y-%m-%dT%H:%M:%S")),
        "rows": rows,
    }
    with open(os.path.join(out_dir, "ablation.json"), "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table


def format_ablation_table(table: dict) -> str:
    """Fixed-width text rendering of the ablation comparison."""
    header = f"{'configuration':<36} {'pre':>3} {'brn':>3} {'att':>3} {'apc':>3} {'AUC':>8} {'P@20':>8}"
    lines = [header, "-" * len(header)]
    for row in table["rows"]:
        mark = lambda flag: "x" if row[flag] else "."
        lines.append(
            f"{row['name']:<36} {mark('use_pretrained'):>3} {mark('use_branch'):>3} "
            f"{mark('use_attention'):>3} {mark('use_apcep'):>3} "
            f"{row['mean_success_auc']:>8.4f} {row['mean_precision_at_20']:>8.4f}"
        )
    return "\n".join(lines)
