"""Acceptance gate: every release criterion at its pinned tolerance.

Each test prints one `[acceptance] <criterion>: PASS/FAIL` line (visible
with ``pytest -s`` or in captured output). Run the whole gate with::

    pytest tests/test_acceptance.py -v -s
"""

import json
import math

import numpy as np
import pytest
import torch

from siampf.confidence import apce, apcep
from siampf.correlation import FusionConfig, fuse
from siampf.data import PairSampler
from siampf.evalbench import (oracle_track_fn, precision_metrics, run_ablation,
                              run_benchmark, success_metrics)
from siampf.geometry import TargetState, iou
from siampf.labels import balance_weights, logistic_loss, make_label_map
from siampf.network import SiamPFModel, load_pretrained_backbone
from siampf.seeding import seed_torch
from siampf.sequences import load_sequence
from siampf.specs import backbone_spec, branch_spec
from siampf.tracker import Tracker, TrackerConfig
from siampf.training import TrainConfig, train

from conftest import mini_twin_model


def _verdict(name, ok, detail=""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
    assert ok, f"{name} failed: {detail}"


def _sequence_dirs(root):
    import os
    return sorted(os.path.join(root, d) for d in os.listdir(root))


class TestCriterion1ShapeSuite:
    def test_shape_suite(self):
        """Exact sizes from the valid-conv arithmetic, asserted on executed nets."""
        bb_spec, br_spec = backbone_spec(), branch_spec()
        checks = []
        checks.append(bb_spec.output_size(127) == 3)
        checks.append(bb_spec.output_size(255) == 19)
        checks.append(bb_spec.tap_size(127) == 28)
        checks.append(bb_spec.tap_size(255) == 60)
        checks.append(br_spec.output_size(28) == 5)
        checks.append(br_spec.output_size(60) == 21)
        checks.append(19 - 3 + 1 == 17 and 21 - 5 + 1 == 17)

        torch.manual_seed(0)
        model = SiamPFModel(bb_spec, br_spec).eval()
        with torch.no_grad():
            zf = model.embed_exemplar(torch.rand(1, 3, 127, 127))
            xf = model.embed_instance(torch.rand(1, 3, 255, 255))
            r_v = model.response_v(zf["v"], xf["v"])
            r_a = model.response_a(zf["a"], xf["a"])
        checks.append(tuple(zf["v"].shape) == (1, 256, 3, 3))
        checks.append(tuple(zf["a"].shape) == (1, 256, 5, 5))
        checks.append(tuple(xf["v"].shape) == (1, 256, 19, 19))
        checks.append(tuple(xf["a"].shape) == (1, 256, 21, 21))
        checks.append(tuple(r_v.shape) == (1, 17, 17))
        checks.append(tuple(r_a.shape) == (1, 17, 17))
        _verdict("1 shape suite", all(checks),
                 f"{sum(checks)}/{len(checks)} shape assertions exact")


class TestCriterion2EquationOracles:
    N = 1000

    def test_equation_oracles(self):
        rng = np.random.default_rng(2024)
        failures = []

        # peak-energy score vs loop-based recomputation
        for _ in range(self.N):
            arr = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(1, 8))))
            f_min = arr.min()
            denom = sum((v - f_min) ** 2 for v in arr.ravel()) / arr.size
            expected = 0.0 if denom == 0 else abs(arr.max() - f_min) ** 2 / denom
            if not math.isclose(apce(arr), expected, rel_tol=1e-9, abs_tol=1e-12):
                failures.append("apce")
                break

        # squared variant vs loop-based recomputation
        for _ in range(self.N):
            arr = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(1, 8))))
            f_min = arr.min()
            denom = sum((v - f_min) ** 2 for v in arr.ravel()) / arr.size
            expected = 0.0 if denom == 0 else ((arr.max() ** 2 - f_min**2) / denom) ** 2
            if not math.isclose(apcep(arr), expected, rel_tol=1e-9, abs_tol=1e-12):
                failures.append("apcep")
                break

        # label rule vs double-loop distance check
        for _ in range(self.N):
            size = int(rng.integers(1, 19))
            stride = int(rng.choice([1, 4, 8]))
            radius = float(rng.uniform(0, 40))
            cy = float(rng.uniform(0, size - 1)) if size > 1 else 0.0
            cx = float(rng.uniform(0, size - 1)) if size > 1 else 0.0
            got = make_label_map(size, stride, radius, (cy, cx)).values
            for i in range(size):
                for j in range(size):
                    dist = stride * math.hypot(i - cy, j - cx)
                    want = 1 if dist <= radius else -1
                    if got[i, j] != want:
                        failures.append("labels")
                        break

        # convex fusion vs direct elementwise arithmetic
        for _ in range(self.N):
            side = int(rng.integers(1, 8))
            r_v = rng.standard_normal((side, side))
            r_a = rng.standard_normal((side, side))
            lam = float(rng.uniform(0, 1))
            ours = fuse(torch.tensor(r_v), torch.tensor(r_a),
                        FusionConfig(fusion_lambda=lam)).numpy()
            if not np.allclose(ours, lam * r_v + (1 - lam) * r_a, rtol=1e-12, atol=1e-15):
                failures.append("fuse")
                break

        # invariances at 1e-9 relative
        for _ in range(200):
            arr = rng.standard_normal((5, 5))
            base = apce(arr)
            shift, scale = float(rng.uniform(-30, 30)), float(rng.uniform(0.01, 90))
            if not math.isclose(apce(arr + shift), base, rel_tol=1e-9):
                failures.append("apce shift invariance")
                break
            if not math.isclose(apce(scale * arr), base, rel_tol=1e-9):
                failures.append("apce scale invariance")
                break
            if not math.isclose(apcep(scale * arr), apcep(arr), rel_tol=1e-9):
                failures.append("apcep scale invariance")
                break

        # squared identity at zero floor, 1e-12 relative
        for _ in range(200):
            arr = rng.random((4, 6))
            arr -= arr.min()
            if not math.isclose(apcep(arr), apce(arr) ** 2, rel_tol=1e-12):
                failures.append("apcep = apce^2 at zero floor")
                break

        _verdict("2 equation oracles", not failures, ", ".join(failures) or
                 f"{self.N} random inputs per equation")


class TestCriterion3ConfidenceSeparation:
    def test_zero_floor_amplification(self):
        rng = np.random.default_rng(55)
        counterexamples = 0
        for _ in range(1000):
            arr = rng.random((int(rng.integers(2, 9)), int(rng.integers(2, 9))))
            arr -= arr.min()
            a, p = apce(arr), apcep(arr)
            if (p > a) != (a > 1.0):
                counterexamples += 1
        constant = np.full((4, 4), 3.0)
        if (apcep(constant) > apce(constant)) != (apce(constant) > 1.0):
            counterexamples += 1
        _verdict("3 confidence separation", counterexamples == 0,
                 f"{counterexamples} counterexamples in 1000 zero-floor maps")


class TestCriterion4GradientCheck:
    def test_miniature_graph_gradients(self):
        model = mini_twin_model()
        model.train()
        torch.manual_seed(1)
        z = torch.rand(1, 3, 31, 31, dtype=torch.float64)
        x = torch.rand(1, 3, 47, 47, dtype=torch.float64)
        size = model.fused_response(z, x, 0.75).shape[-1]
        label = make_label_map(size, 2, 3.0)
        weights = balance_weights(label)

        def loss_value():
            return logistic_loss(model.fused_response(z, x, 0.75), label, weights)

        loss_value().backward()
        h = 1e-5
        worst = 0.0
        for name, param in model.named_parameters():
            analytic = param.grad.detach().clone().reshape(-1)
            flat = param.data.reshape(-1)
            fd = torch.zeros_like(analytic)
            for idx in range(flat.numel()):
                original = flat[idx].item()
                flat[idx] = original + h
                with torch.no_grad():
                    up = loss_value()
                flat[idx] = original - h
                with torch.no_grad():
                    down = loss_value()
                flat[idx] = original
                fd[idx] = (up - down) / (2 * h)
            denom = max(analytic.norm().item(), fd.norm().item())
            if denom < 1e-8:
                continue
            worst = max(worst, (analytic - fd).norm().item() / denom)
        _verdict("4 gradient check", worst <= 1e-3,
                 f"worst parameter-group relative error {worst:.2e}")


class TestCriterion5FreezingAudit:
    def test_one_epoch_audit(self, train_dataset_root, fake_vgg16_path):
        seed_torch(8)
        model = SiamPFModel(backbone_spec(), branch_spec())
        load_pretrained_backbone(model.backbone, fake_vgg16_path)
        sequences = [load_sequence(p) for p in _sequence_dirs(train_dataset_root)]
        sampler = PairSampler(sequences, np.random.default_rng(4))

        before = {
            group: [(name, tensor.clone()) for name, tensor in entries]
            for group, entries in model.parameter_groups().items()
        }
        cfg = TrainConfig(epochs=1, batch_size=2, pairs_per_epoch=2,
                          lr_schedule=((0, 1e-2),))
        train(model, sampler, cfg)
        after = model.parameter_groups()

        frozen_ok, trained_ok = True, True
        for i in range(1, 10):
            group = f"backbone.Conv{i}"
            for (name, now), (_, then) in zip(after[group], before[group]):
                if not torch.equal(now, then):
                    frozen_ok = False
        trainable = ["backbone.Conv10", "backbone.Conv11", "attention", "head"]
        trainable += [g for g in after if g.startswith("branch.Conv")]
        for group in trainable:
            moved = any(
                not torch.equal(now, then)
                for (name, now), (_, then) in zip(after[group], before[group])
                if now.dtype.is_floating_point and "num_batches" not in name
            )
            if not moved:
                trained_ok = False
        _verdict("5 freezing audit", frozen_ok and trained_ok,
                 f"frozen bitwise: {frozen_ok}, trainable moved: {trained_ok}")


class TestCriterion6OverfitOracle:
    def test_overfit_single_pair(self, overfit_run):
        model, pair, losses = overfit_run
        ratio = losses[-1] / losses[0]
        with torch.no_grad():
            response = model.fused_response(pair.exemplar[None],
                                            pair.instance[None], 0.75)[0]
        idx = np.unravel_index(int(response.argmax()), response.shape)
        centered = idx == tuple(int(c) for c in pair.label.center)
        _verdict("6 overfit oracle", ratio < 0.1 and centered,
                 f"loss ratio {ratio:.4f}, argmax {idx}")


class TestCriterion7SyntheticTracking:
    def test_held_out_sequences(self, toy_model, eval_dataset_root):
        tracker = Tracker(toy_model, TrackerConfig())
        all_ious, all_p20 = [], []
        for seq_dir in _sequence_dirs(eval_dataset_root):
            sequence = load_sequence(seq_dir)
            boxes, _ = tracker.track_sequence(sequence)
            all_ious.append(np.mean([iou(b, g) for b, g in
                                     zip(boxes, sequence.ground_truth)]))
            _, p20 = precision_metrics(boxes, sequence.ground_truth)
            all_p20.append(p20)
        mean_iou = float(np.mean(all_ious))
        ok = mean_iou >= 0.5 and all(p == 1.0 for p in all_p20)
        _verdict("7 synthetic tracking", ok,
                 f"mean IoU {mean_iou:.3f}, p20 per sequence {all_p20}")


class TestCriterion8MetricHarness:
    def test_fixtures_and_oracle_pipeline(self, eval_dataset_root, tmp_path):
        checks = []
        gt = [TargetState.from_topleft(0, 0, 10, 10)] * 4
        pred = [TargetState.from_topleft(0, 0, 10, 6),
                TargetState.from_topleft(0, 0, 10, 6),
                TargetState.from_topleft(0, 0, 10, 2),
                TargetState.from_topleft(0, 0, 10, 2)]
        curve, _ = success_metrics(pred, gt)
        thresholds = np.linspace(0, 1, 21)
        expected = np.where(thresholds < 0.2, 1.0,
                            np.where(thresholds < 0.6, 0.5, 0.0))
        checks.append(bool(np.array_equal(curve, expected)))

        pred_p = [TargetState.from_topleft(d, 0, 10, 10) for d in (5, 15, 30, 45)]
        _, p20 = precision_metrics(pred_p, gt)
        checks.append(p20 == 0.5)

        curve_perfect, auc_perfect = success_metrics(gt, gt)
        checks.append(auc_perfect == pytest.approx(20.0 / 21.0))

        report = run_benchmark(eval_dataset_root, str(tmp_path / "oracle"),
                               oracle_track_fn, make_plots=False)
        checks.append(report["results"]["mean_success_auc"]
                      == pytest.approx(20.0 / 21.0))
        checks.append(report["results"]["mean_precision_at_20"] == 1.0)
        _verdict("8 metric harness", all(checks),
                 f"{sum(checks)}/{len(checks)} exact fixture checks")


class TestCriterion9AblationPlumbing:
    def test_switch_matrix_end_to_end(self, toy_model, eval_dataset_root, tmp_path):
        table = run_ablation(eval_dataset_root, str(tmp_path / "ablation"),
                             toy_model, TrackerConfig(), meta={"seed": 0})
        rows = table["rows"]
        checks = [len(rows) == 5]
        for row in rows:
            checks.append(0.0 <= row["mean_success_auc"] <= 1.0)
            checks.append(0.0 <= row["mean_precision_at_20"] <= 1.0)
        checks.append([r["use_apcep"] for r in rows] == [False] * 4 + [True])

        # the side branch must actually change the fused map (lambda < 1 path)
        torch.manual_seed(0)
        z, x = torch.rand(1, 3, 127, 127), torch.rand(1, 3, 255, 255)
        with torch.no_grad():
            with_branch = toy_model.fused_response(z, x, 0.75)
            without = toy_model.fused_response(z, x, 1.0)
        checks.append(bool((with_branch - without).abs().max() > 1e-8))

        # disabling the confidence gate removes gate events from diagnostics
        sequence = load_sequence(_sequence_dirs(eval_dataset_root)[0])
        gated = Tracker(toy_model, TrackerConfig(use_apcep=True))
        ungated = Tracker(toy_model, TrackerConfig(use_apcep=False))
        _, diag_on = gated.track_sequence(sequence)
        _, diag_off = ungated.track_sequence(sequence)
        checks.append(any("gate_passed" in d for d in diag_on[1:]))
        checks.append(not any("gate_passed" in d for d in diag_off[1:]))
        _verdict("9 ablation plumbing", all(checks),
                 f"{sum(checks)}/{len(checks)} checks over 5 rows")


class TestCriterion10Determinism:
    def test_identical_seed_and_config(self, toy_model, eval_dataset_root, tmp_path):
        sequence = load_sequence(_sequence_dirs(eval_dataset_root)[0])
        tracker = Tracker(toy_model, TrackerConfig())
        boxes_a, diag_a = tracker.track_sequence(sequence)
        boxes_b, diag_b = tracker.track_sequence(sequence)
        tracks_equal = boxes_a == boxes_b and diag_a == diag_b

        texts = []
        for run in ("r1", "r2"):
            report = run_benchmark(
                eval_dataset_root, str(tmp_path / run),
                lambda seq: (Tracker(toy_model, TrackerConfig()).track_sequence(seq)),
                meta={"seed": 5}, make_plots=False,
            )
            report["meta"].pop("created_at")
            texts.append(json.dumps(report, sort_keys=True))
        _verdict("10 determinism", tracks_equal and texts[0] == texts[1],
                 f"tracks equal: {tracks_equal}, reports equal: {texts[0] == texts[1]}")
