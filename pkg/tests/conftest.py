"""Shared fixtures: synthetic datasets, a toy-trained model, fake VGG16 weights.

The toy model is trained once per session on generated moving-shape
sequences (~30 s on CPU) and reused by tracker, benchmark and acceptance
tests. Evaluation sequences come from a disjoint seed so they are held out.
"""

import numpy as np
import pytest
import torch

from siampf.data import FixedPairSampler, PairSampler
from siampf.network import SiamPFModel
from siampf.seeding import named_generators, seed_torch
from siampf.sequences import load_sequence
from siampf.specs import NetworkSpec, conv, maxpool, tiny_backbone_spec, tiny_branch_spec
from siampf.synthetic import make_synthetic_dataset, make_synthetic_sequence
from siampf.training import TrainConfig, save_checkpoint, train

TRAIN_SEED = 7
EVAL_SEED = 1234
STATIC_SEED = 99

# torchvision VGG16 feature indices of its 13 conv layers, and their shapes
VGG16_CONV_LAYOUT = [
    (0, 64, 3), (2, 64, 64), (5, 128, 64), (7, 128, 128),
    (10, 256, 128), (12, 256, 256), (14, 256, 256),
    (17, 512, 256), (19, 512, 512), (21, 512, 512),
    (24, 512, 512), (26, 512, 512), (28, 512, 512),
]


@pytest.fixture(scope="session")
def train_dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("train_data")
    gens = named_generators(TRAIN_SEED)
    make_synthetic_dataset(str(root), 12, 16, gens["synth"], max_step=3.0)
    return str(root)


@pytest.fixture(scope="session")
def eval_dataset_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval_data")
    gens = named_generators(EVAL_SEED)
    make_synthetic_dataset(str(root), 3, 25, gens["synth"], max_step=3.0, scale_drift=0.01)
    return str(root)


@pytest.fixture(scope="session")
def static_sequence_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("static_data") / "static_000"
    make_synthetic_sequence(str(path), 50, named_generators(STATIC_SEED)["synth"], max_step=0.0)
    return str(path)


@pytest.fixture(scope="session")
def toy_train_config():
    return TrainConfig(
        epochs=3, batch_size=8, lr_schedule=((0, 1e-2), (2, 1e-3)),
        pairs_per_epoch=320, seed=TRAIN_SEED,
    )


@pytest.fixture(scope="session")
def toy_model(train_dataset_root, toy_train_config):
    """Tiny-architecture model trained on the synthetic training set."""
    gens = named_generators(TRAIN_SEED)
    seed_torch(TRAIN_SEED)
    model = SiamPFModel(tiny_backbone_spec(), tiny_branch_spec())
    sequences = [load_sequence(p) for p in _sequence_dirs(train_dataset_root)]
    sampler = PairSampler(sequences, gens["sampling"],
                          translate_jitter=24.0, label_radius=8.0)
    history = train(model, sampler, toy_train_config)
    model.eval()
    model.toy_history = history
    return model


@pytest.fixture(scope="session")
def toy_checkpoint_path(tmp_path_factory, toy_model, toy_train_config):
    path = tmp_path_factory.mktemp("ckpt") / "toy_checkpoint.pt"
    save_checkpoint(str(path), toy_model, toy_train_config)
    return str(path)


@pytest.fixture(scope="session")
def fake_vgg16_path(tmp_path_factory):
    """Random weights in the exact torchvision VGG16 state-dict layout."""
    rng = torch.Generator().manual_seed(1)
    state = {}
    for idx, (feat_idx, cout, cin) in enumerate(VGG16_CONV_LAYOUT):
        state[f"features.{feat_idx}.weight"] = torch.randn(
            (cout, cin, 3, 3), generator=rng
        ) * 0.05
        state[f"features.{feat_idx}.bias"] = torch.randn((cout,), generator=rng) * 0.05
    path = tmp_path_factory.mktemp("weights") / "vgg16_fake.pth"
    torch.save(state, str(path))
    return str(path)


def _sequence_dirs(root):
    import os

    return sorted(os.path.join(root, d) for d in os.listdir(root)
                  if os.path.isdir(os.path.join(root, d)))


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def overfit_run(train_dataset_root):
    """200 SGD steps at lr 1e-2 on one fixed zero-jitter pair.

    Moderate momentum keeps the trajectory monotone once converged; the
    default 0.9 overshoots near the optimum at this step count.
    """
    sequences = [load_sequence(p) for p in _sequence_dirs(train_dataset_root)]
    pair = PairSampler(sequences, np.random.default_rng(3),
                       translate_jitter=0.0, scale_jitter=0.0).sample()
    seed_torch(17)
    model = SiamPFModel(tiny_backbone_spec(), tiny_branch_spec())
    cfg = TrainConfig(epochs=1, batch_size=1, lr_schedule=((0, 1e-2),),
                      pairs_per_epoch=200, momentum=0.6)
    history = train(model, FixedPairSampler(pair), cfg)
    model.eval()
    return model, pair, history["losses"]


def mini_twin_model(response_scale=1e-2) -> SiamPFModel:
    """Miniature full graph (<=4 channels) for finite-difference checks.

    Geometry: 31x31 exemplar / 47x47 instance produce 4/8 backbone heads and
    4/8 branch heads, so both correlation maps are 5x5.
    """
    backbone = NetworkSpec("mini_backbone", (
        conv(3, 3, 4), maxpool(2, 2), conv(3, 4, 4), maxpool(2, 2),
        conv(3, 4, 4, post="none"),
    ), tap_index=1)
    branch = NetworkSpec("mini_branch", (
        conv(3, 4, 4), maxpool(2, 2), conv(3, 4, 4, post="none"),
    ))
    torch.manual_seed(0)
    return SiamPFModel(backbone, branch, attention_reduction=4,
                       response_scale=response_scale).double()
