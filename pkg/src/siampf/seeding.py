"""Single-seed determinism: named sub-generators derived from one master seed.

Sampling, weight init and synthetic-data generation each get their own
stream so toggling one consumer cannot shift the randomness of another
(ablation rows stay comparable).
"""

from __future__ import annotations

import numpy as np
import torch

GENERATOR_NAMES = ("init", "sampling", "synth")


def named_generators(seed: int) -> dict:
    """Independent numpy generators for each named consumer."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(GENERATOR_NAMES))
    return {
        name: np.random.Generator(np.random.PCG64(child))
        for name, child in zip(GENERATOR_NAMES, children)
    }


def seed_torch(seed: int) -> None:
    """Seed torch's global generator (used for weight initialization)."""
    derived = int(np.random.SeedSequence(seed).generate_state(1)[0])
    torch.manual_seed(derived)
