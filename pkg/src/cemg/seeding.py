"""Deterministic seeding for all RNG sources.

Training contracts promise bitwise reproducibility at thread count 1, so
seed_all also pins the torch thread pool.
"""
from __future__ import annotations

import random

import numpy as np
import torch


def seed_all(seed: int) -> np.random.Generator:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.set_num_threads(1)
    return np.random.default_rng(seed)
