"""Seed derivation: every stochastic draw comes from one 64-bit root seed."""
from __future__ import annotations

import random

import numpy as np


def derive_seed(root: int, *keys: int) -> int:
    ss = np.random.SeedSequence(root & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


def derive_rng(root: int, *keys: int) -> random.Random:
    """Independent stream for ``keys`` under ``root``; order of creation is irrelevant."""
    return random.Random(derive_seed(root, *keys))


def geometric0(rng: random.Random, p: float) -> int:
    """Failures before the first success; support {0, 1, ...}."""
    n = 0
    while rng.random() >= p:
        n += 1
    return n
