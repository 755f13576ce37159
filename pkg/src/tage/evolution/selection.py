"""Truncation plus probabilistic tournament selection."""
from __future__ import annotations

import random
from typing import Sequence


def rank_probabilities(n_t: int, p_t: float) -> list[float]:
    """Probability of returning the i-th best of a tournament of ``n_t``."""
    probs = [p_t * (1 - p_t) ** i for i in range(n_t - 1)]
    probs.append((1 - p_t) ** (n_t - 1))
    return probs


def tournament_rank(rng: random.Random, n_t: int, p_t: float) -> int:
    """Zero-based rank drawn from :func:`rank_probabilities`."""
    for i in range(n_t - 1):
        if rng.random() < p_t:
            return i
    return n_t - 1


def tournament(rng: random.Random, pool_size: int, n_t: int, p_t: float) -> int:
    """Index into a pool sorted best first.

    ``n_t`` entrants are drawn uniformly with replacement; since the pool is
    already in canonical order, ordering entrants by index orders them by
    fitness with ties broken reproducibly.
    """
    if pool_size <= 0:
        raise ValueError("empty selection pool")
    entrants = sorted(rng.randrange(pool_size) for _ in range(n_t))
    return entrants[tournament_rank(rng, n_t, p_t)]


def select(pool: Sequence, rng: random.Random, n_t: int = 10, p_t: float = 0.5):
    """Pick one member of ``pool``, which must be sorted best first."""
    return pool[tournament(rng, len(pool), n_t, p_t)]
