"""Per-replication random streams and chunked execution of bootstrap loops.

Each replication ``b`` draws from its own generator seeded by
``(seed, b, attempt)``, and replications are grouped into fixed-size chunks.
Results therefore do not depend on how many workers process the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 50
LEVELS = (0.01, 0.05, 0.10)


def stream(seed: int, b: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(b), int(attempt)]))


def resample_counts(rng: np.random.Generator, n: int) -> np.ndarray:
    """How often each of ``n`` observations appears in one bootstrap draw."""
    return np.bincount(rng.integers(0, n, n), minlength=n)


def run_chunked(fn: Callable[[int, int], np.ndarray], B: int, jobs: int = 1) -> np.ndarray:
    """Evaluate ``fn(lo, hi)`` over fixed chunks of ``range(B)`` and concatenate."""
    spans = [(lo, min(lo + CHUNK, B)) for lo in range(0, B, CHUNK)]
    if jobs <= 1 or len(spans) == 1:
        parts = [fn(lo, hi) for lo, hi in spans]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda s: fn(*s), spans))
    return np.concatenate(parts)


def order_index(fraction: float, B: int) -> int:
    """Zero-based position of the ``[fraction * B]``-th order statistic."""
    k = int(math.floor(fraction * B + 1e-9))
    return min(max(k, 1), B) - 1


def lower_critical_values(draws: np.ndarray, levels: Sequence[float] = LEVELS) -> dict[float, float]:
    ordered = np.sort(draws)
    return {g: float(ordered[order_index(g, ordered.size)]) for g in levels}


def upper_critical_values(draws: np.ndarray, levels: Sequence[float] = LEVELS) -> dict[float, float]:
    ordered = np.sort(draws)
    return {g: float(ordered[order_index(1.0 - g, ordered.size)]) for g in levels}


def display_p(p: float) -> str:
    """Round a p-value up to the next usual significance level."""
    for level in LEVELS:
        if p <= level:
            return f"<={level:.2f}"
    return ">0.10"
