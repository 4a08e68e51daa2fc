"""Shared Monte-Carlo designs for the simulation tests."""

import numpy as np

from housewelfare.hedonic import HedonicConfig, fit_partial_linear
from housewelfare.model import WeightedSample
from housewelfare.synth import Law, simulate_hedonic

QUARTERS = {0: [0, 1], 1: [2, 3]}


def hedonic_pair(rep: int, n: int = 400, noise: float = 0.3):
    """Two rounds drawn from one partial-linear process (sin-cos surface)."""
    fits = {}
    for r, quarters in QUARTERS.items():
        rng = np.random.default_rng(np.random.SeedSequence([rep, r]))
        data, _ = simulate_hedonic(n, quarters, rng, surface="sincos", noise=noise, round_id=r)
        fits[r] = fit_partial_linear(data, HedonicConfig(seed=rep))
    return fits


def flat_index():
    return np.zeros(4)


def shifted_index(shift=0.5):
    """Round 1's quarters sit ``shift`` log points above round 0's."""
    return np.array([0.0, 0.0, shift, shift])


def law_pair(rep: int, law_j: Law, law_i: Law, n: int):
    rng = np.random.default_rng(np.random.SeedSequence([rep, 99]))
    j = WeightedSample.unweighted(law_j.sample(rng, n), 1)
    i = WeightedSample.unweighted(law_i.sample(rng, n), 0)
    return j, i
