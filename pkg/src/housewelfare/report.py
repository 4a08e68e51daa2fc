"""Weighted distribution summaries for the violin-style report."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .model import WeightedSample

QUANTILE_RULE = "inverse weight-CDF; average of adjacent values where the CDF equals the level"


def weighted_quantile(values, weights, q: float) -> float:
    """Smallest value whose cumulative weight share reaches ``q``.

    Where the weight CDF equals ``q`` exactly over a flat stretch, the two
    values bounding that stretch are averaged (so the median of an even
    equal-weight sample is the midpoint of the central pair).
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample")
    order = np.argsort(values, kind="stable")
    x, w = values[order], weights[order]
    cdf = np.cumsum(w)
    cdf = cdf / cdf[-1]
    tol = 1e-12
    k = int(np.searchsorted(cdf, q - tol, side="left"))
    k = min(k, x.size - 1)
    if abs(cdf[k] - q) <= tol and k < x.size - 1:
        return float((x[k] + x[k + 1]) / 2.0)
    return float(x[k])


def distribution_summary(sample: WeightedSample, points: int = 200) -> dict:
    """Quartiles, mean and a weighted Gaussian KDE trace (Silverman bandwidth)."""
    v, w = sample.values, sample.weights
    out = {
        "n": sample.n,
        "q1": weighted_quantile(v, w, 0.25),
        "median": weighted_quantile(v, w, 0.5),
        "q3": weighted_quantile(v, w, 0.75),
        "mean": float(np.sum(v * w) / np.sum(w)),
        "min": float(v.min()),
        "max": float(v.max()),
    }
    grid = np.array([])
    density = np.array([])
    if sample.n > 1 and np.ptp(v) > 0:
        kde = stats.gaussian_kde(v, bw_method="silverman", weights=w)
        h = float(np.sqrt(kde.covariance[0, 0]))
        grid = np.linspace(v.min() - 3 * h, v.max() + 3 * h, points)
        density = kde(grid)
    out["kde_grid"] = grid
    out["kde_density"] = density
    return out
