"""Weighted stochastic-dominance curves and re-centred bootstrap sup tests.

For a sample l with values p_k and weights w_k the order-s functional is

    D_l(p) = sum_k w_k (p - p_k)**(s-1) 1(p_k <= p) / ((s-1)! sum_k w_k)

and the curve for an ordered pair (j, i) is D_j - D_i. Order-s dominance of
j over i holds when the curve is nowhere positive.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .model import DataError, NumericError, WeightedSample, validate_sample
from .resample import LEVELS, resample_counts, run_chunked, stream, upper_critical_values

ORDERS = (1, 2, 3)
# cap on grid cells held in memory at once when evaluating many resamples
_CELLS = 4_000_000


@dataclass(frozen=True)
class GridConfig:
    g_min: int = 100
    g_max: int = 10_000
    merge_sample_points: bool = True


@dataclass(frozen=True, eq=False)
class DominanceCurve:
    order: int
    grid: np.ndarray
    values: np.ndarray
    j: int
    i: int
    N_j: int
    N_i: int

    @property
    def n_ji(self) -> float:
        return self.N_j * self.N_i / (self.N_j + self.N_i)

    def sup(self) -> float:
        return math.sqrt(self.n_ji) * float(np.max(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["p", "value"])
        for p, v in zip(self.grid, self.values):
            writer.writerow([repr(float(p)), repr(float(v))])
        return buf.getvalue()


class _Sorted:
    """A sample sorted by value, ready for repeated evaluation on grids."""

    def __init__(self, sample: WeightedSample):
        if sample.n == 0:
            raise DataError(f"round {sample.round_id}: empty sample")
        order = np.argsort(sample.values, kind="stable")
        self.order = order
        self.x = sample.values[order]
        self.w = sample.weights[order]
        self.n = sample.n

    def evaluate(self, grid: np.ndarray, s: int, origin: float, counts=None) -> np.ndarray:
        """D_l on ``grid``; one row per row of ``counts`` (resample multiplicities)."""
        cw = self.w[None, :] if counts is None else counts[:, self.order] * self.w
        return _functional(self.x - origin, cw, grid - origin, s,
                           np.searchsorted(self.x, grid, side="right"))


def _functional(x, cw, p, s, idx):
    # x ascending; cw rows of weights aligned with x; idx = #{x <= p}
    zero = np.zeros((cw.shape[0], 1))
    cum = np.concatenate([zero, np.cumsum(cw, axis=1)], axis=1)
    total = cum[:, -1:]
    mass = cum[:, idx]
    if s == 1:
        return mass / total
    cum1 = np.concatenate([zero, np.cumsum(cw * x, axis=1)], axis=1)[:, idx]
    if s == 2:
        return (p * mass - cum1) / total
    cum2 = np.concatenate([zero, np.cumsum(cw * (x * x), axis=1)], axis=1)[:, idx]
    return (p * p * mass - 2.0 * p * cum1 + cum2) / (2.0 * total)


def _check_order(s):
    if s not in ORDERS:
        raise ValueError(f"dominance order must be 1, 2 or 3, got {s}")


def dominance_functional(sample_j: WeightedSample, sample_i: WeightedSample, s: int,
                         grid) -> DominanceCurve:
    _check_order(s)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be one-dimensional and ascending")
    sj, si = _Sorted(sample_j), _Sorted(sample_i)
    origin = float(grid[0]) if grid.size else 0.0
    values = sj.evaluate(grid, s, origin)[0] - si.evaluate(grid, s, origin)[0]
    return DominanceCurve(s, grid, values, sample_j.round_id, sample_i.round_id, sj.n, si.n)


def grid_size(n_j: int, n_i: int, config: GridConfig = GridConfig()) -> int:
    n_ji = n_j * n_i / (n_j + n_i)
    return int(min(max(math.floor(n_ji + 0.5), config.g_min), config.g_max))


def grid_for(samples: Sequence[WeightedSample], s: int,
             config: GridConfig = GridConfig()) -> np.ndarray:
    """Equally spaced points over the joint range of a pair of samples.

    For s = 1 and s = 2 the functional is piecewise constant or piecewise
    linear between sample values, so merging those values into the grid
    makes the sup over the grid the exact sup.
    """
    sample_j, sample_i = samples
    values = np.concatenate([sample_j.values, sample_i.values])
    g = grid_size(sample_j.n, sample_i.n, config)
    grid = np.linspace(values.min(), values.max(), g)
    if s <= 2 and config.merge_sample_points:
        grid = np.union1d(grid, values)
    return grid


def sup_statistic(curves: Sequence[DominanceCurve]) -> tuple[float, list[float]]:
    """Max over pairs of the scaled sup of each curve."""
    if not curves:
        raise ValueError("no curves")
    if len({c.order for c in curves}) != 1:
        raise ValueError("curves mix dominance orders")
    per_pair = [c.sup() for c in curves]
    return max(per_pair), per_pair


@dataclass
class SDTestReport:
    s: int
    j: int
    I: list
    d_hat: float
    per_pair: dict
    p_value: float
    B: int
    seed: int
    critical_values: dict = field(default_factory=dict)
    grid_size: dict = field(default_factory=dict)
    draws: np.ndarray = field(default=None, repr=False)

    def rejects(self, level: float = 0.05) -> bool:
        """Reject dominance when the statistic reaches the upper critical value."""
        return self.d_hat >= self.critical_values[level]

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "draws"}
        d["critical_values"] = {f"{k:g}": v for k, v in self.critical_values.items()}
        d["per_pair"] = {str(k): v for k, v in self.per_pair.items()}
        d["grid_size"] = {str(k): v for k, v in self.grid_size.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_samples(samples):
    for smp in samples:
        if smp.n == 0:
            raise DataError(f"round {smp.round_id}: no observations in round")
        problems = validate_sample(smp)
        if problems:
            raise DataError(f"round {smp.round_id}: " + "; ".join(problems[:5]))


def _row_blocks(rows: int, width: int):
    step = max(1, _CELLS // max(width, 1))
    return [(a, min(a + step, rows)) for a in range(0, rows, step)]


@dataclass
class _Pair:
    comp: int
    grid: np.ndarray
    origin: float
    curve: np.ndarray
    scale: float


def _pairs(target, comparisons, s, config):
    out = []
    for n, comp in enumerate(comparisons):
        grid = grid_for((target, comp), s, config)
        curve = dominance_functional(target, comp, s, grid)
        out.append(_Pair(n, grid, float(grid[0]), curve.values, math.sqrt(curve.n_ji)))
    return out


def sd_test(target: WeightedSample, comparisons: Sequence[WeightedSample], s: int,
            B: int = 1000, seed: int = 0, config: GridConfig = GridConfig(),
            jobs: int = 1) -> SDTestReport:
    """Test H0: ``target`` dominates every sample in ``comparisons`` at order s.

    Each replication resamples every sample once (the target's resample is
    shared by all pairs) and records
    ``max_pairs sup_p sqrt(N_ji) (D*_ji(p) - D_ji(p))``.
    """
    _check_order(s)
    if B < 100:
        raise ValueError("need at least 100 bootstrap replications")
    if not comparisons:
        raise ValueError("comparison set is empty")
    _check_samples([target, *comparisons])
    pairs = _pairs(target, comparisons, s, config)
    per_pair = {comparisons[p.comp].round_id: p.scale * float(np.max(p.curve)) for p in pairs}
    d_hat = max(per_pair.values())

    t_sorted = _Sorted(target)
    c_sorted = [_Sorted(c) for c in comparisons]

    def chunk(lo, hi):
        rows = hi - lo
        t_counts = np.empty((rows, t_sorted.n))
        c_counts = [np.empty((rows, c.n)) for c in c_sorted]
        for row, b in enumerate(range(lo, hi)):
            rng = stream(seed, b)
            t_counts[row] = resample_counts(rng, t_sorted.n)
            for n, c in enumerate(c_sorted):
                c_counts[n][row] = resample_counts(rng, c.n)
        stat = np.full(rows, -np.inf)
        for pair in pairs:
            comp = c_sorted[pair.comp]
            for a, z in _row_blocks(rows, pair.grid.size):
                diff = (t_sorted.evaluate(pair.grid, s, pair.origin, t_counts[a:z])
                        - comp.evaluate(pair.grid, s, pair.origin, c_counts[pair.comp][a:z]))
                sup = pair.scale * np.max(diff - pair.curve, axis=1)
                stat[a:z] = np.maximum(stat[a:z], sup)
        if not np.all(np.isfinite(stat)):
            bad = lo + int(np.flatnonzero(~np.isfinite(stat))[0])
            raise NumericError(f"bootstrap replication {bad} produced a non-finite statistic")
        return stat

    draws = run_chunked(chunk, B, jobs)
    return SDTestReport(
        s=s, j=target.round_id, I=[c.round_id for c in comparisons], d_hat=float(d_hat),
        per_pair=per_pair, p_value=float(np.mean(draws > d_hat)), B=int(B), seed=int(seed),
        critical_values=upper_critical_values(draws, LEVELS),
        grid_size={comparisons[p.comp].round_id: int(p.grid.size) for p in pairs},
        draws=draws,
    )


def recentred_sup(pairs_values, pairs, s):
    """Helper for callers that resample values rather than counts.

    ``pairs_values`` maps each pair to ``(target_rows, comp_rows)`` value
    matrices (unit weights). Returns the per-row max over pairs.
    """
    stat = None
    for pair, (vt, vc) in zip(pairs, pairs_values):
        diff = (_rows_functional(vt, pair.grid, s, pair.origin)
                - _rows_functional(vc, pair.grid, s, pair.origin))
        sup = pair.scale * np.max(diff - pair.curve, axis=1)
        stat = sup if stat is None else np.maximum(stat, sup)
    return stat


def _rows_functional(values: np.ndarray, grid: np.ndarray, s: int, origin: float) -> np.ndarray:
    """D_l on ``grid`` for each row of an unweighted value matrix."""
    rows, n = values.shape
    out = np.empty((rows, grid.size))
    x = np.sort(values, axis=1)
    ones = np.ones((1, n))
    for r in range(rows):
        idx = np.searchsorted(x[r], grid, side="right")
        out[r] = _functional(x[r] - origin, ones, grid - origin, s, idx)[0]
    return out
