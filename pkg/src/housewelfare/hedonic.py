"""Partial-linear hedonic model with a penalised spatial spline.

Log real price is regressed on quarter dummies, structural characteristics
and a smooth surface in the two location coordinates. The surface is a
low-rank thin-plate spline: an unpenalised affine part (which also carries
the global intercept) plus radial basis functions ``r**2 log r`` centred at
k-means knots, reparametrised so the penalty is a ridge on the basis
coefficients. The smoothing parameter is chosen by GCV.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.cluster.vq import kmeans2

from .dominance import GridConfig, SDTestReport, _check_order, _pairs, recentred_sup
from .model import DataError, NumericError, RoundPartition, TransactionRecord, WeightedSample
from .resample import LEVELS, run_chunked, stream, upper_critical_values

log = logging.getLogger(__name__)

LAMBDA_GRID = tuple(np.logspace(-6, 6, 41))


@dataclass
class HedonicData:
    """Design inputs for one round: log real prices, global quarter index,
    characteristics and planar locations."""

    y: np.ndarray
    quarter: np.ndarray
    chars: np.ndarray
    locs: np.ndarray
    char_names: Sequence[str] = ()
    round_id: int = 0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.quarter = np.asarray(self.quarter, dtype=int)
        self.chars = np.asarray(self.chars, dtype=float).reshape(self.y.size, -1)
        self.locs = np.asarray(self.locs, dtype=float).reshape(self.y.size, 2)
        if not self.char_names:
            self.char_names = [f"c{n}" for n in range(self.chars.shape[1])]
        self.char_names = list(self.char_names)

    @property
    def n(self) -> int:
        return int(self.y.size)


def data_from_records(records: Sequence[TransactionRecord], real_prices, partition: RoundPartition,
                      round_id: int) -> HedonicData:
    """Build the design inputs; floor area enters in logs."""
    real_prices = np.asarray(real_prices, dtype=float)
    names = ["log_area", "storey", "lease", "age"]
    source = ["area", "storey", "lease", "age"]
    chars = np.full((len(records), len(names)), np.nan)
    for k, rec in enumerate(records):
        for c, key in enumerate(source):
            v = rec.characteristics.get(key, math.nan)
            if key == "area" and v == v:
                v = math.log(v) if v > 0 else math.nan
            chars[k, c] = v
    return HedonicData(
        y=np.log(real_prices),
        quarter=np.array([partition.quarter_index(r.date) for r in records], dtype=int),
        chars=chars,
        locs=np.array([r.location for r in records], dtype=float).reshape(-1, 2),
        char_names=names,
        round_id=round_id,
    )


@dataclass(frozen=True)
class HedonicConfig:
    max_knots: int = 150
    obs_per_knot: int = 20
    lam_grid: Sequence[float] = LAMBDA_GRID
    lam: Optional[float] = None  # fixed relative smoothing parameter; skips GCV
    seed: int = 0


def _radial(r):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r * r * np.log(r)
    out[r == 0] = 0.0
    return out


def _distances(a, b):
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))


@dataclass
class Spline:
    knots: np.ndarray
    center: np.ndarray
    scale: float
    transform: np.ndarray
    affine: np.ndarray  # intercept, x, y coefficients on standardised coordinates
    coef: np.ndarray

    def standardise(self, locs):
        return (np.asarray(locs, dtype=float) - self.center) / self.scale

    def basis(self, locs):
        return _radial(_distances(self.standardise(locs), self.knots)) @ self.transform

    def __call__(self, locs) -> np.ndarray:
        z = self.standardise(locs)
        return self.affine[0] + z @ self.affine[1:] + self.basis(locs) @ self.coef


@dataclass(eq=False)
class HedonicFit:
    round_id: int
    names: list
    coef: np.ndarray
    delta: dict
    beta: dict
    spline: Spline
    lam: float
    lam_rel: float
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    quarter: np.ndarray
    r2: float
    gcv: float
    edf: float
    smoother: np.ndarray = field(repr=False)
    shrink: np.ndarray = field(repr=False)

    def surface(self, locs) -> np.ndarray:
        return self.spline(locs)

    def refit_residuals(self, Y: np.ndarray) -> np.ndarray:
        """Residuals after refitting each row of ``Y`` at this fit's lambda."""
        return Y - ((Y @ self.smoother) * self.shrink) @ self.smoother.T

    def summary(self) -> dict:
        return {
            "round": self.round_id,
            "n": int(self.y.size),
            "coefficients": {k: float(v) for k, v in zip(self.names, self.coef)},
            "lambda": self.lam,
            "lambda_relative": self.lam_rel,
            "gcv": self.gcv,
            "r2": self.r2,
            "edf": self.edf,
            "knots": int(self.spline.knots.shape[0]),
        }


def _first_dependent(X, names, tol=1e-9):
    for j in range(1, X.shape[1] + 1):
        if np.linalg.matrix_rank(X[:, :j], tol=tol * max(1.0, np.abs(X[:, :j]).max()) * X.shape[0]) < j:
            return names[j - 1]
    return None


def _choose_knots(z, n, config):
    uniq = np.unique(z, axis=0)
    K = min(config.max_knots, math.ceil(n / config.obs_per_knot), uniq.shape[0])
    if K >= uniq.shape[0]:
        return uniq
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        centers, _ = kmeans2(z, K, minit="++", rng=np.random.default_rng(config.seed))
    return np.unique(centers, axis=0)


def fit_partial_linear(data: HedonicData, config: HedonicConfig = HedonicConfig()) -> HedonicFit:
    n = data.n
    if n == 0:
        raise DataError(f"round {data.round_id}: no observations in round")

    chars, char_names = [], []
    for c, name in enumerate(data.char_names):
        col = data.chars[:, c]
        if np.any(~np.isfinite(col)):
            log.info("round %s: dropping characteristic %s (missing values)", data.round_id, name)
            continue
        if np.ptp(col) == 0:
            log.info("round %s: dropping characteristic %s (constant)", data.round_id, name)
            continue
        chars.append(col)
        char_names.append(name)

    center = data.locs.mean(axis=0)
    scale = float(data.locs.std())
    if not scale > 0:
        raise DataError(f"round {data.round_id}: all locations coincide")
    z = (data.locs - center) / scale

    quarters = np.unique(data.quarter)
    dummies = (data.quarter[:, None] == quarters[None, 1:]).astype(float)
    X = np.column_stack([np.ones(n), z, dummies] + chars) if chars else np.column_stack([np.ones(n), z, dummies])
    names = ["intercept", "loc_x", "loc_y"] + [f"q{q}" for q in quarters[1:]] + char_names

    pivots = linalg.qr(X, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(pivots))
    if diag.size and diag.min() <= 1e-10 * diag.max():
        bad = _first_dependent(X, names)
        raise DataError(f"round {data.round_id}: rank-deficient design at column {bad!r}")

    knots = _choose_knots(z, n, config)
    omega = _radial(_distances(knots, knots))
    evals, evecs = np.linalg.eigh(omega)
    keep = np.abs(evals) > 1e-10 * np.abs(evals).max()
    transform = evecs[:, keep] / np.sqrt(np.abs(evals[keep]))
    Z = _radial(_distances(z, knots)) @ transform
    p_x, K = X.shape[1], Z.shape[1]
    if n <= p_x + K:
        raise DataError(f"round {data.round_id}: {n} observations for {p_x + K} coefficients")

    A = np.hstack([X, Z])
    Q, R = np.linalg.qr(A)
    if np.abs(np.diag(R)).min() <= 1e-12 * np.abs(np.diag(R)).max():
        raise NumericError(f"round {data.round_id}: spline basis is numerically singular")
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    penalty = np.zeros(p_x + K)
    penalty[p_x:] = 1.0
    M = (Rinv.T * penalty) @ Rinv
    e, U = np.linalg.eigh((M + M.T) / 2.0)
    e = np.clip(e, 0.0, None)
    S = Q @ U
    b = S.T @ data.y
    outside = float(data.y @ data.y - b @ b)
    pen_scale = float((Z * Z).sum() / K)

    def score(lam_rel):
        f = 1.0 / (1.0 + lam_rel * pen_scale * e)
        edf = float(f.sum())
        rss = max(outside, 0.0) + float((((1.0 - f) * b) ** 2).sum())
        return n * rss / (n - edf) ** 2, edf, f

    if config.lam is not None:
        lam_rel = float(config.lam)
        gcv, edf, f = score(lam_rel)
    else:
        grid = list(config.lam_grid)
        scores = [score(l)[0] for l in grid]
        best = int(np.argmin(scores))
        if best in (0, len(grid) - 1):
            log.warning("round %s: GCV minimum at the boundary of the lambda grid", data.round_id)
        lam_rel = float(grid[best])
        gcv, edf, f = score(lam_rel)

    coef = Rinv @ (U @ (f * b))
    fitted = A @ coef
    resid = data.y - fitted
    tss = float(((data.y - data.y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0

    spline = Spline(knots, center, scale, transform, coef[:3].copy(), coef[p_x:].copy())
    n_q = len(quarters) - 1
    return HedonicFit(
        round_id=data.round_id,
        names=names + [f"u{k}" for k in range(K)],
        coef=coef,
        delta={int(q): float(c) for q, c in zip(quarters[1:], coef[3:3 + n_q])},
        beta={nm: float(c) for nm, c in zip(char_names, coef[3 + n_q:p_x])},
        spline=spline,
        lam=lam_rel * pen_scale,
        lam_rel=lam_rel,
        y=data.y,
        fitted=fitted,
        residuals=resid,
        quarter=data.quarter,
        r2=r2,
        gcv=float(gcv),
        edf=edf,
        smoother=S,
        shrink=f,
    )


@dataclass(eq=False)
class LevelEnhancedSample:
    round_id: int
    quarter: np.ndarray
    residuals: np.ndarray
    log_values: np.ndarray

    def as_sample(self, scale: str = "price", sector: str = "public") -> WeightedSample:
        """Unit-weight sample of exponentiated ("price") or log values."""
        if scale == "price":
            return WeightedSample.unweighted(np.exp(self.log_values), self.round_id, sector=sector)
        if scale == "log":
            return WeightedSample.unweighted(self.log_values, self.round_id, sector=sector, kind="residual")
        raise ValueError(f"unknown scale {scale!r}")


def _index_levels(index, quarter, round_id):
    index = np.asarray(index, dtype=float)
    if quarter.size and (quarter.min() < 0 or quarter.max() >= index.size):
        raise DataError(f"round {round_id}: transactions fall outside the price index quarters")
    return index[quarter]


def level_enhanced(fit: HedonicFit, index) -> LevelEnhancedSample:
    """Residual plus the log real index level of the transaction's quarter."""
    levels = _index_levels(index, fit.quarter, fit.round_id)
    return LevelEnhancedSample(fit.round_id, fit.quarter, fit.residuals, levels + fit.residuals)


def residual_bootstrap_sd(target: HedonicFit, comparisons: Sequence[HedonicFit], index, s: int,
                          B: int = 1000, seed: int = 0, scale: str = "price",
                          config: GridConfig = GridConfig(), jobs: int = 1) -> SDTestReport:
    """Dominance test on level-enhanced residuals with a residual bootstrap.

    Each replication rebuilds artificial log prices (fitted values plus
    residuals drawn with replacement), refits every round at its original
    lambda, and recomputes the level-enhanced values. Observations are not
    re-weighted.
    """
    _check_order(s)
    if B < 100:
        raise ValueError("need at least 100 bootstrap replications")
    if not comparisons:
        raise ValueError("comparison set is empty")
    fits = [target, *comparisons]
    samples = [level_enhanced(f, index).as_sample(scale) for f in fits]
    levels = [_index_levels(index, f.quarter, f.round_id) for f in fits]
    pairs = _pairs(samples[0], samples[1:], s, config)
    per_pair = {comparisons[p.comp].round_id: p.scale * float(np.max(p.curve)) for p in pairs}
    d_hat = max(per_pair.values())

    def chunk(lo, hi):
        rows = hi - lo
        draws = [np.empty((rows, f.y.size), dtype=int) for f in fits]
        for row, b in enumerate(range(lo, hi)):
            rng = stream(seed, b)
            for d, f in zip(draws, fits):
                d[row] = rng.integers(0, f.y.size, f.y.size)
        values = []
        for d, f, lev in zip(draws, fits, levels):
            Y = f.fitted[None, :] + f.residuals[d]
            log_v = lev[None, :] + f.refit_residuals(Y)
            values.append(np.exp(log_v) if scale == "price" else log_v)
        for v in values:
            bad = np.flatnonzero(~np.all(np.isfinite(v), axis=1))
            if bad.size:
                raise NumericError(f"refit failed in bootstrap replication {lo + int(bad[0])}")
        return recentred_sup([(values[0], values[1 + p.comp]) for p in pairs], pairs, s)

    stats = run_chunked(chunk, B, jobs)
    return SDTestReport(
        s=s, j=target.round_id, I=[f.round_id for f in comparisons], d_hat=float(d_hat),
        per_pair=per_pair, p_value=float(np.mean(stats > d_hat)), B=int(B), seed=int(seed),
        critical_values=upper_critical_values(stats, LEVELS),
        grid_size={comparisons[p.comp].round_id: int(p.grid.size) for p in pairs},
        draws=stats,
    )
