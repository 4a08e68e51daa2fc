"""Atkinson welfare, equivalent wealth and the bootstrap wealth-ratio test."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import DataError, NumericError, WeightedSample, validate_sample
from .resample import LEVELS, lower_critical_values, resample_counts, run_chunked, stream

NU_GRID = (0.0, 1.0, 1.5, 2.0, 2.5)
VARIANCE_MODES = ("population", "estimator")


def utility(p, nu: float):
    """Atkinson utility: ``p**(1-nu)/(1-nu)``, or ``log p`` when nu == 1."""
    p = np.asarray(p, dtype=float)
    if nu < 0:
        raise ValueError(f"inequality aversion must be non-negative, got {nu}")
    if np.any(~(p > 0)):
        raise DataError("utility is defined for positive wealth only")
    if nu == 1:
        out = np.log(p)
    else:
        out = p ** (1.0 - nu) / (1.0 - nu)
    return out if out.ndim else float(out)


def inverse_utility(w: float, nu: float) -> float:
    if nu == 1:
        return float(np.exp(w))
    base = (1.0 - nu) * w
    if not base > 0:
        raise NumericError(f"welfare {w} has no equivalent wealth for nu={nu}")
    return float(base ** (1.0 / (1.0 - nu)))


@dataclass(frozen=True)
class WelfareEstimate:
    nu: float
    W_hat: float
    sigma2_W: float
    e_hat: float
    N: int


def welfare_estimate(sample: WeightedSample, nu: float) -> WelfareEstimate:
    if sample.n == 0:
        raise DataError(f"round {sample.round_id}: no observations in round")
    u = utility(sample.values, nu)
    w = sample.weights
    n = sample.n
    W = float(np.sum(u * w) / n)
    sigma2 = float(np.sum((u - W) ** 2 * w) / n)
    return WelfareEstimate(nu, W, sigma2, inverse_utility(W, nu), n)


def _ratio(W_r, W_0, s2_r, s2_0, nu):
    """Ratio and delta-method standard deviation; works elementwise on arrays."""
    if nu == 1:
        psi = np.exp(W_r - W_0)
        var = np.exp(2.0 * (W_r - W_0)) * (s2_r + s2_0)
    else:
        q = W_r / W_0
        psi = q ** (1.0 / (1.0 - nu))
        grad = q ** (nu / (1.0 - nu)) / ((1.0 - nu) * W_0)
        var = grad ** 2 * (s2_r + s2_0 * q ** 2)
    return psi, np.sqrt(var)


def wealth_ratio(r_est: WelfareEstimate, base_est: WelfareEstimate,
                 variance_mode: str = "population") -> tuple[float, float]:
    """Equivalent-wealth ratio of round over base and its delta-method sd.

    ``variance_mode="population"`` plugs in the welfare variances as
    estimated; ``"estimator"`` divides each by its sample size first.
    """
    if r_est.nu != base_est.nu:
        raise ValueError("estimates use different inequality aversion")
    nu = r_est.nu
    if nu != 1:
        if base_est.W_hat == 0:
            raise NumericError("base-period welfare is zero")
        if np.sign(r_est.W_hat) != np.sign(base_est.W_hat):
            raise NumericError("welfare estimates differ in sign")
    s2_r, s2_0 = _variances(r_est, base_est, variance_mode)
    psi, sd = _ratio(r_est.W_hat, base_est.W_hat, s2_r, s2_0, nu)
    return float(psi), float(sd)


def _variances(r_est, base_est, variance_mode):
    if variance_mode == "population":
        return r_est.sigma2_W, base_est.sigma2_W
    if variance_mode == "estimator":
        return r_est.sigma2_W / r_est.N, base_est.sigma2_W / base_est.N
    raise ValueError(f"unknown variance mode {variance_mode!r}")


@dataclass
class RatioTestReport:
    nu: float
    psi_hat: float
    sigma_psi: float
    theta: float
    p_value: float
    B: int
    seed: int
    critical_values: dict = field(default_factory=dict)
    round_id: int | None = None
    base_id: int | None = None
    draws: np.ndarray = field(default=None, repr=False)

    def rejects(self, level: float = 0.05) -> bool:
        """Reject psi >= 1 when theta is at or below the lower critical value."""
        return self.theta <= self.critical_values[level]

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "draws"}
        d["critical_values"] = {f"{k:g}": v for k, v in self.critical_values.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _bootstrap_moments(u, w, counts):
    """Welfare and welfare variance per resample (rows of ``counts``)."""
    cw = counts * w
    total = cw.sum(axis=1)
    shift = float(np.sum(u * w) / np.sum(w))
    uc = u - shift
    m1 = (cw @ uc) / total
    m2 = (cw @ (uc * uc)) / total
    var = m2 - m1 * m1
    # a resample of identical values leaves only rounding noise
    var[var <= 1e-13 * m2] = 0.0
    return m1 + shift, var


def ratio_test(round_sample: WeightedSample, base_sample: WeightedSample, nu: float,
               B: int = 1000, seed: int = 0, variance_mode: str = "population",
               jobs: int = 1) -> RatioTestReport:
    """Test H0: psi >= 1 against psi < 1 with the re-centred bootstrap.

    Value/weight pairs are resampled jointly within each sample and the
    resampled weights rescaled to sum to the sample size.
    """
    if B < 100:
        raise ValueError("need at least 100 bootstrap replications")
    for s in (round_sample, base_sample):
        if s.n == 0:
            raise DataError(f"round {s.round_id}: no observations in round")
        problems = validate_sample(s)
        if problems:
            raise DataError(f"round {s.round_id}: " + "; ".join(problems[:5]))
    est_r = welfare_estimate(round_sample, nu)
    est_0 = welfare_estimate(base_sample, nu)
    psi, sd = wealth_ratio(est_r, est_0, variance_mode)
    if not sd > 0:
        raise NumericError("degenerate ratio variance in the original samples")
    theta = (psi - 1.0) / sd

    u_r, w_r = utility(round_sample.values, nu), round_sample.weights
    u_0, w_0 = utility(base_sample.values, nu), base_sample.weights
    n_r, n_0 = round_sample.n, base_sample.n
    size_r = 1.0 / n_r if variance_mode == "estimator" else 1.0
    size_0 = 1.0 / n_0 if variance_mode == "estimator" else 1.0

    def replicate(bs, attempt):
        C_r = np.empty((len(bs), n_r))
        C_0 = np.empty((len(bs), n_0))
        for row, b in enumerate(bs):
            rng = stream(seed, b, attempt)
            C_r[row] = resample_counts(rng, n_r)
            C_0[row] = resample_counts(rng, n_0)
        W_r, s2_r = _bootstrap_moments(u_r, w_r, C_r)
        W_0, s2_0 = _bootstrap_moments(u_0, w_0, C_0)
        with np.errstate(all="ignore"):
            psi_b, sd_b = _ratio(W_r, W_0, s2_r * size_r, s2_0 * size_0, nu)
            theta_b = (psi_b - psi) / sd_b
            ok = np.isfinite(theta_b) & (sd_b > 0)
            if nu != 1:
                ok &= np.sign(W_r) == np.sign(W_0)
        return theta_b, ok

    def chunk(lo, hi):
        theta_b, ok = replicate(range(lo, hi), 0)
        for row in np.flatnonzero(~ok):
            b = lo + row
            redo, redo_ok = replicate([b], 1)
            if not redo_ok[0]:
                raise NumericError(f"bootstrap replication {b} degenerate after redraw")
            theta_b[row] = redo[0]
        return theta_b

    draws = run_chunked(chunk, B, jobs)
    p = float(np.mean(draws <= theta))
    return RatioTestReport(
        nu=float(nu), psi_hat=psi, sigma_psi=sd, theta=float(theta), p_value=p, B=int(B),
        seed=int(seed), critical_values=lower_critical_values(draws, LEVELS),
        round_id=round_sample.round_id, base_id=base_sample.round_id, draws=draws,
    )
