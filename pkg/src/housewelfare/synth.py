"""Synthetic scenarios and closed-form dominance oracles."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .hedonic import HedonicData
from .model import (
    ConfigError,
    RoundPartition,
    TransactionRecord,
    WeightedSample,
    month_label,
    quarter_label,
)


@dataclass(frozen=True)
class Law:
    """A price law with a closed-form CDF: uniform, lognormal or exponential."""

    kind: str
    params: Mapping[str, float]

    def __post_init__(self):
        needed = {"uniform": ("low", "high"), "lognormal": ("mu", "sigma"), "exponential": ("rate",)}
        if self.kind not in needed:
            raise ConfigError(f"unsupported law {self.kind!r}")
        missing = [k for k in needed[self.kind] if k not in self.params]
        if missing:
            raise ConfigError(f"{self.kind} law needs {', '.join(missing)}")

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", {"low": low, "high": high})

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls("lognormal", {"mu": mu, "sigma": sigma})

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", {"rate": rate})

    @classmethod
    def from_dict(cls, d: Mapping) -> "Law":
        d = dict(d)
        return cls(d.pop("kind"), {k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @property
    def lower(self) -> float:
        return self.params["low"] if self.kind == "uniform" else 0.0

    @property
    def breaks(self) -> list[float]:
        return [self.params["low"], self.params["high"]] if self.kind == "uniform" else []

    def cdf(self, p):
        p = np.asarray(p, dtype=float)
        a = self.params
        if self.kind == "uniform":
            return np.clip((p - a["low"]) / (a["high"] - a["low"]), 0.0, 1.0)
        if self.kind == "exponential":
            return np.where(p > 0, -np.expm1(-a["rate"] * np.maximum(p, 0.0)), 0.0)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(p, 0.0)) - a["mu"]) / a["sigma"]
        return np.where(p > 0, special.ndtr(z), 0.0)

    def mean(self) -> float:
        a = self.params
        if self.kind == "uniform":
            return (a["low"] + a["high"]) / 2.0
        if self.kind == "exponential":
            return 1.0 / a["rate"]
        return math.exp(a["mu"] + a["sigma"] ** 2 / 2.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a = self.params
        if self.kind == "uniform":
            return rng.uniform(a["low"], a["high"], n)
        if self.kind == "exponential":
            return rng.exponential(1.0 / a["rate"], n)
        return rng.lognormal(a["mu"], a["sigma"], n)


def oracle_dominance(law_j: Law, law_i: Law, s: int, grid) -> np.ndarray:
    """Exact D^(s) of law j relative to law i on ``grid``.

    Order 1 is the CDF difference; higher orders integrate it with
    adaptive quadrature via ``D^(s)(p) = int (p-z)^(s-2)/(s-2)! D^(1)(z) dz``.
    """
    grid = np.asarray(grid, dtype=float)
    diff = lambda z: float(law_j.cdf(z) - law_i.cdf(z))
    if s == 1:
        return law_j.cdf(grid) - law_i.cdf(grid)
    if s not in (2, 3):
        raise ValueError(f"dominance order must be 1, 2 or 3, got {s}")
    lower = min(law_j.lower, law_i.lower)
    kinks = sorted(set(law_j.breaks + law_i.breaks))
    out = np.empty(grid.size)
    for n, p in enumerate(grid):
        if p <= lower:
            out[n] = 0.0
            continue
        fn = diff if s == 2 else (lambda z, p=p: (p - z) * diff(z))
        pts = [k for k in kinks if lower < k < p] or None
        out[n] = integrate.quad(fn, lower, p, points=pts, epsabs=1e-10, epsrel=1e-10, limit=500)[0]
    return out


# -- scenarios ---------------------------------------------------------------

@dataclass
class TypeSpec:
    share: float
    law: Optional[Law] = None


@dataclass
class RoundSpec:
    id: int
    start: dt.date
    end: dt.date
    n: int
    types: Mapping[str, TypeSpec]
    stock: Mapping[str, float] = field(default_factory=dict)
    shift: float = 0.0  # log shift applied to hedonic prices in this round


@dataclass
class HedonicScenario:
    intercept: float = 12.0
    beta: Mapping[str, float] = field(default_factory=lambda: {"log_area": 0.8, "storey": 0.01})
    surface: str = "sincos"
    noise: float = 0.1
    quarter_growth: float = 0.0  # log growth of the true price level per quarter


SURFACES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": lambda l: np.zeros(len(l)),
    "sincos": lambda l: np.sin(2 * np.pi * l[:, 0]) * np.cos(2 * np.pi * l[:, 1]),
}


@dataclass
class ScenarioSpec:
    rounds: Sequence[RoundSpec]
    seed: int = 0
    sector: str = "public"
    hedonic: Optional[HedonicScenario] = None

    def __post_init__(self):
        for r in self.rounds:
            if r.n < 1:
                raise ConfigError(f"round {r.id}: sample size must be at least 1")
            total = sum(t.share for t in r.types.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"round {r.id}: type shares sum to {total}")
            if r.stock and abs(sum(r.stock.values()) - 1.0) > 1e-9:
                raise ConfigError(f"round {r.id}: stock shares do not sum to 1")
            if self.hedonic is None and any(t.law is None for t in r.types.values()):
                raise ConfigError(f"round {r.id}: every type needs a price law")
        if self.hedonic is not None and self.hedonic.surface not in SURFACES:
            raise ConfigError(f"unknown surface {self.hedonic.surface!r}")

    @property
    def partition(self) -> RoundPartition:
        return RoundPartition(tuple((r.id, r.start, r.end) for r in self.rounds))

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        rounds = []
        for r in d["rounds"]:
            types = {t: TypeSpec(float(v["share"]), Law.from_dict(v["law"]) if v.get("law") else None)
                     for t, v in r["types"].items()}
            rounds.append(RoundSpec(int(r["id"]), dt.date.fromisoformat(r["start"]),
                                    dt.date.fromisoformat(r["end"]), int(r["n"]), types,
                                    {t: float(v) for t, v in r.get("stock", {}).items()},
                                    float(r.get("shift", 0.0))))
        hed = d.get("hedonic")
        return cls(rounds, int(d.get("seed", 0)), d.get("sector", "public"),
                   HedonicScenario(**hed) if hed else None)

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SyntheticData:
    spec: ScenarioSpec
    records: list
    samples: dict
    index_log: np.ndarray


def generate(spec: ScenarioSpec) -> SyntheticData:
    """Draw transactions for every round; deterministic in the scenario seed."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed)]))
    partition = spec.partition
    n_q = partition.n_quarters
    growth = spec.hedonic.quarter_growth if spec.hedonic else 0.0
    index_log = growth * np.arange(n_q)
    records, samples = [], {}
    for r in spec.rounds:
        names = sorted(r.types)
        shares = np.array([r.types[t].share for t in names])
        labels = np.array(names)[rng.choice(len(names), size=r.n, p=shares)]
        days = rng.integers(r.start.toordinal(), r.end.toordinal(), r.n)
        dates = [dt.date.fromordinal(int(d)) for d in days]
        area = np.exp(rng.normal(math.log(90.0), 0.25, r.n))
        storey = rng.integers(1, 31, r.n).astype(float)
        lease = (rng.uniform(size=r.n) < 0.3).astype(float)
        age = rng.uniform(0.0, 40.0, r.n)
        locs = rng.uniform(0.0, 1.0, (r.n, 2))
        if spec.hedonic is None:
            prices = np.empty(r.n)
            for t in names:
                mask = labels == t
                prices[mask] = r.types[t].law.sample(rng, int(mask.sum()))
        else:
            h = spec.hedonic
            chars = {"log_area": np.log(area), "storey": storey, "lease": lease, "age": age}
            q = np.array([partition.quarter_index(d) for d in dates])
            logp = h.intercept + index_log[q] + r.shift + SURFACES[h.surface](locs)
            for name, coef in h.beta.items():
                logp = logp + coef * chars[name]
            prices = np.exp(logp + rng.normal(0.0, h.noise, r.n))
        for k in range(r.n):
            records.append(TransactionRecord(
                f"r{r.id}-{k}", dates[k], float(prices[k]), spec.sector, str(labels[k]),
                {"area": float(area[k]), "storey": float(storey[k]), "lease": float(lease[k]),
                 "age": float(age[k])},
                (float(locs[k, 0]), float(locs[k, 1])),
            ))
        samples[r.id] = WeightedSample(r.id, prices, np.ones(r.n), spec.sector, labels)
    return SyntheticData(spec, records, samples, index_log)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_files(data: SyntheticData, outdir, bootstrap: int = 1000) -> dict:
    """Emit the scenario in the ingest CSV formats plus a run config."""
    os.makedirs(outdir, exist_ok=True)
    spec = data.spec
    part = spec.partition
    paths = {name: os.path.join(outdir, name) for name in
             ("transactions.csv", "cpi.csv", "wr.csv", "gni.csv", "stock.csv", "index.csv", "config.json")}

    with open(paths["transactions.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "date", "price", "sector", "type", "area", "storey", "lease", "age", "x", "y"])
        for r in data.records:
            c = r.characteristics
            w.writerow([r.id, r.date.isoformat(), _fmt(r.nominal_price), r.sector, r.dwelling_type,
                        _fmt(c["area"]), _fmt(c["storey"]), _fmt(c["lease"]), _fmt(c["age"]),
                        _fmt(r.location[0]), _fmt(r.location[1])])

    quarters = part.quarters()
    first_year, last_year = part.start.year - 1, part.end.year + 1
    with open(paths["cpi.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", "value"])
        for year in range(first_year, last_year + 1):
            for m in range(1, 13):
                w.writerow([month_label((year, m)), "1.0"])
    for name in ("wr.csv", "gni.csv"):
        with open(paths[name], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["period", "value"])
            for year in range(first_year, last_year + 1):
                for q in range(1, 5):
                    w.writerow([quarter_label((year, q)), "1.0"])

    types = sorted({t for r in spec.rounds for t in r.types})
    base = spec.rounds[0]
    stock_share = base.stock or {t: base.types[t].share for t in base.types}
    with open(paths["stock.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "sector", "type", "count"])
        for year in range(first_year, last_year + 1):
            for t in types:
                w.writerow([year, spec.sector, t, _fmt(100000.0 * stock_share.get(t, 0.0))])

    with open(paths["index.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quarter", "sector", "value"])
        for q, level in zip(quarters, data.index_log):
            w.writerow([quarter_label(q), spec.sector, _fmt(100.0 * math.exp(level))])

    config = {
        "transactions": "transactions.csv",
        "deflators": {"cpi": "cpi.csv", "wr": "wr.csv", "gni": "gni.csv"},
        "stock": "stock.csv",
        "index": "index.csv",
        "rounds": [{"id": r.id, "start": r.start.isoformat(), "end": r.end.isoformat()} for r in spec.rounds],
        "sectors": [spec.sector],
        "deflator": ["cpi"],
        "nu_grid": [0.0, 1.0, 1.5, 2.0, 2.5],
        "orders": [1, 2, 3],
        "bootstrap": bootstrap,
        "seed": spec.seed,
        "out": "out",
    }
    with open(paths["config.json"], "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def simulate_hedonic(n: int, quarters: Sequence[int], rng: np.random.Generator, *,
                     intercept: float = 12.0, delta: Optional[Sequence[float]] = None,
                     beta: Sequence[float] = (0.8, 0.01), surface: str = "zero",
                     noise: float = 0.0, round_id: int = 0):
    """Arrays for a known partial-linear model.

    ``quarters`` are global quarter indices; ``delta`` gives the true effect
    of each quarter relative to the first one. Returns the data and the true
    surface function.
    """
    quarters = np.asarray(quarters, dtype=int)
    delta = np.zeros(quarters.size) if delta is None else np.asarray(delta, dtype=float)
    q_pos = rng.integers(0, quarters.size, n)
    chars = np.column_stack([rng.normal(math.log(90.0), 0.25, n), rng.integers(1, 31, n).astype(float)])
    locs = rng.uniform(0.0, 1.0, (n, 2))
    g = SURFACES[surface]
    y = intercept + delta[q_pos] + chars @ np.asarray(beta, dtype=float) + g(locs)
    if noise > 0:
        y = y + rng.normal(0.0, noise, n)
    data = HedonicData(y, quarters[q_pos], chars, locs, ["log_area", "storey"], round_id)
    return data, g
