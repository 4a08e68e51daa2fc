"""Shared domain types: transactions, rounds, weighted samples, deflators."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

SECTORS = ("public", "private")


class HouseWelfareError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HouseWelfareError):
    exit_code = 2


class DataError(HouseWelfareError):
    exit_code = 3


class NumericError(HouseWelfareError):
    exit_code = 4


# -- periods -----------------------------------------------------------------

def quarter_of(date: dt.date) -> tuple[int, int]:
    return date.year, (date.month - 1) // 3 + 1


def month_of(date: dt.date) -> tuple[int, int]:
    return date.year, date.month


def quarter_label(q: tuple[int, int]) -> str:
    return f"{q[0]}-Q{q[1]}"


def month_label(m: tuple[int, int]) -> str:
    return f"{m[0]}-{m[1]:02d}"


def parse_period(label: str) -> tuple[str, tuple[int, int]]:
    """Parse ``YYYY-MM`` or ``YYYY-Qn`` into (frequency, key)."""
    label = label.strip()
    try:
        year_s, rest = label.split("-", 1)
        year = int(year_s)
        if rest[:1] in ("Q", "q"):
            q = int(rest[1:])
            if not 1 <= q <= 4:
                raise ValueError
            return "Q", (year, q)
        month = int(rest)
        if not 1 <= month <= 12:
            raise ValueError
        return "M", (year, month)
    except ValueError:
        raise DataError(f"malformed period label {label!r}") from None


def quarter_ordinal(q: tuple[int, int]) -> int:
    return q[0] * 4 + (q[1] - 1)


def quarter_from_ordinal(n: int) -> tuple[int, int]:
    return n // 4, n % 4 + 1


# -- records -----------------------------------------------------------------

@dataclass(frozen=True)
class TransactionRecord:
    id: str
    date: dt.date
    nominal_price: float
    sector: str
    dwelling_type: str
    characteristics: Mapping[str, float] = field(default_factory=dict)
    location: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class RoundPartition:
    """Contiguous policy rounds; a date on a boundary belongs to the later round.

    ``bounds`` holds ``(round_id, start, end)`` with ``start`` inclusive and
    ``end`` exclusive.
    """

    bounds: tuple[tuple[int, dt.date, dt.date], ...]

    def __post_init__(self):
        if not self.bounds:
            raise ConfigError("round partition is empty")
        ids = [b[0] for b in self.bounds]
        if ids[0] != 0:
            raise ConfigError("round 0 (base period) must come first")
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate round ids")
        for (r, start, end) in self.bounds:
            if not start < end:
                raise ConfigError(f"round {r}: start {start} not before end {end}")
        for prev, nxt in zip(self.bounds, self.bounds[1:]):
            if prev[2] != nxt[1]:
                raise ConfigError(
                    f"rounds {prev[0]} and {nxt[0]} are not contiguous "
                    f"({prev[2]} != {nxt[1]})"
                )

    @classmethod
    def from_starts(cls, starts: Sequence[dt.date], end: dt.date) -> "RoundPartition":
        edges = list(starts) + [end]
        return cls(tuple((r, edges[r], edges[r + 1]) for r in range(len(starts))))

    @property
    def round_ids(self) -> list[int]:
        return [b[0] for b in self.bounds]

    @property
    def start(self) -> dt.date:
        return self.bounds[0][1]

    @property
    def end(self) -> dt.date:
        return self.bounds[-1][2]

    def round_of(self, date: dt.date) -> Optional[int]:
        """Round containing ``date`` or None outside the study window."""
        for r, start, end in self.bounds:
            if start <= date < end:
                return r
        return None

    def span(self, round_id: int) -> tuple[dt.date, dt.date]:
        for r, start, end in self.bounds:
            if r == round_id:
                return start, end
        raise KeyError(round_id)

    def midpoint(self, round_id: int) -> float:
        """Round midpoint as a fractional proleptic ordinal day."""
        start, end = self.span(round_id)
        return (start.toordinal() + end.toordinal()) / 2.0

    def quarters(self, round_id: Optional[int] = None) -> list[tuple[int, int]]:
        """Calendar quarters touched by a round (or the whole window)."""
        if round_id is None:
            start, end = self.start, self.end
        else:
            start, end = self.span(round_id)
        last = end - dt.timedelta(days=1)
        lo, hi = quarter_ordinal(quarter_of(start)), quarter_ordinal(quarter_of(last))
        return [quarter_from_ordinal(n) for n in range(lo, hi + 1)]

    def quarters_per_round(self) -> dict[int, int]:
        return {r: len(self.quarters(r)) for r in self.round_ids}

    @property
    def n_quarters(self) -> int:
        return len(self.quarters())

    def quarter_index(self, date: dt.date) -> int:
        """Position of the date's calendar quarter within the study window."""
        return quarter_ordinal(quarter_of(date)) - quarter_ordinal(quarter_of(self.start))


# -- samples -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Values for one (sector, round) cell with post-stratification weights."""

    round_id: int
    values: np.ndarray
    weights: np.ndarray
    sector: str = "public"
    type_labels: Optional[np.ndarray] = None
    kind: str = "price"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        weights = np.array(self.weights, dtype=float)
        values.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if self.type_labels is not None:
            labels = np.array(self.type_labels).astype(str)
            labels.setflags(write=False)
            object.__setattr__(self, "type_labels", labels)

    @classmethod
    def unweighted(cls, values, round_id: int = 0, **kw) -> "WeightedSample":
        values = np.asarray(values, dtype=float)
        return cls(round_id=round_id, values=values, weights=np.ones(values.size), **kw)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def with_values(self, values) -> "WeightedSample":
        return WeightedSample(self.round_id, values, self.weights, self.sector,
                              self.type_labels, self.kind)

    def with_weights(self, weights) -> "WeightedSample":
        return WeightedSample(self.round_id, self.values, weights, self.sector,
                              self.type_labels, self.kind)

    def weighted_mean(self) -> float:
        return float(np.sum(self.values * self.weights) / np.sum(self.weights))


def validate_sample(sample: WeightedSample, tol: float = 1e-6) -> list[str]:
    """List invariant violations of ``sample``; empty when it is valid.

    The weight sum must equal the sample size within ``tol * N``.
    """
    out = []
    v, w = sample.values, sample.weights
    if v.ndim != 1:
        out.append("values must be one-dimensional")
    if w.shape != v.shape:
        out.append(f"weights length {w.size} != values length {v.size}")
        return out
    for k in np.flatnonzero(~np.isfinite(v)):
        out.append(f"values[{k}] not finite")
    if sample.kind == "price":
        for k in np.flatnonzero(v <= 0):
            out.append(f"values[{k}] ≤ 0")
    for k in np.flatnonzero(~(w > 0)):
        out.append(f"weights[{k}] ≤ 0")
    if sample.type_labels is not None and sample.type_labels.shape != v.shape:
        out.append(f"type_labels length {sample.type_labels.size} != values length {v.size}")
    n = v.size
    if n and abs(float(np.sum(w)) - n) > tol * n:
        out.append(f"weights sum {float(np.sum(w))!r} != N={n}")
    return out


# -- deflators and indices -----------------------------------------------------

@dataclass(frozen=True)
class PeriodSeries:
    """Monthly ("M") or quarterly ("Q") positive series keyed by (year, n)."""

    freq: str
    data: Mapping[tuple[int, int], float]

    def __post_init__(self):
        if self.freq not in ("M", "Q"):
            raise ConfigError(f"unknown frequency {self.freq!r}")
        for key, value in self.data.items():
            if not (value > 0 and math.isfinite(value)):
                raise DataError(f"series value at {key} must be positive, got {value}")

    @classmethod
    def from_labels(cls, items: Mapping[str, float]) -> "PeriodSeries":
        freqs = set()
        data = {}
        for label, value in items.items():
            freq, key = parse_period(label)
            freqs.add(freq)
            data[key] = float(value)
        if len(freqs) != 1:
            raise DataError("series mixes monthly and quarterly periods")
        return cls(freqs.pop(), data)

    def key_for(self, date: dt.date) -> tuple[int, int]:
        return month_of(date) if self.freq == "M" else quarter_of(date)

    def at(self, date: dt.date) -> float:
        return self.data[self.key_for(date)]

    def quarter_value(self, q: tuple[int, int]) -> float:
        """Quarterly value; monthly series are averaged over the quarter."""
        if self.freq == "Q":
            return self.data[q]
        months = [(q[0], 3 * (q[1] - 1) + m) for m in (1, 2, 3)]
        return sum(self.data[m] for m in months) / 3.0


DEFLATORS = ("cpi", "wr", "gni")


@dataclass(frozen=True)
class DeflatorBundle:
    cpi: Optional[PeriodSeries] = None
    wr: Optional[PeriodSeries] = None
    gni_per_household: Optional[PeriodSeries] = None

    def series(self, which: str) -> PeriodSeries:
        which = which.lower()
        found = {"cpi": self.cpi, "wr": self.wr, "gni": self.gni_per_household}.get(which)
        if which not in DEFLATORS:
            raise ConfigError(f"unknown deflator {which!r}")
        if found is None:
            raise ConfigError(f"deflator {which!r} not provided")
        expected = "M" if which == "cpi" else "Q"
        if found.freq != expected:
            raise DataError(f"deflator {which!r} must be {'monthly' if expected == 'M' else 'quarterly'}")
        return found


@dataclass(frozen=True)
class PriceIndexSeries:
    """Nominal quarterly price index for one sector."""

    sector: str
    data: Mapping[tuple[int, int], float]
