"""Post-stratification weights by dwelling type and round."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import DataError, WeightedSample


@dataclass(frozen=True)
class WeightTable:
    weights: Mapping[int, Mapping[str, float]]
    counts: Mapping[int, Mapping[str, int]]
    stock: Mapping[int, Mapping[str, float]]

    def weight(self, round_id: int, dtype: str) -> float:
        return self.weights[round_id][dtype]

    def effective_counts(self, round_id: int) -> dict[str, float]:
        """w^t_r * N^t_r per type; equals the stock share times N_r."""
        return {t: w * self.counts[round_id][t] for t, w in self.weights[round_id].items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "type", "weight"])
        for r in sorted(self.weights):
            for t in sorted(self.weights[r]):
                writer.writerow([r, t, repr(float(self.weights[r][t]))])
        return buf.getvalue()


def compute_weights(stock: Mapping[int, Mapping[str, float]],
                    counts: Mapping[int, Mapping[str, int]]) -> WeightTable:
    """Weight of type t in round r: stock share of t over transaction share of t.

    ``stock[r][t]`` is the owner-occupied stock, ``counts[r][t]`` the number
    of transactions. Types with neither stock nor transactions are dropped.
    """
    weights, used_counts, used_stock = {}, {}, {}
    for r in sorted(set(stock) | set(counts)):
        s_r = {t: float(v) for t, v in stock.get(r, {}).items()}
        n_r = {t: int(v) for t, v in counts.get(r, {}).items()}
        for t, n in n_r.items():
            if n > 0 and s_r.get(t, 0.0) <= 0:
                raise DataError(f"unknown stratum: type {t!r} transacted in round {r} but absent from stock")
        for t, s in s_r.items():
            if s > 0 and n_r.get(t, 0) <= 0:
                raise DataError(f"empty stratum: type {t!r} in stock for round {r} but never transacted")
        types = sorted(t for t in s_r if s_r[t] > 0)
        if not types:
            continue
        s_total = sum(s_r[t] for t in types)
        n_total = sum(n_r[t] for t in types)
        weights[r] = {t: (s_r[t] / s_total) / (n_r[t] / n_total) for t in types}
        used_counts[r] = {t: n_r[t] for t in types}
        used_stock[r] = {t: s_r[t] for t in types}
    return WeightTable(weights, used_counts, used_stock)


def attach_weights(sample: WeightedSample, table: WeightTable) -> WeightedSample:
    """Give every observation its type's weight for the sample's round."""
    if sample.n == 0:
        return sample
    if sample.type_labels is None:
        raise DataError(f"round {sample.round_id}: sample carries no dwelling types")
    per_type = table.weights.get(sample.round_id)
    if per_type is None:
        raise DataError(f"no weights for round {sample.round_id}")
    missing = sorted(set(sample.type_labels) - set(per_type))
    if missing:
        raise DataError(f"round {sample.round_id}: no weight for type(s) {', '.join(missing)}")
    w = np.array([per_type[t] for t in sample.type_labels], dtype=float)
    return sample.with_weights(w)


def type_counts(sample: WeightedSample) -> dict[str, int]:
    labels, n = np.unique(sample.type_labels, return_counts=True)
    return {str(t): int(c) for t, c in zip(labels, n)}
