"""Reading input CSVs, deflating prices, interpolating stock counts."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .model import (
    SECTORS,
    ConfigError,
    DataError,
    DeflatorBundle,
    PeriodSeries,
    PriceIndexSeries,
    RoundPartition,
    TransactionRecord,
    parse_period,
    quarter_label,
)

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "price", "sector", "type", "x", "y")
CHARACTERISTIC_COLUMNS = ("area", "storey", "lease", "age")

Source = Union[str, os.PathLike, bytes, io.IOBase]


@dataclass
class RowError:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class ParseResult:
    records: list[TransactionRecord]
    rejected: list[RowError] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.rejected)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


def _open_text(source: Source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    if isinstance(source, io.IOBase):
        return io.TextIOWrapper(source, encoding="utf-8")
    return open(source, newline="", encoding="utf-8")


def _read_table(source: Source) -> list[list[str]]:
    fh = _open_text(source)
    try:
        table = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    finally:
        if not isinstance(source, io.IOBase):
            fh.close()
    return table


def _read_rows(source: Source) -> tuple[list[str], list[tuple[int, dict]]]:
    table = _read_table(source)
    if not table:
        raise DataError("missing header row")
    header = [h.strip() for h in table[0]]
    rows = [(i + 2, dict(zip(header, row))) for i, row in enumerate(table[1:])]
    return header, rows


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def parse_transactions(
    source: Source,
    schema: Optional[Mapping[str, str]] = None,
    default_columns: Sequence[str] = REQUIRED_COLUMNS,
) -> ParseResult:
    """Parse a transactions CSV into records.

    ``schema`` maps logical column names (date, price, sector, type, x, y,
    area, storey, lease, age, id) to header names in the file. A file
    without a recognised header is read positionally with
    ``default_columns``.
    """
    schema = dict(schema or {})
    table = _read_table(source)
    if not table:
        raise DataError("missing header row")
    col = {name: schema.get(name, name) for name in REQUIRED_COLUMNS + CHARACTERISTIC_COLUMNS + ("id",)}
    header = [h.strip() for h in table[0]]
    first_line = 2
    if not any(col[name] in header for name in REQUIRED_COLUMNS):
        # headerless file: read positionally
        header = list(default_columns)
        col = {name: name for name in col}
        first_line = 1
    else:
        table = table[1:]
    pad = [""] * len(header)
    rows = [(first_line + i, dict(zip(header, row + pad))) for i, row in enumerate(table)]

    missing = [name for name in REQUIRED_COLUMNS if col[name] not in header]
    if missing:
        raise DataError(f"missing required column(s): {', '.join(missing)}")

    present_chars = [c for c in CHARACTERISTIC_COLUMNS if col[c] in header]
    result = ParseResult(records=[])
    for line, row in rows:
        try:
            date = parse_date(row[col["date"]])
        except (ValueError, TypeError, AttributeError):
            result.rejected.append(RowError(line, f"malformed date {row.get(col['date'])!r}"))
            continue
        try:
            price = float(row[col["price"]])
        except (ValueError, TypeError):
            result.rejected.append(RowError(line, f"malformed price {row.get(col['price'])!r}"))
            continue
        if not (price > 0 and math.isfinite(price)):
            result.rejected.append(RowError(line, f"price must be positive, got {price}"))
            continue
        sector = (row[col["sector"]] or "").strip().lower()
        if sector not in SECTORS:
            result.rejected.append(RowError(line, f"unknown sector {row[col['sector']]!r}"))
            continue
        dtype = (row[col["type"]] or "").strip()
        if not dtype:
            result.rejected.append(RowError(line, "empty dwelling type"))
            continue
        try:
            loc = (float(row[col["x"]]), float(row[col["y"]]))
        except (ValueError, TypeError):
            result.rejected.append(RowError(line, "malformed coordinates"))
            continue
        chars = {}
        bad = None
        for c in present_chars:
            raw = (row[col[c]] or "").strip()
            if raw == "":
                chars[c] = math.nan
                continue
            try:
                chars[c] = float(raw)
            except ValueError:
                bad = c
                break
        if bad is not None:
            result.rejected.append(RowError(line, f"malformed {bad} {row[col[bad]]!r}"))
            continue
        rid = (row.get(col["id"]) or "").strip() or f"L{line}"
        result.records.append(TransactionRecord(rid, date, price, sector, dtype, chars, loc))
    if result.rejected:
        log.info("parsed %d records, rejected %d rows", len(result.records), len(result.rejected))
    return result


def read_series(source: Source) -> PeriodSeries:
    """Read a deflator CSV with columns ``period,value``."""
    header, rows = _read_rows(source)
    if "period" not in header or "value" not in header:
        raise DataError("deflator file needs columns period,value")
    items = {}
    for line, row in rows:
        try:
            items[row["period"].strip()] = float(row["value"])
        except (ValueError, AttributeError):
            raise DataError(f"line {line}: malformed deflator value") from None
    return PeriodSeries.from_labels(items)


def read_index(source: Source) -> dict[str, PriceIndexSeries]:
    """Read ``quarter,sector,value`` into one series per sector."""
    header, rows = _read_rows(source)
    for c in ("quarter", "sector", "value"):
        if c not in header:
            raise DataError(f"index file missing column {c}")
    data: dict[str, dict] = defaultdict(dict)
    for line, row in rows:
        freq, key = parse_period(row["quarter"])
        if freq != "Q":
            raise DataError(f"line {line}: index periods must be quarters")
        try:
            data[row["sector"].strip().lower()][key] = float(row["value"])
        except ValueError:
            raise DataError(f"line {line}: malformed index value") from None
    return {s: PriceIndexSeries(s, d) for s, d in data.items()}


def deflate(records: Sequence[TransactionRecord], bundle: DeflatorBundle, which: str) -> np.ndarray:
    """Real prices: nominal price over the deflator of the record's month or quarter."""
    series = bundle.series(which)
    out = np.empty(len(records))
    for k, rec in enumerate(records):
        try:
            out[k] = rec.nominal_price / series.at(rec.date)
        except KeyError:
            raise DataError(
                f"record {rec.id}: {which} deflator has no value for {rec.date.isoformat()}"
            ) from None
    return out


def households_to_quarterly(yearly: Mapping[int, float], quarters) -> dict:
    """Linearly interpolate yearly household counts (anchored mid-year) to quarter midpoints."""
    out = {}
    for q in quarters:
        start = dt.date(q[0], 3 * (q[1] - 1) + 1, 1)
        end = dt.date(q[0] + (q[1] == 4), (3 * q[1]) % 12 + 1, 1)
        mid = (start.toordinal() + end.toordinal()) / 2.0
        out[q] = interpolate_yearly(yearly, mid)
    return out


def gni_per_household(gni: PeriodSeries, households: Mapping[int, float]) -> PeriodSeries:
    if gni.freq != "Q":
        raise DataError("GNI series must be quarterly")
    hh = households_to_quarterly(households, gni.data.keys())
    return PeriodSeries("Q", {q: v / hh[q] for q, v in gni.data.items()})


# -- stock -------------------------------------------------------------------

@dataclass
class StockTable:
    """Owner-occupied stock counts keyed by (sector, type, year)."""

    counts: dict[tuple[str, str, int], float]

    def types(self, sector: str) -> list[str]:
        return sorted({t for (s, t, _) in self.counts if s == sector})

    def yearly(self, sector: str, dtype: str) -> dict[int, float]:
        return {y: c for (s, t, y), c in self.counts.items() if s == sector and t == dtype}


def read_stock(source: Source, ownership: Optional[Source] = None) -> StockTable:
    """Read ``year,sector,type,count``; an ownership file (same keys plus
    ``multiplier``) scales counts to owner-occupied stock, default 1."""
    header, rows = _read_rows(source)
    for c in ("year", "sector", "type", "count"):
        if c not in header:
            raise DataError(f"stock file missing column {c}")
    mult = {}
    if ownership is not None:
        oh, orows = _read_rows(ownership)
        if "multiplier" not in oh:
            raise DataError("ownership file missing column multiplier")
        for line, row in orows:
            mult[(row["sector"].strip().lower(), row["type"].strip(), int(row["year"]))] = float(row["multiplier"])
    counts = {}
    for line, row in rows:
        try:
            key = (row["sector"].strip().lower(), row["type"].strip(), int(row["year"]))
            value = float(row["count"])
        except (ValueError, AttributeError):
            raise DataError(f"line {line}: malformed stock row") from None
        if value < 0:
            raise DataError(f"line {line}: negative stock count")
        counts[key] = value * mult.get(key, 1.0)
    return StockTable(counts)


ANCHOR = (7, 1)


def _anchor_ordinal(year: int, anchor: tuple[int, int]) -> int:
    return dt.date(year, anchor[0], anchor[1]).toordinal()


def interpolate_yearly(yearly: Mapping[int, float], when: float,
                       anchor: tuple[int, int] = ANCHOR) -> float:
    """Linear interpolation of a yearly series at fractional ordinal ``when``.

    Year ``y``'s value sits at ``anchor`` (month, day) of ``y``.
    """
    years = sorted(yearly)
    if not years:
        raise DataError("empty yearly series")
    xs = [_anchor_ordinal(y, anchor) for y in years]
    if not xs[0] <= when <= xs[-1]:
        raise DataError(
            f"date {dt.date.fromordinal(int(when)).isoformat()} outside yearly coverage "
            f"{years[0]}-{years[-1]}"
        )
    return float(np.interp(when, xs, [yearly[y] for y in years]))


def interpolate_stock(table: StockTable, partition: RoundPartition, sector: str,
                      anchor: tuple[int, int] = ANCHOR) -> dict[int, dict[str, float]]:
    """Per-round stock by type, evaluated at each round's midpoint.

    The round total S_r is ``sum(result[r].values())``.
    """
    out = {}
    for r in partition.round_ids:
        mid = partition.midpoint(r)
        per_type = {}
        for t in table.types(sector):
            try:
                per_type[t] = interpolate_yearly(table.yearly(sector, t), mid, anchor)
            except DataError as exc:
                raise DataError(f"round {r}, type {t}: {exc}") from None
        out[r] = per_type
    return out


def normalize_index(index: PriceIndexSeries, bundle: DeflatorBundle, which: str,
                    quarters: Sequence[tuple[int, int]]) -> np.ndarray:
    """Log real index over ``quarters``, zero in the first quarter."""
    series = bundle.series(which)
    real = np.empty(len(quarters))
    for n, q in enumerate(quarters):
        try:
            real[n] = index.data[q] / series.quarter_value(q)
        except KeyError:
            raise DataError(f"{index.sector} index or {which} deflator missing {quarter_label(q)}") from None
    out = np.log(real / real[0])
    out[0] = 0.0
    return out


def assign_rounds(records: Iterable[TransactionRecord], partition: RoundPartition):
    """Split records by round; records outside the window are dropped."""
    by_round = defaultdict(list)
    dropped = 0
    for rec in records:
        r = partition.round_of(rec.date)
        if r is None:
            dropped += 1
            continue
        by_round[r].append(rec)
    if dropped:
        log.info("dropped %d records outside the study window", dropped)
    return dict(by_round)


def type_counts(records: Iterable[TransactionRecord]) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for rec in records:
        counts[rec.dwelling_type] += 1
    return dict(counts)


def check_config_path(path) -> None:
    if not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")
