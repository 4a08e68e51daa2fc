"""Batch command-line front end.

Every subcommand reads a JSON run config (``--config``); flags override the
config's bootstrap size, seed, deflators and so on. Exit codes: 0 ok,
2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import ingest
from .dominance import GridConfig, sd_test
from .hedonic import HedonicConfig, data_from_records, fit_partial_linear, level_enhanced, residual_bootstrap_sd
from .model import (
    DEFLATORS,
    ConfigError,
    DataError,
    DeflatorBundle,
    HouseWelfareError,
    RoundPartition,
    WeightedSample,
)
from .report import QUANTILE_RULE, distribution_summary
from .resample import display_p
from .reweight import attach_weights, compute_weights
from .welfare import NU_GRID, ratio_test

log = logging.getLogger("housewelfare")


@dataclass
class RunConfig:
    base_dir: str
    transactions: str
    deflators: dict
    rounds: RoundPartition
    stock: Optional[str] = None
    ownership: Optional[str] = None
    households: Optional[str] = None
    index: Optional[str] = None
    sectors: list = field(default_factory=lambda: ["public"])
    deflator: list = field(default_factory=lambda: ["cpi"])
    nu_grid: list = field(default_factory=lambda: list(NU_GRID))
    orders: list = field(default_factory=lambda: [1, 2, 3])
    bootstrap: int = 1000
    seed: int = 0
    grid: GridConfig = GridConfig()
    variance_mode: str = "population"
    scale: str = "price"
    out: str = "out"
    jobs: int = 1

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self) -> None:
        files = [self.transactions] + list(self.deflators.values())
        files += [p for p in (self.stock, self.ownership, self.households, self.index) if p]
        for p in files:
            if not os.path.exists(self.path(p)):
                raise ConfigError(f"input file not found: {self.path(p)}")
        if any(nu < 0 for nu in self.nu_grid):
            raise ConfigError("inequality aversion must be non-negative")
        if self.bootstrap < 100:
            raise ConfigError("bootstrap replications must be at least 100")
        if any(s not in (1, 2, 3) for s in self.orders):
            raise ConfigError("dominance orders must be 1, 2 or 3")
        for d in self.deflator:
            if d not in DEFLATORS:
                raise ConfigError(f"unknown deflator {d!r}")
            if d not in self.deflators:
                raise ConfigError(f"no file given for deflator {d!r}")
        if self.variance_mode not in ("population", "estimator"):
            raise ConfigError(f"unknown variance mode {self.variance_mode!r}")
        if self.scale not in ("price", "log"):
            raise ConfigError(f"unknown residual scale {self.scale!r}")


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        rounds = RoundPartition(tuple(
            (int(r["id"]), dt.date.fromisoformat(r["start"]), dt.date.fromisoformat(r["end"]))
            for r in raw["rounds"]
        ))
        grid = raw.get("grid", {})
        deflator = raw.get("deflator", ["cpi"])
        cfg = RunConfig(
            base_dir=os.path.dirname(os.path.abspath(path)),
            transactions=raw["transactions"],
            deflators=dict(raw.get("deflators", {})),
            rounds=rounds,
            stock=raw.get("stock"),
            ownership=raw.get("ownership"),
            households=raw.get("households"),
            index=raw.get("index"),
            sectors=list(raw.get("sectors", ["public"])),
            deflator=[deflator] if isinstance(deflator, str) else list(deflator),
            nu_grid=[float(v) for v in raw.get("nu_grid", NU_GRID)],
            orders=[int(v) for v in raw.get("orders", [1, 2, 3])],
            bootstrap=int(raw.get("bootstrap", 1000)),
            seed=int(raw.get("seed", 0)),
            grid=GridConfig(int(grid.get("min", 100)), int(grid.get("max", 10_000))),
            variance_mode=raw.get("variance_mode", "population"),
            scale=raw.get("scale", "price"),
            out=raw.get("out", "out"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config entry: {exc}") from None
    return cfg


# -- pipeline ----------------------------------------------------------------

class Pipeline:
    """Lazily loaded inputs shared by the subcommands."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._parsed = None
        self._bundle = None
        self._index = None

    @property
    def parsed(self) -> ingest.ParseResult:
        if self._parsed is None:
            self._parsed = ingest.parse_transactions(self.cfg.path(self.cfg.transactions))
        return self._parsed

    @property
    def bundle(self) -> DeflatorBundle:
        if self._bundle is None:
            series = {k: ingest.read_series(self.cfg.path(p)) for k, p in self.cfg.deflators.items()}
            gni = series.get("gni")
            if gni is not None and self.cfg.households:
                gni = ingest.gni_per_household(gni, _read_yearly(self.cfg.path(self.cfg.households)))
            self._bundle = DeflatorBundle(series.get("cpi"), series.get("wr"), gni)
        return self._bundle

    def records(self, sector: str) -> dict:
        recs = [r for r in self.parsed.records if r.sector == sector]
        by_round = ingest.assign_rounds(recs, self.cfg.rounds)
        for r in self.cfg.rounds.round_ids:
            if not by_round.get(r):
                raise DataError(f"{sector}: no observations in round {r}")
        return by_round

    def weight_table(self, sector: str):
        if not self.cfg.stock:
            raise ConfigError("weighting needs a stock file")
        table = ingest.read_stock(self.cfg.path(self.cfg.stock),
                                  self.cfg.path(self.cfg.ownership) if self.cfg.ownership else None)
        stock = ingest.interpolate_stock(table, self.cfg.rounds, sector)
        counts = {r: ingest.type_counts(recs) for r, recs in self.records(sector).items()}
        return compute_weights(stock, counts)

    def samples(self, sector: str, deflator: str, weighted: bool = True) -> dict[int, WeightedSample]:
        by_round = self.records(sector)
        table = self.weight_table(sector) if weighted else None
        out = {}
        for r, recs in sorted(by_round.items()):
            real = ingest.deflate(recs, self.bundle, deflator)
            smp = WeightedSample(r, real, np.ones(len(recs)), sector,
                                 np.array([x.dwelling_type for x in recs]))
            out[r] = attach_weights(smp, table) if table is not None else smp
        return out

    def index_log(self, sector: str, deflator: str) -> np.ndarray:
        if not self.cfg.index:
            raise ConfigError("level-enhanced residuals need a price index file")
        if self._index is None:
            self._index = ingest.read_index(self.cfg.path(self.cfg.index))
        if sector not in self._index:
            raise DataError(f"price index has no {sector} series")
        return ingest.normalize_index(self._index[sector], self.bundle, deflator, self.cfg.rounds.quarters())

    def hedonic_fits(self, sector: str, deflator: str) -> dict:
        fits = {}
        for r, recs in sorted(self.records(sector).items()):
            real = ingest.deflate(recs, self.bundle, deflator)
            data = data_from_records(recs, real, self.cfg.rounds, r)
            fits[r] = fit_partial_linear(data, HedonicConfig(seed=self.cfg.seed))
        return fits


def _read_yearly(path) -> dict[int, float]:
    header, rows = ingest._read_rows(path)
    if "year" not in header or "value" not in header:
        raise DataError("households file needs columns year,value")
    return {int(r["year"]): float(r["value"]) for _, r in rows}


# -- output helpers ------------------------------------------------------------

def _write_atomic(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.path(cfg.out), name)


def _write_heat_svg(path: str, rows: list[dict], value_key: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = sorted({(r["sector"], r["deflator"], r["param"]) for r in rows})
    rounds = sorted({r["round"] for r in rows})
    grid = np.full((len(labels), len(rounds)), np.nan)
    for r in rows:
        grid[labels.index((r["sector"], r["deflator"], r["param"])), rounds.index(r["round"])] = r[value_key]
    fig, ax = plt.subplots(figsize=(max(5.0, 2 + 0.6 * len(rounds)), max(3.0, 1 + 0.35 * len(labels))))
    im = ax.imshow(grid, aspect="auto", cmap="RdBu")
    ax.set_xticks(range(len(rounds)), [str(r) for r in rounds])
    ax.set_yticks(range(len(labels)), [f"{s} {d} {p}" for s, d, p in labels])
    ax.set_title(title)
    fig.colorbar(im)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)


# -- commands ------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> dict:
    pipe = Pipeline(cfg)
    parsed = pipe.parsed
    counts = {}
    for sector in cfg.sectors:
        recs = [r for r in parsed.records if r.sector == sector]
        by_round = ingest.assign_rounds(recs, cfg.rounds)
        counts[sector] = {str(r): len(by_round.get(r, [])) for r in cfg.rounds.round_ids}
    summary = {
        "rows": parsed.n_rows,
        "records": len(parsed.records),
        "rejected": parsed.n_rejected,
        "errors": [str(e) for e in parsed.rejected],
        "per_round": counts,
    }
    _write_atomic(_out(cfg, "ingest.json"), _json_text(summary))
    return summary


def cmd_weights(cfg: RunConfig) -> dict:
    pipe = Pipeline(cfg)
    tables = {}
    for sector in cfg.sectors:
        table = pipe.weight_table(sector)
        _write_atomic(_out(cfg, f"weights_{sector}.csv"), table.to_csv())
        tables[sector] = table
    return tables


def cmd_welfare(cfg: RunConfig, svg: bool = False) -> list[dict]:
    """Equivalent-wealth ratios of every round against the base round."""
    pipe = Pipeline(cfg)
    rows = []
    for sector in cfg.sectors:
        for deflator in cfg.deflator:
            samples = pipe.samples(sector, deflator)
            base = samples[0]
            for nu in cfg.nu_grid:
                for r in cfg.rounds.round_ids[1:]:
                    rep = ratio_test(samples[r], base, nu, cfg.bootstrap, cfg.seed,
                                     cfg.variance_mode, cfg.jobs)
                    rows.append({"sector": sector, "deflator": deflator, "round": r, **rep.to_dict(),
                                 "p_display": display_p(rep.p_value)})
    _write_atomic(_out(cfg, "welfare.json"), _json_text({"variance_mode": cfg.variance_mode, "results": rows}))
    _write_atomic(_out(cfg, "welfare.csv"), _csv_text(
        ["sector", "deflator", "nu", "round", "psi_hat", "sigma_psi", "theta", "p_value", "p_display", "B", "seed"],
        [[r["sector"], r["deflator"], r["nu"], r["round"], r["psi_hat"], r["sigma_psi"], r["theta"],
          r["p_value"], r["p_display"], r["B"], r["seed"]] for r in rows]))
    if svg:
        _write_heat_svg(_out(cfg, "welfare.svg"),
                        [{**r, "param": f"nu={r['nu']:g}"} for r in rows], "psi_hat",
                        "equivalent wealth ratio vs base")
    return rows


def _comparison_rounds(cfg, r, design):
    ids = cfg.rounds.round_ids
    if design == "vs-base":
        return [ids[0]]
    if design == "vs-all":
        return [k for k in ids if k < r]
    raise ConfigError(f"unknown design {design!r}")


def cmd_sd(cfg: RunConfig, design: str = "vs-base", source: str = "prices", svg: bool = False) -> list[dict]:
    """Dominance p-values of every round r >= 1 against the base or all earlier rounds."""
    pipe = Pipeline(cfg)
    rows = []
    for sector in cfg.sectors:
        for deflator in cfg.deflator:
            if source == "prices":
                samples = pipe.samples(sector, deflator)
            elif source == "level-enhanced":
                fits = pipe.hedonic_fits(sector, deflator)
                index = pipe.index_log(sector, deflator)
            else:
                raise ConfigError(f"unknown input {source!r}")
            for s in cfg.orders:
                for r in cfg.rounds.round_ids[1:]:
                    comp = _comparison_rounds(cfg, r, design)
                    if source == "prices":
                        rep = sd_test(samples[r], [samples[k] for k in comp], s, cfg.bootstrap,
                                      cfg.seed, cfg.grid, cfg.jobs)
                    else:
                        rep = residual_bootstrap_sd(fits[r], [fits[k] for k in comp], index, s,
                                                    cfg.bootstrap, cfg.seed, cfg.scale, cfg.grid, cfg.jobs)
                    rows.append({"sector": sector, "deflator": deflator, "design": design,
                                 "input": source, "round": r, **rep.to_dict(),
                                 "p_display": display_p(rep.p_value)})
    name = "sd" if source == "prices" else "residual_sd"
    _write_atomic(_out(cfg, f"{name}.json"), _json_text({"results": rows}))
    _write_atomic(_out(cfg, f"{name}.csv"), _csv_text(
        ["sector", "deflator", "design", "input", "s", "round", "d_hat", "p_value", "p_display", "B", "seed"],
        [[r["sector"], r["deflator"], r["design"], r["input"], r["s"], r["round"], r["d_hat"],
          r["p_value"], r["p_display"], r["B"], r["seed"]] for r in rows]))
    if svg:
        _write_heat_svg(_out(cfg, f"{name}.svg"), [{**r, "param": f"s={r['s']}"} for r in rows],
                        "p_value", f"dominance p-values ({design})")
    return rows


def cmd_hedonic(cfg: RunConfig) -> dict:
    pipe = Pipeline(cfg)
    summaries = {}
    for sector in cfg.sectors:
        for deflator in cfg.deflator:
            fits = pipe.hedonic_fits(sector, deflator)
            index = pipe.index_log(sector, deflator) if cfg.index else None
            key = f"{sector}_{deflator}"
            summaries[key] = [f.summary() for f in fits.values()]
            rows = []
            recs = pipe.records(sector)
            for r, fit in fits.items():
                le = level_enhanced(fit, index) if index is not None else None
                for k, rec in enumerate(recs[r]):
                    rows.append([rec.id, r, int(fit.quarter[k]), float(fit.residuals[k]),
                                 float(le.log_values[k]) if le is not None else ""])
            _write_atomic(_out(cfg, f"residuals_{key}.csv"), _csv_text(
                ["id", "round", "quarter", "residual", "level_enhanced"], rows))
    _write_atomic(_out(cfg, "hedonic.json"), _json_text(summaries))
    return summaries


def cmd_report(cfg: RunConfig) -> list[dict]:
    """Weighted quartiles, means and KDE traces per sector, deflator and round."""
    pipe = Pipeline(cfg)
    stats_rows, kde_rows, summary = [], [], []
    for sector in cfg.sectors:
        for deflator in cfg.deflator:
            for r, smp in pipe.samples(sector, deflator).items():
                d = distribution_summary(smp)
                stats_rows.append([sector, deflator, r, d["n"], d["q1"], d["median"], d["q3"], d["mean"]])
                kde_rows += [[sector, deflator, r, float(p), float(v)]
                             for p, v in zip(d["kde_grid"], d["kde_density"])]
                summary.append({"sector": sector, "deflator": deflator, "round": r,
                                **{k: d[k] for k in ("n", "q1", "median", "q3", "mean", "min", "max")}})
    _write_atomic(_out(cfg, "report.csv"), _csv_text(
        ["sector", "deflator", "round", "n", "q1", "median", "q3", "mean"], stats_rows))
    _write_atomic(_out(cfg, "kde.csv"), _csv_text(["sector", "deflator", "round", "p", "density"], kde_rows))
    _write_atomic(_out(cfg, "report.json"), _json_text({
        "quantile_rule": QUANTILE_RULE, "kde": "gaussian kernel, Silverman bandwidth", "summaries": summary}))
    return summary


def cmd_synth(scenario: str, out: str, bootstrap: int = 1000) -> dict:
    from .synth import ScenarioSpec, generate, write_files

    try:
        spec = ScenarioSpec.from_json(scenario)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {scenario}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from None
    return write_files(generate(spec), out, bootstrap)


# -- argument parsing -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="housewelfare", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--bootstrap", type=int, metavar="B")
        p.add_argument("--nu-grid", type=_floats)
        p.add_argument("--orders", type=_ints)
        p.add_argument("--deflator", choices=DEFLATORS, action="append")
        p.add_argument("--out")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--svg", action="store_true", help="also write SVG heat grids")
        return p

    for name in ("ingest", "weights", "welfare", "hedonic", "report"):
        common(sub.add_parser(name))
    sd = common(sub.add_parser("sd"))
    sd.add_argument("--design", choices=("vs-base", "vs-all"), default="vs-base")
    sd.add_argument("--input", choices=("prices", "level-enhanced"), default="prices")
    rsd = common(sub.add_parser("residual-sd"))
    rsd.add_argument("--design", choices=("vs-base", "vs-all"), default="vs-base")

    syn = sub.add_parser("synth")
    syn.add_argument("--scenario", required=True)
    syn.add_argument("--out", required=True)
    syn.add_argument("--bootstrap", type=int, default=1000)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    for attr, flag in (("seed", "seed"), ("bootstrap", "bootstrap"), ("nu_grid", "nu_grid"),
                       ("orders", "orders"), ("deflator", "deflator"), ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[attr] = value
    if "out" in changes:
        changes["out"] = os.path.abspath(changes["out"])
    changes["jobs"] = args.jobs
    return replace(cfg, **changes)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            paths = cmd_synth(args.scenario, args.out, args.bootstrap)
            print(_json_text(paths), end="")
            return 0
        cfg = _apply_overrides(load_config(args.config), args)
        cfg.validate()
        if args.command == "ingest":
            summary = cmd_ingest(cfg)
            print(f"{summary['records']} records, {summary['rejected']} rejected")
        elif args.command == "weights":
            cmd_weights(cfg)
        elif args.command == "welfare":
            cmd_welfare(cfg, args.svg)
        elif args.command == "sd":
            cmd_sd(cfg, args.design, args.input, args.svg)
        elif args.command == "residual-sd":
            cmd_sd(cfg, args.design, "level-enhanced", args.svg)
        elif args.command == "hedonic":
            cmd_hedonic(cfg)
        elif args.command == "report":
            cmd_report(cfg)
    except HouseWelfareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
