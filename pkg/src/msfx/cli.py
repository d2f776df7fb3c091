"""Command-line pipeline: transform data, run the grid, diagnose, report.

Subcommands
    transform   build and persist the fundamentals panel from raw CSVs
    run         estimate every grid cell recursively, forecast, evaluate
    diagnose    full-sample state and transition-path summaries for one cell
    report      rebuild evaluation tables from persisted forecast records

Exit codes: 0 success, 1 validation problem, 2 numerical failure.  The
environment variable MSFX_OUTPUT_ROOT prefixes the configured output
directory.  Runs checkpoint per (cell, origin), so an interrupted grid
resumes where it stopped; with a fixed master seed the outputs are
byte-identical regardless of worker count or resumption.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from . import evaluation, models
from .distributions import spawn_stream
from .forecast import ForecastRecord, forecast_at_origin, forecast_origins, random_walk_records
from .gibbs import NumericalError, run_mcmc, state_probability_summary

log = logging.getLogger("msfx")

SMOKE_MCMC = models.McmcConfig(iterations=200, burn_in=100, thin=1)


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus derived grid cells."""

    home_csv: str
    foreign_csv: str
    home_schema: dict
    foreign_schema: dict
    grid: list[dict]
    t0: str
    horizons: tuple[int, ...]
    mcmc: models.McmcConfig
    priors: models.PriorConfig
    seed: int
    output_dir: Path
    workers: int = 1
    store_draws: bool = False
    panel_csv: Path | None = None
    cells: list[models.ModelConfig] = field(default_factory=list)


def load_experiment(path, seed_override=None, workers_override=None, smoke=False) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"experiment file {path} is not a mapping")
    try:
        data_sec = raw["data"]
        grid = raw["grid"]
        fc = raw.get("forecast", {})
    except KeyError as exc:
        raise ValueError(f"experiment file lacks section {exc}") from exc
    if not grid:
        raise ValueError("experiment grid is empty")
    mcmc_sec = raw.get("mcmc", {})
    mcmc = SMOKE_MCMC if smoke else models.McmcConfig(
        iterations=int(mcmc_sec.get("iterations", 80_000)),
        burn_in=int(mcmc_sec.get("burn_in", 30_000)),
        thin=int(mcmc_sec.get("thin", 10)),
    )
    pr = raw.get("priors", {})
    priors = models.PriorConfig(
        omega=float(pr.get("omega", 0.5)),
        zeta=float(pr.get("zeta", 100.0)),
        a0=float(pr.get("a0", 0.01)),
        A0=float(pr.get("A0", 0.01)),
        c0=float(pr.get("c0", 0.1)),
        c1=float(pr.get("c1", 10.0)),
    )
    seed = int(seed_override if seed_override is not None else raw.get("seed", 0))
    horizons = tuple(int(h) for h in fc.get("horizons", (1, 3, 12)))
    t0 = str(fc.get("t0", "2004-12"))
    out_root = Path(os.environ.get("MSFX_OUTPUT_ROOT", "."))
    output_dir = out_root / raw.get("output_dir", "out")
    cfg = ExperimentConfig(
        home_csv=data_sec.get("home_csv", ""),
        foreign_csv=data_sec.get("foreign_csv", ""),
        home_schema=data_sec.get("home_schema", {}),
        foreign_schema=data_sec.get("foreign_schema", {}),
        grid=grid,
        t0=t0,
        horizons=horizons,
        mcmc=mcmc,
        priors=priors,
        seed=seed,
        output_dir=output_dir,
        workers=int(workers_override if workers_override is not None else raw.get("workers", 1)),
        store_draws=bool(raw.get("store_draws", False)),
        panel_csv=Path(data_sec["panel_csv"]) if data_sec.get("panel_csv") else output_dir / "panel.csv",
    )
    cfg.cells = models.expand_grid(grid, mcmc=mcmc, priors=priors, seed=seed, horizons=horizons, t0=t0)
    return cfg


TRANSFORM_LOG_LINES = (
    "exr     -> d_exr: one-month log difference (target return)",
    "exr     -> exr: log level, lagged one month",
    "cpi     -> infl_*: one-month log difference, lagged one month",
    "cpi     -> price_*: log level, lagged one month",
    "exr,cpi -> rexr: log exr + log foreign cpi - log home cpi, lagged one month",
    "ip      -> gap_*: HP-filter cycle of the log level (lambda=14400), lagged one month",
    "ip      -> income_*: log level, lagged one month",
    "money   -> money_*: log level, lagged one month",
    "rate    -> i_*: percentage points, lagged one month",
    "rate    -> i_*_lag: percentage points, lagged two months",
    "rate    -> z_i_*: demeaned lagged rate (transition covariates)",
)


def build_panel(cfg: ExperimentConfig) -> data_mod.FundamentalsPanel:
    home = data_mod.load_panel(cfg.home_csv, cfg.home_schema)
    foreign = data_mod.load_panel(cfg.foreign_csv, cfg.foreign_schema)
    return data_mod.build_fundamentals(home, foreign)


def cmd_transform(cfg: ExperimentConfig) -> int:
    panel = build_panel(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    panel.to_csv(cfg.panel_csv)
    with open(cfg.output_dir / "transform_log.txt", "w") as fh:
        fh.write(f"rows: {len(panel)}  span: {panel.dates[0]}..{panel.dates[-1]}\n")
        for line in TRANSFORM_LOG_LINES:
            fh.write(line + "\n")
    log.info("panel written to %s (%d rows)", cfg.panel_csv, len(panel))
    return 0


def _load_or_build_panel(cfg: ExperimentConfig) -> data_mod.FundamentalsPanel:
    if cfg.panel_csv and Path(cfg.panel_csv).exists():
        return data_mod.FundamentalsPanel.from_csv(cfg.panel_csv)
    return build_panel(cfg)


RECORD_HEADER = ["model_id", "origin", "horizon", "point", "realized", "log_score"]


def write_records_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_HEADER)
        for r in records:
            # repr of a builtin float is the shortest exact round-trip form
            w.writerow([r.model_id, r.origin, r.horizon, repr(float(r.point)), repr(float(r.realized)), repr(float(r.log_score))])


def read_records_csv(path) -> list[ForecastRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                ForecastRecord(
                    model_id=row["model_id"],
                    origin=row["origin"],
                    horizon=int(row["horizon"]),
                    point=float(row["point"]),
                    realized=float(row["realized"]),
                    log_score=float(row["log_score"]),
                )
            )
    return out


def _origin_task(panel, cell: models.ModelConfig, cell_idx: int, origin_idx: int, oi: int, out_path: Path, store_draws: bool):
    rng = spawn_stream(cell.seed, cell_idx, oi)
    records = forecast_at_origin(panel, cell, origin_idx, rng, store_draws=store_draws)
    write_records_csv(out_path, records)
    if store_draws and any(r.draws is not None for r in records):
        np.savez_compressed(out_path.with_suffix(".npz"), **{f"h{r.horizon}": r.draws for r in records if r.draws is not None})
    return str(out_path)


def cmd_run(cfg: ExperimentConfig) -> int:
    panel = _load_or_build_panel(cfg)
    records_dir = cfg.output_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    for cell_idx, cell in enumerate(cfg.cells):
        cell_dir = records_dir / cell.model_id
        cell_dir.mkdir(exist_ok=True)
        for oi, origin_idx in enumerate(forecast_origins(panel, cell.t0, cell.horizons)):
            out_path = cell_dir / f"{panel.dates[origin_idx]}.csv"
            if out_path.exists():
                continue  # per-origin checkpoint: resume skips finished work
            tasks.append((cell, cell_idx, origin_idx, oi, out_path))
    log.info("grid: %d cells, %d open (cell, origin) tasks, %d workers", len(cfg.cells), len(tasks), cfg.workers)

    if cfg.workers > 1 and tasks:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_origin_task, panel, cell, ci, orx, oi, path, cfg.store_draws) for cell, ci, orx, oi, path in tasks]
            for fut in futures:
                fut.result()
    else:
        for cell, ci, orx, oi, path in tasks:
            _origin_task(panel, cell, ci, orx, oi, path, cfg.store_draws)

    all_records: list[ForecastRecord] = []
    for cell in cfg.cells:
        cell_dir = records_dir / cell.model_id
        for f in sorted(cell_dir.glob("*.csv")):
            all_records.extend(read_records_csv(f))
    all_records.extend(random_walk_records(panel, cfg.t0, cfg.horizons))
    all_records.sort(key=lambda r: (r.model_id, r.horizon, r.origin))
    write_records_csv(cfg.output_dir / "records.csv", all_records)

    report = evaluation.build_report(all_records, expected_ids=[c.model_id for c in cfg.cells], grid_meta=[c.dump() for c in cfg.cells])
    report.write(cfg.output_dir / "report")
    log.info("wrote %d records and the evaluation report under %s", len(all_records), cfg.output_dir)
    return 0


def _write_state_summaries(out_dir: Path, dates, state_probs, trans_paths) -> None:
    K = state_probs.shape[1]
    with open(out_dir / "filtered_states.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date"] + [f"state_{k + 1}" for k in range(K)])
        for d, row in zip(dates, state_probs):
            w.writerow([str(d)] + [repr(float(v)) for v in row])
    with open(out_dir / "filtered_states_tidy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "state", "probability"])
        for d, row in zip(dates, state_probs):
            for k, v in enumerate(row):
                w.writerow([str(d), k + 1, repr(float(v))])
    with open(out_dir / "transition_paths.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "from_state", "to_state", "probability"])
        for d, mat in zip(dates, trans_paths):
            for i in range(K):
                for j in range(K):
                    w.writerow([str(d), i + 1, j + 1, repr(float(mat[i, j]))])


def cmd_diagnose(cfg: ExperimentConfig, cell_id: str) -> int:
    by_id = {c.model_id: c for c in cfg.cells}
    if cell_id not in by_id:
        raise ValueError(f"cell {cell_id!r} not in the grid; choose from {sorted(by_id)}")
    cell = by_id[cell_id]
    panel = _load_or_build_panel(cfg)
    rng = spawn_stream(cell.seed, len(cfg.cells), 0)  # full-sample slot, disjoint from forecast streams
    sample = run_mcmc(panel, cell, rng)
    state_probs, trans_paths = state_probability_summary(sample)
    out_dir = cfg.output_dir / "diagnostics" / cell_id
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_state_summaries(out_dir, panel.dates, state_probs, trans_paths)
    sample.save(out_dir / "draws.npz")
    log.info("diagnostics for %s under %s", cell_id, out_dir)
    return 0


def cmd_report(cfg: ExperimentConfig) -> int:
    records_path = cfg.output_dir / "records.csv"
    if not records_path.exists():
        raise ValueError(f"no persisted records at {records_path}; run the grid first")
    records = read_records_csv(records_path)
    report = evaluation.build_report(records, expected_ids=[c.model_id for c in cfg.cells], grid_meta=[c.dump() for c in cfg.cells])
    report.write(cfg.output_dir / "report")
    log.info("report rebuilt under %s", cfg.output_dir / "report")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; keep 2 for numerics only
        self.exit(1, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="msfx", description="Markov-switching exchange-rate forecasting pipeline")
    parser.add_argument("--config", required=True, help="experiment YAML file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--workers", type=int, default=None, help="parallel (cell, origin) workers")
    parser.add_argument("--smoke", action="store_true", help="desk-scale MCMC lengths (200/100/1)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("transform", help="build the fundamentals panel")
    sub.add_parser("run", help="run the grid and write records plus the report")
    diag = sub.add_parser("diagnose", help="full-sample diagnostics for one cell")
    diag.add_argument("--cell", required=True, help="model id of the grid cell")
    sub.add_parser("report", help="rebuild the evaluation report from records")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_experiment(args.config, seed_override=args.seed, workers_override=args.workers, smoke=args.smoke)
        if args.command == "transform":
            return cmd_transform(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.cell)
        if args.command == "report":
            return cmd_report(cfg)
        raise ValueError(f"unknown command {args.command!r}")
    except NumericalError as exc:
        log.error("numerical failure: %s (dump keys: %s)", exc, sorted(exc.dump))
        return 2
    except (ValueError, OSError, yaml.YAMLError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
