"""Experiment orchestration: config -> rolling evaluation of every
(method, information level) cell -> monthly/average CSVs, figure series,
serialised models."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import __version__
from .cohort import (
    FeatureSchema, InformationLevel, aggregate_windows, chunk_map, format_year_month,
    ingest_csv, parse_year_month, schema_for_records, year_month,
)
from .ensemble import Tuner
from .evaluation.cv import LRParams, rf_grid
from .learners import (
    FEATURE_FRACTION_GRID, MIN_SAMPLES_GRID, N_TREES_GRID, LinearModel, load_model, save_model,
)
from .learners.logistic import LAMBDA_MAX, LAMBDA_MIN
from .synthgen import ConfigError
from .protocol import (
    Level0Store, MethodRun, MonthlyResult, ProtocolError, ProtocolSettings, parse_method,
    run_method,
)

SCHEMA_VERSION = 1
MONTHLY_HEADER = ("method", "info_level", "year", "month", "auc", "n_test", "n_pos")


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    input_csv: str
    output_dir: str = "run"
    info_levels: list = field(default_factory=lambda: ["IL4"])
    methods: list = field(default_factory=lambda: ["baseline_3m", "baseline_12m", "LR_all"])
    window_months: int = 3
    horizon_months: int = 3
    threshold_hours: float = 6.0
    test_span: dict = field(default_factory=lambda: {"first": None, "last": None})
    seed: int = 0
    cv_k: int = 3
    lr_lambdas: list | None = None      # None: the full 100-point grid
    rf_grid: dict | None = None         # keys n_trees, feature_fraction, min_samples
    tune_every: int = 1
    lr_tolerance: float = 1e-6
    lr_max_iters: int = 1000
    lr_solver: str = "newton"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        try:
            self.info_levels = [InformationLevel(l).value for l in self.info_levels]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for m in self.methods:
            try:
                parse_method(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if len(set(self.methods)) != len(self.methods) or not self.methods:
            raise ConfigError("methods must be a non-empty list without duplicates")
        if len(set(self.info_levels)) != len(self.info_levels) or not self.info_levels:
            raise ConfigError("info_levels must be a non-empty list without duplicates")
        if not isinstance(self.test_span, dict) or set(self.test_span) - {"first", "last"}:
            raise ConfigError("test_span must be an object with keys first and last")
        self.test_span = {"first": self.test_span.get("first"), "last": self.test_span.get("last")}
        for key, value in self.test_span.items():
            if value is not None:
                try:
                    parse_year_month(value)
                except ValueError:
                    raise ConfigError(f"test_span.{key} must look like YYYY-MM, got {value!r}") from None
        if self.cv_k < 2:
            raise ConfigError("cv_k must be at least 2")
        if self.tune_every < 1:
            raise ConfigError("tune_every must be at least 1")
        if self.lr_lambdas is not None:
            if not self.lr_lambdas or not all(
                    LAMBDA_MIN * (1 - 1e-9) <= float(l) <= LAMBDA_MAX * (1 + 1e-9)
                    for l in self.lr_lambdas):
                raise ConfigError(f"lr_lambdas must lie in [{LAMBDA_MIN:g}, {LAMBDA_MAX:g}]")
        if self.rf_grid is not None:
            allowed = {"n_trees": N_TREES_GRID, "feature_fraction": FEATURE_FRACTION_GRID,
                       "min_samples": MIN_SAMPLES_GRID}
            unknown = set(self.rf_grid) - set(allowed)
            if unknown or set(self.rf_grid) != set(allowed):
                raise ConfigError("rf_grid needs exactly the keys n_trees, feature_fraction, "
                                  "min_samples")
            for key, domain in allowed.items():
                for v in self.rf_grid[key]:
                    if not any(abs(float(v) - d) < 1e-9 for d in domain):
                        raise ConfigError(f"rf_grid {key} value {v} outside the tuning grid")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "input_csv" not in data:
            raise ConfigError("missing config key: input_csv")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def settings(self) -> ProtocolSettings:
        lr = None if self.lr_lambdas is None else [LRParams(float(l)) for l in self.lr_lambdas]
        rf = None if self.rf_grid is None else rf_grid(
            self.rf_grid["n_trees"], self.rf_grid["feature_fraction"],
            self.rf_grid["min_samples"])
        tuner = Tuner(lr_grid=lr, rf_grid=rf, k=self.cv_k, seed=self.seed,
                      lr_options={"tol": self.lr_tolerance, "max_iters": self.lr_max_iters,
                                  "solver": self.lr_solver})
        first, last = self.test_span["first"], self.test_span["last"]
        return ProtocolSettings(
            tuner=tuner,
            test_first=None if first is None else parse_year_month(first),
            test_last=None if last is None else parse_year_month(last),
            tune_every=self.tune_every,
        )


@dataclass
class RunReport:
    monthly: dict            # (method, level) -> list[MonthlyResult]
    averages: dict           # (method, level) -> float
    config: dict
    seed: int
    wall_clock: float
    runs: dict = field(default_factory=dict, repr=False)   # (method, level) -> MethodRun
    schema: FeatureSchema | None = field(default=None, repr=False)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def mean_of(values: Sequence[float]) -> float:
    """Mean of the defined values, accumulated left to right."""
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else math.nan


def monthly_rows(monthly: dict) -> list[dict]:
    rows = []
    for (method, level), results in monthly.items():
        for r in results:
            y, m = year_month(r.t)
            rows.append({"method": method, "info_level": level, "year": y, "month": m,
                         "auc": _fmt(r.auc), "n_test": r.n_test, "n_pos": r.n_pos})
    return rows


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def read_monthly(path) -> dict:
    """Parse ``monthly.csv`` back into ``(method, level) -> [(t, auc, n_test, n_pos)]``."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], row["info_level"])
            t = int(row["year"]) * 12 + int(row["month"]) - 1
            value = float(row["auc"]) if row["auc"] else math.nan
            out.setdefault(key, []).append(
                MonthlyResult(t, row["method"], row["info_level"], value,
                              int(row["n_test"]), int(row["n_pos"])))
    return out


def averages_from_monthly(monthly: dict) -> dict:
    return {key: mean_of([r.auc for r in results]) for key, results in monthly.items()}


def write_averages(path, averages: dict) -> None:
    """Wide table: one row per method, one column per information level."""
    methods = list(dict.fromkeys(m for m, _ in averages))
    levels = list(dict.fromkeys(l for _, l in averages))
    rows = []
    for m in methods:
        row = {"method": m}
        for l in levels:
            row[l] = _fmt(averages[(m, l)]) if (m, l) in averages else ""
        rows.append(row)
    _write_csv(Path(path), ["method", *levels], rows)


def read_averages(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            for level in reader.fieldnames[1:]:
                if row[level] != "":
                    out[(row["method"], level)] = float(row[level])
    return out


def _series_rows(monthly: dict, columns: list[tuple[str, tuple]]) -> list[dict]:
    months = sorted({r.t for key in (k for _, k in columns) for r in monthly[key]})
    lookup = {key: {r.t: r.auc for r in monthly[key]} for _, key in columns}
    rows = []
    for t in months:
        y, m = year_month(t)
        row = {"year": y, "month": m}
        for name, key in columns:
            row[name] = _fmt(lookup[key].get(t, math.nan))
        rows.append(row)
    return rows


def write_figures(out_dir: Path, monthly: dict, averages: dict, levels: list[str],
                  methods: list[str]) -> None:
    """fig1: every method's monthly AUC at the richest configured level;
    fig2: per level, the series of the best non-baseline method."""
    fig_level = "IL4" if "IL4" in levels else levels[-1]
    cols1 = [(m, (m, fig_level)) for m in methods]
    _write_csv(out_dir / "figures" / "fig1_series.csv", ["year", "month", *[c for c, _ in cols1]],
               _series_rows(monthly, cols1))
    cols2 = []
    for level in levels:
        candidates = [m for m in methods if not m.startswith("baseline")] or methods
        scored = [(averages[(m, level)], -i, m) for i, m in enumerate(candidates)
                  if not math.isnan(averages[(m, level)])]
        if scored:
            best = max(scored)[2]
            cols2.append((f"{level}:{best}", (best, level)))
    _write_csv(out_dir / "figures" / "fig2_series.csv", ["year", "month", *[c for c, _ in cols2]],
               _series_rows(monthly, cols2))


def _safe(name: str) -> str:
    return name.replace("+", "-").replace("/", "_")


def save_models(models_dir: Path, runs: dict, schema: FeatureSchema) -> None:
    models_dir.mkdir(parents=True, exist_ok=True)
    (models_dir / "schema.json").write_text(json.dumps(schema.to_dict(), indent=2))
    for (method, level), run in runs.items():
        base = f"{_safe(method)}__{level}"
        if run.final_model is not None:
            m = run.final_model
            save_model(m.estimator, models_dir / f"{base}.json", info_level=level,
                       family=m.family, method=method)
        elif run.final_ensemble is not None:
            ens = run.final_ensemble
            d = models_dir / base
            manifest = {"method": method, "info_level": level, "composition": ens.composition,
                        "level1": "level1.json", "pool": []}
            for pool, size in zip(ens.pools, ens.sizes):
                for entry in pool.entries[:size]:
                    fname = f"level0_{entry.variant}_{format_year_month(entry.trained_at)}.json"
                    save_model(entry.model.estimator, d / fname, info_level=level,
                               family=entry.model.family)
                    manifest["pool"].append({"trained_at": format_year_month(entry.trained_at),
                                             "variant": entry.variant, "model": fname})
            save_model(ens.level1.estimator, d / "level1.json", family=ens.level1.family)
            (d / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _write_outputs(out_dir: Path, monthly: dict, config: ExperimentConfig, schema,
                   runs: dict, wall: float, partial: bool = False) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "monthly.csv", MONTHLY_HEADER, monthly_rows(monthly))
    # re-read so the averages are computed from exactly what monthly.csv holds
    parsed = read_monthly(out_dir / "monthly.csv") if monthly else {}
    averages = averages_from_monthly(parsed)
    write_averages(out_dir / "averages.csv", averages)
    meta = {
        "config": config.to_dict(),
        "seed": config.seed,
        "wall_clock_seconds": wall,
        "partial": partial,
        "versions": {"homecare_ensemble": __version__, "numpy": np.__version__,
                     "pandas": pd.__version__, "python": platform.python_version()},
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    if not partial:
        write_figures(out_dir, parsed, averages, config.info_levels, config.methods)
        if schema is not None:
            save_models(out_dir / "models", runs, schema)
    return averages


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunReport:
    """Ingest, aggregate, and evaluate every configured (method, level) cell.

    On failure, results gathered so far are flushed to ``monthly.csv`` before an
    :class:`ExperimentError` naming the cell and month is raised.
    """
    start = time.perf_counter()
    out_dir = Path(config.output_dir)
    frame = ingest_csv(config.input_csv)
    schema = schema_for_records(frame)
    chunks = chunk_map(aggregate_windows(frame, config.window_months, config.horizon_months,
                                         config.threshold_hours, schema=schema))
    settings = config.settings()
    store = Level0Store(chunks, schema, settings)
    monthly: dict = {}
    runs: dict = {}
    for level in config.info_levels:
        for method in config.methods:
            try:
                run = run_method(chunks, method, level, schema, settings, store)
            except ProtocolError as exc:
                if exc.partial:
                    monthly[(method, level)] = exc.partial
                if write:
                    _write_outputs(out_dir, monthly, config, None, runs,
                                   time.perf_counter() - start, partial=True)
                raise ExperimentError(str(exc)) from exc
            monthly[(method, level)] = run.results
            runs[(method, level)] = run
    wall = time.perf_counter() - start
    if write:
        averages = _write_outputs(out_dir, monthly, config, schema, runs, wall)
    else:
        averages = {k: mean_of([r.auc for r in v]) for k, v in monthly.items()}
    return RunReport(monthly, averages, config.to_dict(), config.seed, wall, runs, schema)


def report(out_dir) -> dict:
    """Recompute ``averages.csv`` from ``monthly.csv``."""
    out_dir = Path(out_dir)
    averages = averages_from_monthly(read_monthly(out_dir / "monthly.csv"))
    write_averages(out_dir / "averages.csv", averages)
    return averages


def inspect_weights(model_path, schema: FeatureSchema | str | Path | None = None,
                    level=None) -> list[tuple[str, float]]:
    """Features ranked by absolute standardised weight (ties by index)."""
    model_path = Path(model_path)
    payload = json.loads(model_path.read_text())
    model = load_model(model_path)
    if not isinstance(model, LinearModel):
        raise ValueError("weights undefined for forests")
    if schema is None:
        candidate = model_path.parent / "schema.json"
        schema = candidate if candidate.exists() else None
    if isinstance(schema, (str, Path)):
        schema = FeatureSchema.from_dict(json.loads(Path(schema).read_text()))
    level = level or payload.get("info_level")
    if schema is not None and level is not None:
        names = schema.level_names(level)
    else:
        names = [f"x{j}" for j in range(model.dim)]
    if len(names) != model.dim:
        raise ValueError(f"schema gives {len(names)} features for {level}, model has {model.dim}")
    mags = np.abs(model.weights)
    order = sorted(range(model.dim), key=lambda j: (-mags[j], j))
    return [(names[j], float(mags[j])) for j in order]
