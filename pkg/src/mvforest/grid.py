"""Simulation-grid and runtime experiments producing CSV rows."""

from __future__ import annotations

import csv
import logging
import multiprocessing
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

import numpy as np

from . import simgen
from .evaluation import (METHOD_NAMES, MethodConfig, benchmark_fit, cross_validate_once,
                         kfold)
from .simgen import (ERROR_SETTINGS, SAMPLE_SIZES, CovarianceSpec, FeatureDependence,
                     ResponseModel, SimulationSetting)

log = logging.getLogger(__name__)

GRID_COLUMNS = ("model", "dependence", "rho", "ell", "n", "method", "repetition",
                "overall_mse", "mse_y1", "mse_y2", "mse_y3", "fit_seconds", "unstable")
SUMMARY_COLUMNS = ("model", "dependence", "rho", "ell", "n", "method", "repetitions",
                   "mean_overall_mse", "mean_mse_y1", "mean_mse_y2", "mean_mse_y3",
                   "mean_fit_seconds", "unstable")
BENCH_COLUMNS = ("model", "dependence", "rho", "ell", "n", "method", "repetitions",
                 "mean_seconds", "min_seconds", "q05_seconds", "median_seconds",
                 "q95_seconds", "max_seconds")


def select_errors(rhos: Optional[Sequence[float]] = None,
                  ells: Optional[Sequence[int]] = None) -> List[CovarianceSpec]:
    """Error structures matching the filters; rho = 0 matches any ell."""
    out = []
    for cov in ERROR_SETTINGS:
        if rhos is not None and not any(np.isclose(cov.rho, r) for r in rhos):
            continue
        if ells is not None and cov.rho != 0 and cov.ell not in ells:
            continue
        out.append(cov)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    models: Sequence[str] = tuple(m.value for m in ResponseModel)
    dependencies: Sequence[str] = tuple(d.value for d in FeatureDependence)
    errors: Sequence[CovarianceSpec] = ERROR_SETTINGS
    sizes: Sequence[int] = SAMPLE_SIZES
    methods: Sequence[str] = METHOD_NAMES
    repetitions: int = 50
    folds: int = 5
    seed: int = 0
    num_trees: int = 500
    threads: Optional[int] = None
    workers: int = 1
    settings: List[SimulationSetting] = field(init=False, repr=False)

    def __post_init__(self):
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ValueError(f"unknown method {m!r}")
        if self.repetitions < 1 or self.folds < 2 or self.workers < 1:
            raise ValueError("need repetitions >= 1, folds >= 2, workers >= 1")
        settings = list(simgen.grid(self.models, self.dependencies, self.errors, self.sizes))
        if not settings or not self.methods:
            raise ValueError("filters select no simulation settings")
        object.__setattr__(self, "settings", settings)

    def method_configs(self) -> List[MethodConfig]:
        return [MethodConfig(m, num_trees=self.num_trees, threads=self.threads)
                for m in self.methods]


def _setting_fields(s: SimulationSetting) -> dict:
    return {"model": s.model.value, "dependence": s.dependence.value, "rho": s.cov.rho,
            "ell": s.cov.ell, "n": s.n}


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _cell_seed(seed: int, setting: SimulationSetting) -> int:
    ss = np.random.SeedSequence([seed, *setting.key()])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def run_cell(setting: SimulationSetting, config: ExperimentConfig) -> List[dict]:
    """All (method, repetition) rows of one grid cell.

    Every method sees the same simulated dataset and the same folds within a
    repetition; a fresh dataset is drawn per repetition.
    """
    cell_seed = _cell_seed(config.seed, setting)
    methods = config.method_configs()
    rows = []
    for rep in range(config.repetitions):
        data = simgen.generate(setting, config.seed, rep)
        folds = kfold(data.n, config.folds,
                      np.random.default_rng(np.random.SeedSequence([cell_seed, rep])))
        for method in methods:
            res = cross_validate_once(data, method, folds, cell_seed, rep)
            rows.append({**_setting_fields(setting), "method": method.name, "repetition": rep,
                         "overall_mse": res.overall_mse,
                         **{f"mse_y{j + 1}": float(v) for j, v in enumerate(res.per_output_mse)},
                         "fit_seconds": res.fit_time, "unstable": _flag(setting.unstable)})
    return rows


def _run_cell_safe(args):
    setting, config = args
    try:
        return setting, run_cell(setting, config), None
    except Exception as exc:  # reported by the collector
        return setting, [], f"{type(exc).__name__}: {exc}"


def iter_cells(config: ExperimentConfig) -> Iterator[tuple]:
    """Yield ``(setting, rows, error)`` in grid order; cells may run in parallel."""
    jobs = [(s, config) for s in config.settings]
    if config.workers == 1:
        yield from map(_run_cell_safe, jobs)
        return
    # fork is unsafe once the OpenMP threading layer is running
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=config.workers, mp_context=ctx) as pool:
        yield from pool.map(_run_cell_safe, jobs)


def run_grid(config: ExperimentConfig, out) -> int:
    """Write one CSV row per (setting, method, repetition); returns failed-cell count."""
    failures = 0
    with open(Path(out), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(GRID_COLUMNS))
        writer.writeheader()
        for i, (setting, rows, error) in enumerate(iter_cells(config), 1):
            if error is not None:
                failures += 1
                log.error("cell %s failed: %s", _setting_fields(setting), error)
                continue
            writer.writerows(rows)
            fh.flush()
            log.info("cell %d/%d done: %s", i, len(config.settings), _setting_fields(setting))
    return failures


def read_rows(path) -> List[dict]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize(rows: Sequence[dict]) -> List[dict]:
    """Mean MSEs and fit time per (setting, method), in first-seen order."""
    groups = defaultdict(list)
    for row in rows:
        key = (row["model"], row["dependence"], float(row["rho"]), int(row["ell"]),
               int(row["n"]), row["method"])
        groups[key].append(row)
    out = []
    for key, members in groups.items():
        def mean(col):
            return float(np.mean([float(r[col]) for r in members]))

        out.append({**dict(zip(("model", "dependence", "rho", "ell", "n", "method"), key)),
                    "repetitions": len(members), "mean_overall_mse": mean("overall_mse"),
                    "mean_mse_y1": mean("mse_y1"), "mean_mse_y2": mean("mse_y2"),
                    "mean_mse_y3": mean("mse_y3"), "mean_fit_seconds": mean("fit_seconds"),
                    "unstable": members[0]["unstable"]})
    return out


def run_bench(config: ExperimentConfig) -> List[dict]:
    """Fit-only runtime statistics on one simulated dataset per setting."""
    rows = []
    for setting in config.settings:
        data = simgen.generate(setting, config.seed, 0)
        for method in config.method_configs():
            stats = benchmark_fit(data, method, config.repetitions, config.seed)
            s = stats.summary()
            rows.append({**_setting_fields(setting), "method": method.name,
                         "repetitions": config.repetitions, "mean_seconds": s["mean"],
                         "min_seconds": s["min"], "q05_seconds": s["q05"],
                         "median_seconds": s["median"], "q95_seconds": s["q95"],
                         "max_seconds": s["max"]})
            log.info("%s n=%d %s: %.4fs", setting.model.value, setting.n, method.name, s["mean"])
    return rows
