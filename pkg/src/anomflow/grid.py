"""The experiment grid: MAPE per (model, window, arm) cell.

The raw arm trains and scores on the series as ingested; the adjusted arm
first runs three-sigma detection and backward filling over the full
series, then windows it, so adjusted lags feed adjusted targets. By
default the adjusted arm is also scored against the adjusted actuals (the
adjusted series is that arm's ground truth); ``score_against="raw"``
scores it against the raw test values instead.

Every cell derives its own random stream from (seed, model, window, arm),
so cells are schedule-independent and a sub-grid reproduces the matching
cells of the full grid bit for bit.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anomaly import backward_fill, three_sigma_detect
from .errors import ConfigError, GridCellError, ValidationError
from .metrics import MAPE_EPSILON, mape
from .regressors import PRESET_NAMES, make_preset
from .series import TimeSeries
from .stacking import StackedRegressor
from .util import derive_seed, sha256_hex
from .windowing import chronological_split, make_supervised

ARM_WITH_OUTLIERS = "with_outliers"
ARM_OUTLIER_ADJUSTED = "outlier_adjusted"
ARMS = (ARM_WITH_OUTLIERS, ARM_OUTLIER_ADJUSTED)

DEFAULT_WINDOWS = (6, 9, 12, 15, 18)
DEFAULT_MODELS = PRESET_NAMES + ("ensemble",)

GRID_CSV_HEADER = "model,window,arm,mape_percent"


@dataclass(frozen=True)
class ExperimentGrid:
    """MAPE percent per (model name, window length, arm) cell."""

    cells: dict = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def require_complete(self) -> None:
        models = self.metadata.get("models")
        windows = self.metadata.get("windows")
        arms = self.metadata.get("arms")
        if models is None or windows is None or arms is None:
            return
        expected = {
            (m, int(w), a) for m in models for w in windows for a in arms
        }
        if set(self.cells) != expected:
            missing = sorted(expected - set(self.cells))
            extra = sorted(set(self.cells) - expected)
            raise ValidationError(f"grid has holes: missing={missing} extra={extra}")

    def best_over_windows(self, model: str, arm: str) -> float:
        values = [v for (m, _, a), v in self.cells.items() if m == model and a == arm]
        if not values:
            raise ValidationError(f"no cells for model={model!r} arm={arm!r}")
        return min(values)


def _stable_key(name: str) -> int:
    return int(sha256_hex(name.encode("utf-8"))[:8], 16)


def make_model(name: str, seed: int = 0, k_folds: int = 5):
    """Build a preset base learner or the stacked ensemble of all presets."""
    if name == "ensemble":
        bases = [
            (preset, make_preset(preset, seed=derive_seed(seed, i)))
            for i, preset in enumerate(PRESET_NAMES)
        ]
        return StackedRegressor(bases, k_folds=k_folds, ridge_lambda=1e-3, seed=seed)
    return make_preset(name, seed=seed)


def _run_cell(
    arm_series: TimeSeries,
    raw_series: TimeSeries,
    model_name: str,
    window: int,
    arm: str,
    train_days: int,
    points_per_day: int,
    k_folds: int,
    seed: int,
    epsilon: float,
    score_against: str,
) -> float:
    cell_seed = derive_seed(seed, _stable_key(model_name), window, _stable_key(arm))
    train_ts, test_ts = chronological_split(arm_series, train_days, points_per_day)
    train_ds = make_supervised(train_ts, window)
    test_ds = make_supervised(test_ts, window)
    actual = test_ds.targets
    if arm == ARM_OUTLIER_ADJUSTED and score_against == "raw":
        _, raw_test_ts = chronological_split(raw_series, train_days, points_per_day)
        actual = make_supervised(raw_test_ts, window).targets
    model = make_model(model_name, seed=cell_seed, k_folds=k_folds)
    model.fit(train_ds.features, train_ds.targets)
    predictions = model.predict(test_ds.features)
    return mape(predictions, actual, epsilon)


def run_grid(
    series: TimeSeries,
    windows=DEFAULT_WINDOWS,
    models=DEFAULT_MODELS,
    train_days: int = 21,
    k_folds: int = 5,
    seed: int = 0,
    epsilon: float = MAPE_EPSILON,
    arms=ARMS,
    score_against: str = "adjusted",
    max_workers: int = 1,
    config_digest: str | None = None,
    progress=None,
) -> ExperimentGrid:
    """Run the full (model x window x arm) MAPE grid on one series.

    Deterministic for a fixed seed; any failing cell aborts the run with
    the cell identity attached. ``progress`` is called as
    progress(model, window, arm, mape_percent) per cell in canonical order.
    """
    windows = tuple(sorted(set(int(w) for w in windows)))
    if not windows or any(w <= 0 for w in windows):
        raise ConfigError("windows must be a non-empty set of positive integers")
    models = tuple(sorted(set(models)))
    for name in models:
        if name != "ensemble" and name not in PRESET_NAMES:
            raise ConfigError(
                f"unknown model {name!r}; choose from {PRESET_NAMES + ('ensemble',)}"
            )
    arms = tuple(sorted(set(arms)))
    for arm in arms:
        if arm not in ARMS:
            raise ConfigError(f"unknown arm {arm!r}; choose from {ARMS}")
    if not arms:
        raise ConfigError("at least one arm is required")
    if score_against not in ("raw", "adjusted"):
        raise ConfigError("score_against must be 'raw' or 'adjusted'")
    if 86400 % series.cadence_seconds != 0:
        raise ConfigError("series cadence must divide one day")
    points_per_day = 86400 // series.cadence_seconds

    arm_input = {ARM_WITH_OUTLIERS: series}
    if ARM_OUTLIER_ADJUSTED in arms:
        report = three_sigma_detect(series)
        arm_input[ARM_OUTLIER_ADJUSTED] = backward_fill(series, report.mask)

    keys = [(m, w, a) for m in models for w in windows for a in arms]
    keys.sort()

    def task(key):
        model_name, window, arm = key
        try:
            return _run_cell(
                arm_input[arm],
                series,
                model_name,
                window,
                arm,
                train_days,
                points_per_day,
                k_folds,
                seed,
                epsilon,
                score_against,
            )
        except Exception as exc:
            raise GridCellError(
                f"cell (model={model_name}, window={window}, arm={arm}): {exc}"
            ) from exc

    cells = {}
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {key: pool.submit(task, key) for key in keys}
            for key in keys:
                cells[key] = futures[key].result()
                if progress is not None:
                    progress(*key, cells[key])
    else:
        for key in keys:
            cells[key] = task(key)
            if progress is not None:
                progress(*key, cells[key])

    metadata = {
        "models": list(models),
        "windows": list(windows),
        "arms": list(arms),
        "train_days": train_days,
        "k_folds": k_folds,
        "seed": seed,
        "epsilon": epsilon,
        "score_against": score_against,
        "dataset_fingerprint": series.fingerprint(),
    }
    if config_digest is None:
        config_digest = sha256_hex(
            json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode()
        )
    metadata["config_digest"] = config_digest
    grid = ExperimentGrid(cells=cells, metadata=metadata)
    grid.require_complete()
    return grid


def _sorted_records(grid: ExperimentGrid):
    return sorted(grid.cells.items())


def export_grid_csv(grid: ExperimentGrid) -> bytes:
    grid.require_complete()
    lines = [GRID_CSV_HEADER]
    for (model, window, arm), value in _sorted_records(grid):
        lines.append(f"{model},{window},{arm},{float(value)!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def export_grid_json(grid: ExperimentGrid) -> bytes:
    grid.require_complete()
    payload = {
        "metadata": grid.metadata,
        "cells": [
            {"model": model, "window": window, "arm": arm, "mape_percent": float(value)}
            for (model, window, arm), value in _sorted_records(grid)
        ],
    }
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")


def export_grid(grid: ExperimentGrid, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        return export_grid_csv(grid)
    if fmt == "json":
        return export_grid_json(grid)
    raise ConfigError(f"unknown export format {fmt!r}; choose 'csv' or 'json'")


def parse_grid_csv(data: bytes | str) -> ExperimentGrid:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [line for line in data.splitlines() if line]
    if not lines or lines[0] != GRID_CSV_HEADER:
        raise ValidationError(f"grid CSV must start with header {GRID_CSV_HEADER!r}")
    cells = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 4:
            raise ValidationError(f"bad grid CSV row: {line!r}")
        model, window, arm, value = parts
        cells[(model, int(window), arm)] = float(value)
    return ExperimentGrid(cells=cells, metadata={})


def parse_grid_json(data: bytes | str) -> ExperimentGrid:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    payload = json.loads(data)
    cells = {
        (rec["model"], int(rec["window"]), rec["arm"]): float(rec["mape_percent"])
        for rec in payload["cells"]
    }
    return ExperimentGrid(cells=cells, metadata=payload.get("metadata", {}))


def export_plot_data(actual: TimeSeries, predicted, offset: int) -> bytes:
    """CSV of actual vs. predicted traffic, aligned from ``offset`` onward."""
    pred = np.asarray(predicted, dtype=np.float64)
    if pred.ndim != 1:
        raise ValidationError("predicted must be 1-dimensional")
    if offset < 0 or offset + pred.size != len(actual):
        raise ValidationError(
            f"misalignment: offset {offset} + {pred.size} predictions != "
            f"{len(actual)} actual points"
        )
    lines = ["timestamp,actual_gbps,predicted_gbps"]
    ts = actual.timestamps[offset:]
    vals = actual.values[offset:]
    for i in range(pred.size):
        lines.append(f"{int(ts[i])},{float(vals[i])!r},{float(pred[i])!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")
