"""Command-line pipeline: synth/ingest -> detect -> adjust -> train -> predict -> grid.

Data goes to files (written atomically: temp file + rename), one-line
progress summaries go to standard error. Every output is accompanied by a
``<output>.meta.json`` sidecar carrying the effective configuration and
its digest, so a report is traceable to the exact run that produced it.

Settings resolve as: built-in defaults, then the ``--config`` file's
section for the subcommand (flat ``key = value`` lines), then explicit
command-line flags. Exit codes: 0 success, 2 input/data error, 3
configuration error, 4 internal error. ``ANOMFLOW_THREADS`` caps the
worker pool used for grid cells.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .anomaly import backward_fill, iforest_detect, outlier_report_csv, three_sigma_detect
from .errors import AnomflowError, ConfigError, GridCellError, ParseError, ValidationError
from .grid import export_grid, export_plot_data, make_model, run_grid
from .metrics import MAPE_EPSILON
from .persist import dumps_model, load_model
from .series import (
    SynthConfig,
    bps_to_gbps,
    drop_incomplete_tail,
    generate_synthetic,
    parse_series_csv,
    parse_telemetry_csv,
    parse_telemetry_json,
    serialize_series_csv,
    serialize_telemetry_csv,
    serialize_telemetry_json,
)
from .util import sha256_hex
from .windowing import make_supervised

DEFAULTS = {
    "synth": {
        "days": 30,
        "base_gbps": 5.0,
        "diurnal_amplitude": 2.0,
        "noise_std": 0.1,
        "spike_fraction": 0.01,
        "spike_multiplier": 5.0,
        "seed": 0,
        "cadence": 300,
        "format": "json",
        "out": "telemetry.json",
        "truth_out": "",
    },
    "ingest": {
        "input": "",
        "format": "auto",
        "cadence": 300,
        "points_per_day": 0,
        "fill_gaps": False,
        "out": "series.csv",
    },
    "detect": {
        "input": "",
        "method": "three-sigma",
        "n_trees": 100,
        "subsample": 256,
        "contamination": 0.0,
        "seed": 0,
        "out": "outliers.csv",
    },
    "adjust": {
        "input": "",
        "method": "three-sigma",
        "n_trees": 100,
        "subsample": 256,
        "contamination": 0.0,
        "seed": 0,
        "out": "adjusted.csv",
    },
    "train": {
        "input": "",
        "model": "ensemble",
        "window": 12,
        "train_days": 0,
        "k_folds": 5,
        "adjust": False,
        "seed": 0,
        "out": "model.json",
    },
    "predict": {
        "input": "",
        "model_file": "model.json",
        "out": "predictions.csv",
    },
    "plot-data": {
        "input": "",
        "model_file": "model.json",
        "out": "plot.csv",
    },
    "grid": {
        "input": "",
        "synth_days": 0,
        "base_gbps": 5.0,
        "diurnal_amplitude": 2.0,
        "noise_std": 0.1,
        "spike_fraction": 0.01,
        "spike_multiplier": 5.0,
        "cadence": 300,
        "windows": "6,9,12,15,18",
        "models": "gbt-a,gbt-b,gbt-c,gbt-d,sgd,ensemble",
        "train_days": 21,
        "k_folds": 5,
        "seed": 0,
        "epsilon": MAPE_EPSILON,
        "arms": "with_outliers,outlier_adjusted",
        "score_against": "adjusted",
        "format": "csv",
        "out": "grid.csv",
    },
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 3)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _config_digest(command: str, effective: dict) -> str:
    lines = sorted(f"{command}.{key} = {value!r}" for key, value in effective.items())
    return sha256_hex("\n".join(lines).encode("utf-8"))


def _write_meta(out_path, command: str, effective: dict, digest: str, extra: dict | None = None) -> None:
    meta = {
        "tool": "anomflow",
        "version": __version__,
        "command": command,
        "config_digest": digest,
        "effective_config": {k: effective[k] for k in sorted(effective)},
    }
    if extra:
        meta.update(extra)
    data = (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode("utf-8")
    _atomic_write(str(out_path) + ".meta.json", data)


def _coerce(raw: str, like):
    if isinstance(like, bool):
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def _resolve(command: str, args: argparse.Namespace) -> dict:
    effective = dict(DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        cp = configparser.ConfigParser()
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"bad config file {config_path}: {exc}") from exc
        if cp.has_section(command):
            for key, raw in cp.items(command):
                key = key.replace("-", "_")
                if key not in effective:
                    raise ConfigError(f"unknown config key [{command}] {key}")
                try:
                    effective[key] = _coerce(raw, effective[key])
                except ValueError as exc:
                    raise ConfigError(f"bad config value [{command}] {key} = {raw!r}") from exc
    for key in effective:
        value = getattr(args, key, None)
        if value is not None:
            effective[key] = value
    return effective


def _read_bytes(path: str) -> bytes:
    if not path:
        raise ConfigError("an --input file is required")
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _load_series(path: str):
    return parse_series_csv(_read_bytes(path))


def _detect_report(effective, series):
    method = effective["method"]
    if method == "three-sigma":
        return three_sigma_detect(series)
    if method == "isolation-forest":
        contamination = effective["contamination"] or None
        return iforest_detect(
            series,
            n_trees=effective["n_trees"],
            subsample_size=effective["subsample"],
            contamination=contamination,
            seed=effective["seed"],
        )
    raise ConfigError(f"unknown method {method!r}; choose 'three-sigma' or 'isolation-forest'")


def _int_list(raw: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad {what} list {raw!r}") from exc


def _str_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _cmd_synth(effective) -> None:
    cfg = SynthConfig(
        days=effective["days"],
        base_gbps=effective["base_gbps"],
        diurnal_amplitude=effective["diurnal_amplitude"],
        noise_std=effective["noise_std"],
        spike_fraction=effective["spike_fraction"],
        spike_multiplier=effective["spike_multiplier"],
        seed=effective["seed"],
        cadence_seconds=effective["cadence"],
    )
    series, truth = generate_synthetic(cfg)
    telemetry = series.with_values(series.values * 1e9)  # telemetry carries bps
    if effective["format"] == "json":
        payload = serialize_telemetry_json(telemetry)
    elif effective["format"] == "csv":
        payload = serialize_telemetry_csv(telemetry)
    else:
        raise ConfigError(f"unknown format {effective['format']!r}; choose 'json' or 'csv'")
    digest = _config_digest("synth", effective)
    _atomic_write(effective["out"], payload)
    _write_meta(effective["out"], "synth", effective, digest,
                {"dataset_fingerprint": series.fingerprint()})
    if effective["truth_out"]:
        lines = ["index,timestamp,is_spike"]
        lines.extend(
            f"{i},{int(series.timestamps[i])},{'true' if truth[i] else 'false'}"
            for i in range(len(series))
        )
        _atomic_write(effective["truth_out"], ("\n".join(lines) + "\n").encode())
        _write_meta(effective["truth_out"], "synth", effective, digest)
    _log(f"synth: wrote {len(series)} points ({int(truth.sum())} spikes) to {effective['out']}")


def _cmd_ingest(effective) -> None:
    raw = _read_bytes(effective["input"])
    fmt = effective["format"]
    if fmt == "auto":
        fmt = "json" if effective["input"].endswith(".json") else "csv"
    if fmt == "json":
        series = parse_telemetry_json(raw, effective["cadence"], effective["fill_gaps"])
    elif fmt == "csv":
        series = parse_telemetry_csv(raw, effective["cadence"], effective["fill_gaps"])
    else:
        raise ConfigError(f"unknown format {fmt!r}; choose 'json', 'csv', or 'auto'")
    points_per_day = effective["points_per_day"] or 86400 // effective["cadence"]
    before = len(series)
    series = drop_incomplete_tail(series, points_per_day)
    series = bps_to_gbps(series)
    _atomic_write(effective["out"], serialize_series_csv(series))
    _write_meta(effective["out"], "ingest", effective, _config_digest("ingest", effective),
                {"dataset_fingerprint": series.fingerprint()})
    _log(
        f"ingest: {before} telemetry points -> {len(series)} "
        f"({before - len(series)} dropped from incomplete tail) to {effective['out']}"
    )


def _cmd_detect(effective) -> None:
    series = _load_series(effective["input"])
    report = _detect_report(effective, series)
    _atomic_write(effective["out"], outlier_report_csv(series, report))
    _write_meta(effective["out"], "detect", effective, _config_digest("detect", effective),
                {"n_outliers": report.n_outliers, "detector_params": report.params})
    _log(f"detect: {report.method} flagged {report.n_outliers}/{len(series)} points")


def _cmd_adjust(effective) -> None:
    series = _load_series(effective["input"])
    report = _detect_report(effective, series)
    adjusted = backward_fill(series, report.mask)
    _atomic_write(effective["out"], serialize_series_csv(adjusted))
    _write_meta(effective["out"], "adjust", effective, _config_digest("adjust", effective),
                {"n_outliers": report.n_outliers,
                 "dataset_fingerprint": adjusted.fingerprint()})
    _log(f"adjust: replaced {report.n_outliers} outliers by backward filling")


def _cmd_train(effective) -> None:
    series = _load_series(effective["input"])
    if effective["adjust"]:
        report = three_sigma_detect(series)
        series = backward_fill(series, report.mask)
    if effective["train_days"]:
        points_per_day = 86400 // series.cadence_seconds
        cut = effective["train_days"] * points_per_day
        if cut > len(series):
            raise ValidationError(
                f"train_days={effective['train_days']} needs {cut} points, series has {len(series)}"
            )
        series = series.slice(0, cut)
    dataset = make_supervised(series, effective["window"])
    model = make_model(effective["model"], seed=effective["seed"], k_folds=effective["k_folds"])
    model.fit(dataset.features, dataset.targets)
    _atomic_write(effective["out"], dumps_model(model))
    _write_meta(effective["out"], "train", effective, _config_digest("train", effective),
                {"n_samples": dataset.n_samples})
    _log(
        f"train: fitted {effective['model']} on {dataset.n_samples} samples "
        f"(window {effective['window']}) -> {effective['out']}"
    )


def _predictions_for(effective):
    series = _load_series(effective["input"])
    model = load_model(effective["model_file"])
    window = model.n_features_in_
    dataset = make_supervised(series, window)
    return series, window, model.predict(dataset.features)


def _cmd_predict(effective) -> None:
    series, window, predictions = _predictions_for(effective)
    lines = ["timestamp,predicted_gbps"]
    ts = series.timestamps[window:]
    lines.extend(f"{int(ts[i])},{float(predictions[i])!r}" for i in range(predictions.size))
    _atomic_write(effective["out"], ("\n".join(lines) + "\n").encode())
    _write_meta(effective["out"], "predict", effective, _config_digest("predict", effective))
    _log(f"predict: {predictions.size} predictions (window {window}) -> {effective['out']}")


def _cmd_plot_data(effective) -> None:
    series, window, predictions = _predictions_for(effective)
    payload = export_plot_data(series, predictions, offset=window)
    _atomic_write(effective["out"], payload)
    _write_meta(effective["out"], "plot-data", effective, _config_digest("plot-data", effective))
    _log(f"plot-data: {predictions.size} rows -> {effective['out']}")


def _grid_threads() -> int:
    raw = os.environ.get("ANOMFLOW_THREADS", "")
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ANOMFLOW_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError("ANOMFLOW_THREADS must be at least 1")
    return threads


def _cmd_grid(effective) -> None:
    if effective["input"]:
        series = _load_series(effective["input"])
    elif effective["synth_days"]:
        cfg = SynthConfig(
            days=effective["synth_days"],
            base_gbps=effective["base_gbps"],
            diurnal_amplitude=effective["diurnal_amplitude"],
            noise_std=effective["noise_std"],
            spike_fraction=effective["spike_fraction"],
            spike_multiplier=effective["spike_multiplier"],
            seed=effective["seed"],
            cadence_seconds=effective["cadence"],
        )
        series, _ = generate_synthetic(cfg)
    else:
        raise ConfigError("grid needs --input or --synth-days")
    digest = _config_digest("grid", effective)

    def progress(model, window, arm, value):
        _log(f"grid: model={model} window={window} arm={arm} mape={value:.4f}%")

    result = run_grid(
        series,
        windows=_int_list(effective["windows"], "windows"),
        models=_str_list(effective["models"]),
        train_days=effective["train_days"],
        k_folds=effective["k_folds"],
        seed=effective["seed"],
        epsilon=effective["epsilon"],
        arms=_str_list(effective["arms"]),
        score_against=effective["score_against"],
        max_workers=_grid_threads(),
        config_digest=digest,
        progress=progress,
    )
    payload = export_grid(result, effective["format"])
    _atomic_write(effective["out"], payload)
    _write_meta(effective["out"], "grid", effective, digest,
                {"dataset_fingerprint": result.metadata["dataset_fingerprint"]})
    _log(f"grid: wrote {len(result.cells)} cells to {effective['out']}")


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "detect": _cmd_detect,
    "adjust": _cmd_adjust,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "plot-data": _cmd_plot_data,
    "grid": _cmd_grid,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="anomflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anomflow {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file with a section per command")
        return p

    p = add("synth", "generate deterministic synthetic telemetry")
    p.add_argument("--days", type=int)
    p.add_argument("--base-gbps", type=float, dest="base_gbps")
    p.add_argument("--diurnal-amplitude", type=float, dest="diurnal_amplitude")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--spike-fraction", type=float, dest="spike_fraction")
    p.add_argument("--spike-multiplier", type=float, dest="spike_multiplier")
    p.add_argument("--seed", type=int)
    p.add_argument("--cadence", type=int, help="seconds between points")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--out", "-o")
    p.add_argument("--truth-out", dest="truth_out", help="also write the spike truth mask CSV")

    p = add("ingest", "parse telemetry, drop the incomplete tail, convert bps to Gbps")
    p.add_argument("--input", "-i")
    p.add_argument("--format", choices=["auto", "json", "csv"])
    p.add_argument("--cadence", type=int)
    p.add_argument("--points-per-day", type=int, dest="points_per_day")
    p.add_argument("--fill-gaps", action="store_true", dest="fill_gaps", default=None,
                   help="backward-fill missing points instead of failing on gaps")
    p.add_argument("--out", "-o")

    for name in ("detect", "adjust"):
        p = add(name, "flag outliers" if name == "detect" else "replace outliers by backward filling")
        p.add_argument("--input", "-i")
        p.add_argument("--method", choices=["three-sigma", "isolation-forest"])
        p.add_argument("--n-trees", type=int, dest="n_trees")
        p.add_argument("--subsample", type=int)
        p.add_argument("--contamination", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", "-o")

    p = add("train", "fit a model preset or the stacked ensemble on a series")
    p.add_argument("--input", "-i")
    p.add_argument("--model")
    p.add_argument("--window", type=int)
    p.add_argument("--train-days", type=int, dest="train_days",
                   help="train on the first N days only (0 = whole series)")
    p.add_argument("--k-folds", type=int, dest="k_folds")
    p.add_argument("--adjust", action="store_true", default=None,
                   help="three-sigma detect + backward fill before training")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", "-o")

    for name in ("predict", "plot-data"):
        p = add(name, "predict each window position" if name == "predict"
                else "emit actual vs predicted CSV")
        p.add_argument("--input", "-i")
        p.add_argument("--model-file", dest="model_file")
        p.add_argument("--out", "-o")

    p = add("grid", "run the (model x window x arm) MAPE experiment grid")
    p.add_argument("--input", "-i")
    p.add_argument("--synth-days", type=int, dest="synth_days")
    p.add_argument("--base-gbps", type=float, dest="base_gbps")
    p.add_argument("--diurnal-amplitude", type=float, dest="diurnal_amplitude")
    p.add_argument("--noise-std", type=float, dest="noise_std")
    p.add_argument("--spike-fraction", type=float, dest="spike_fraction")
    p.add_argument("--spike-multiplier", type=float, dest="spike_multiplier")
    p.add_argument("--cadence", type=int)
    p.add_argument("--windows", help="comma-separated window lengths")
    p.add_argument("--models", help="comma-separated model names")
    p.add_argument("--train-days", type=int, dest="train_days")
    p.add_argument("--k-folds", type=int, dest="k_folds")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--arms", help="comma-separated arm names")
    p.add_argument("--score-against", choices=["raw", "adjusted"], dest="score_against")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--out", "-o")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            raise ConfigError("a subcommand is required")
        effective = _resolve(args.command, args)
        _COMMANDS[args.command](effective)
        return 0
    except SystemExit as exc:  # argparse --help / --version
        return exc.code if isinstance(exc.code, int) else 0
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 3
    except GridCellError as exc:
        if isinstance(exc.__cause__, ConfigError):
            _log(f"config error: {exc}")
            return 3
        _log(f"data error: {exc}")
        return 2
    except (ParseError, ValidationError) as exc:
        _log(f"data error: {exc}")
        return 2
    except AnomflowError as exc:
        _log(f"internal error: {exc}")
        return 4
    except Exception as exc:  # pragma: no cover - defensive
        _log(f"internal error: {type(exc).__name__}: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
