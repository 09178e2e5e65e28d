"""Traffic time series: parsing, validation, cleaning, rescaling, synthesis.

Telemetry arrives as JSON record arrays or CSV with a ``timestamp`` and a
``bps`` (bits per second) field; everything else in a record is ignored.
Internally a series is a pair of aligned arrays: epoch-second timestamps on
a strict uniform cadence and non-negative float values. The unit of the
values (bps at the ingest boundary, Gbps after :func:`bps_to_gbps`) is a
convention of the call site, not a field.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .util import sha256_hex

DEFAULT_CADENCE_SECONDS = 300

# Fixed origin for synthetic series: 2020-01-01T00:00:00Z, a midnight, so the
# diurnal phase starts at zero.
_SYNTH_EPOCH_START = 1_577_836_800


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly spaced traffic series.

    Invariants, enforced at construction: timestamps strictly increasing
    with every consecutive gap equal to ``cadence_seconds``; values finite
    and non-negative; at least one point.
    """

    timestamps: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    cadence_seconds: int = DEFAULT_CADENCE_SECONDS

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if ts.ndim != 1 or vals.ndim != 1:
            raise ValidationError("timestamps and values must be 1-dimensional")
        if ts.size != vals.size:
            raise ValidationError(
                f"timestamps and values must have equal length, got {ts.size} and {vals.size}"
            )
        if ts.size == 0:
            raise ValidationError("empty series")
        if self.cadence_seconds <= 0:
            raise ValidationError(f"cadence_seconds must be positive, got {self.cadence_seconds}")
        if ts.size > 1:
            gaps = np.diff(ts)
            bad = np.flatnonzero(gaps != self.cadence_seconds)
            if bad.size:
                i = int(bad[0])
                if gaps[i] == 0:
                    raise ValidationError(f"duplicate timestamp {int(ts[i])}")
                raise ValidationError(
                    f"non-uniform cadence: gap of {int(gaps[i])} s between "
                    f"{int(ts[i])} and {int(ts[i + 1])} (expected {self.cadence_seconds} s)"
                )
        if not np.isfinite(vals).all():
            raise ValidationError("values must be finite")
        if (vals < 0).any():
            i = int(np.flatnonzero(vals < 0)[0])
            raise ValidationError(f"negative value {vals[i]} at index {i}")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        """Contiguous sub-series over [start, stop)."""
        return TimeSeries(self.timestamps[start:stop], self.values[start:stop], self.cadence_seconds)

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        return TimeSeries(self.timestamps, values, self.cadence_seconds)

    def fingerprint(self) -> str:
        """Content digest of the series, for traceable reports."""
        h = b"anomflow-series-v1:" + str(self.cadence_seconds).encode()
        return sha256_hex(h + self.timestamps.tobytes() + self.values.tobytes())


@dataclass(frozen=True)
class SynthConfig:
    """Parameters for the synthetic traffic generator.

    Produces ``days * (86400 / cadence_seconds)`` points: a diurnal sine on
    a base level plus Gaussian noise, clamped at zero, with a seeded random
    fraction of points multiplied into spikes.
    """

    days: int = 30
    base_gbps: float = 5.0
    diurnal_amplitude: float = 2.0
    noise_std: float = 0.1
    spike_fraction: float = 0.01
    spike_multiplier: float = 5.0
    seed: int = 0
    cadence_seconds: int = DEFAULT_CADENCE_SECONDS

    def __post_init__(self) -> None:
        if self.days <= 0:
            raise ConfigError("days must be positive")
        if self.base_gbps <= 0:
            raise ConfigError("base_gbps must be positive")
        if self.diurnal_amplitude < 0:
            raise ConfigError("diurnal_amplitude must be >= 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if not 0.0 <= self.spike_fraction <= 1.0:
            raise ConfigError("spike_fraction must be in [0, 1]")
        if self.spike_multiplier <= 1.0:
            raise ConfigError("spike_multiplier must be > 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.cadence_seconds <= 0 or 86400 % self.cadence_seconds != 0:
            raise ConfigError("cadence_seconds must be positive and divide 86400")


def _parse_timestamp(raw, where: str) -> int:
    """Accept integer epoch seconds or ISO-8601; naive datetimes are UTC."""
    if isinstance(raw, bool):
        raise ParseError(f"{where}: invalid timestamp {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float) and raw.is_integer():
        return int(raw)
    if isinstance(raw, str):
        text = raw.strip()
        try:
            return int(text)
        except ValueError:
            pass
        try:
            dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
        except ValueError as exc:
            raise ParseError(f"{where}: unparseable timestamp {raw!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        epoch = dt.timestamp()
        return int(round(epoch))
    raise ParseError(f"{where}: invalid timestamp {raw!r}")


def _series_from_pairs(pairs, cadence_seconds: int, fill_gaps: bool) -> TimeSeries:
    if not pairs:
        raise ValidationError("empty series")
    pairs.sort(key=lambda p: p[0])
    ts = np.array([p[0] for p in pairs], dtype=np.int64)
    vals = np.array([p[1] for p in pairs], dtype=np.float64)
    if len(pairs) > 1:
        gaps = np.diff(ts)
        dup = np.flatnonzero(gaps == 0)
        if dup.size:
            raise ValidationError(f"duplicate timestamp {int(ts[dup[0]])}")
        if fill_gaps:
            ts, vals = _backfill_gaps(ts, vals, cadence_seconds)
    return TimeSeries(ts, vals, cadence_seconds)


def _backfill_gaps(ts: np.ndarray, vals: np.ndarray, cadence: int) -> tuple[np.ndarray, np.ndarray]:
    """Insert missing points, each taking the value of the next real point."""
    gaps = np.diff(ts)
    bad = np.flatnonzero((gaps % cadence) != 0)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            f"non-uniform cadence: gap of {int(gaps[i])} s between "
            f"{int(ts[i])} and {int(ts[i + 1])} is not a multiple of {cadence} s"
        )
    out_ts = np.arange(ts[0], ts[-1] + cadence, cadence, dtype=np.int64)
    pos = np.searchsorted(ts, out_ts)
    out_vals = vals[pos]
    return out_ts, out_vals


def parse_telemetry_json(
    raw: bytes | str,
    cadence_seconds: int = DEFAULT_CADENCE_SECONDS,
    fill_gaps: bool = False,
) -> TimeSeries:
    """Parse a JSON array of telemetry records into a bps-valued series.

    Each record needs ``timestamp`` (epoch seconds or ISO-8601 UTC) and
    ``bps`` fields; any other fields are discarded. Records may arrive in
    any order. Duplicate timestamps and cadence gaps are hard errors
    unless ``fill_gaps`` inserts backward-filled points for exact-multiple
    gaps before validation.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        records = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ParseError("telemetry JSON must be an array of records")
    pairs = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ParseError(f"record {i}: expected an object, got {type(rec).__name__}")
        if "timestamp" not in rec or "bps" not in rec:
            raise ParseError(f"record {i}: missing 'timestamp' or 'bps' field")
        ts = _parse_timestamp(rec["timestamp"], f"record {i}")
        bps = rec["bps"]
        if isinstance(bps, bool) or not isinstance(bps, (int, float)):
            raise ParseError(f"record {i}: 'bps' must be a number, got {bps!r}")
        pairs.append((ts, float(bps)))
    return _series_from_pairs(pairs, cadence_seconds, fill_gaps)


def parse_telemetry_csv(
    raw: bytes | str,
    cadence_seconds: int = DEFAULT_CADENCE_SECONDS,
    fill_gaps: bool = False,
    value_column: str = "bps",
) -> TimeSeries:
    """Parse ``timestamp,bps`` CSV with the same contract as the JSON parser.

    Row numbers in errors count file lines, the header being line 1.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    reader = csv.reader(io.StringIO(raw))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"missing header 'timestamp,{value_column}'") from None
    if [h.strip() for h in header] != ["timestamp", value_column]:
        raise ParseError(f"missing header 'timestamp,{value_column}', got {','.join(header)!r}")
    pairs = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"row {lineno}: expected 2 fields, got {len(row)}")
        ts = _parse_timestamp(row[0], f"row {lineno}")
        try:
            value = float(row[1])
        except ValueError as exc:
            raise ParseError(f"row {lineno}: unparseable {value_column} {row[1]!r}") from exc
        pairs.append((ts, value))
    return _series_from_pairs(pairs, cadence_seconds, fill_gaps)


def serialize_telemetry_json(series: TimeSeries) -> bytes:
    records = [
        {"timestamp": int(t), "bps": float(v)}
        for t, v in zip(series.timestamps, series.values)
    ]
    return (json.dumps(records, separators=(",", ":")) + "\n").encode("utf-8")


def serialize_telemetry_csv(series: TimeSeries, value_column: str = "bps") -> bytes:
    lines = [f"timestamp,{value_column}"]
    lines.extend(f"{int(t)},{float(v)!r}" for t, v in zip(series.timestamps, series.values))
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_series_csv(raw: bytes | str, cadence_seconds: int | None = None) -> TimeSeries:
    """Read the pipeline's Gbps series artifact (``timestamp,gbps`` CSV).

    Cadence is taken from the data when not given (single-point files fall
    back to the 300 s default).
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    if cadence_seconds is None:
        first_lines = raw.splitlines()
        cadence_seconds = DEFAULT_CADENCE_SECONDS
        if len(first_lines) >= 3:
            try:
                t0 = int(first_lines[1].split(",")[0])
                t1 = int(first_lines[2].split(",")[0])
            except (ValueError, IndexError):
                t0 = t1 = 0
            if t1 > t0:
                cadence_seconds = t1 - t0
    return parse_telemetry_csv(raw, cadence_seconds, value_column="gbps")


def serialize_series_csv(series: TimeSeries) -> bytes:
    return serialize_telemetry_csv(series, value_column="gbps")


def drop_incomplete_tail(series: TimeSeries, points_per_day: int) -> TimeSeries:
    """Trim to the longest prefix holding only complete days."""
    if points_per_day <= 0:
        raise ConfigError("points_per_day must be positive")
    keep = (len(series) // points_per_day) * points_per_day
    if keep == 0:
        raise ValidationError(
            f"no complete day: series has {len(series)} points, need {points_per_day}"
        )
    if keep == len(series):
        return series
    return series.slice(0, keep)


def bps_to_gbps(series: TimeSeries) -> TimeSeries:
    """Rescale values from bits/s to gigabits/s; timestamps untouched."""
    return series.with_values(series.values / 1e9)


def generate_synthetic(cfg: SynthConfig) -> tuple[TimeSeries, np.ndarray]:
    """Deterministic synthetic traffic plus the ground-truth spike mask.

    value(t) = base + amplitude * sin(2*pi*t / 86400) + N(0, noise_std),
    clamped at zero; then ``round(spike_fraction * n)`` seeded random points
    are multiplied by ``spike_multiplier`` and flagged true in the mask.
    """
    n = cfg.days * (86400 // cfg.cadence_seconds)
    rng = np.random.default_rng(cfg.seed)
    t_rel = np.arange(n, dtype=np.float64) * cfg.cadence_seconds
    values = cfg.base_gbps + cfg.diurnal_amplitude * np.sin(2.0 * math.pi * t_rel / 86400.0)
    if cfg.noise_std > 0:
        values = values + rng.normal(0.0, cfg.noise_std, size=n)
    values = np.maximum(values, 0.0)
    mask = np.zeros(n, dtype=bool)
    n_spikes = int(round(cfg.spike_fraction * n))
    if n_spikes > 0:
        where = rng.choice(n, size=n_spikes, replace=False)
        values[where] *= cfg.spike_multiplier
        mask[where] = True
    timestamps = _SYNTH_EPOCH_START + np.arange(n, dtype=np.int64) * cfg.cadence_seconds
    return TimeSeries(timestamps, values, cfg.cadence_seconds), mask
