import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anomflow import (
    ConfigError,
    ParseError,
    SynthConfig,
    TimeSeries,
    ValidationError,
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
from conftest import make_series


class TestTimeSeriesInvariants:
    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty series"):
            TimeSeries(np.array([], dtype=np.int64), np.array([]), 300)

    def test_duplicate_timestamp_rejected(self):
        with pytest.raises(ValidationError, match="duplicate timestamp"):
            TimeSeries(np.array([0, 0, 300]), np.array([1.0, 2.0, 3.0]), 300)

    def test_gap_rejected_with_first_gap_named(self):
        with pytest.raises(ValidationError, match="gap of 600 s between 300 and 900"):
            TimeSeries(np.array([0, 300, 900]), np.array([1.0, 2.0, 3.0]), 300)

    def test_negative_value_rejected(self):
        with pytest.raises(ValidationError, match="negative value"):
            make_series([1.0, -2.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError, match="finite"):
            make_series([1.0, np.nan])

    def test_single_point_allowed(self):
        assert len(make_series([5.0])) == 1

    def test_arrays_read_only(self):
        s = make_series([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 9.0


class TestParseTelemetryJson:
    def test_extra_fields_discarded(self):
        records = [
            {"timestamp": 600, "bps": 3e9, "interface": "xe-0/0/0", "site": "a"},
            {"timestamp": 0, "bps": 1e9, "note": "x"},
            {"timestamp": 300, "bps": 2e9, "quality": 0.99},
        ]
        s = parse_telemetry_json(json.dumps(records).encode())
        assert len(s) == 3
        assert s.values.tolist() == [1e9, 2e9, 3e9]

    def test_empty_array_is_error(self):
        with pytest.raises(ValidationError, match="empty series"):
            parse_telemetry_json(b"[]")

    def test_out_of_order_equals_sorted(self):
        recs = [{"timestamp": t, "bps": float(t)} for t in (900, 0, 600, 300)]
        shuffled = parse_telemetry_json(json.dumps(recs))
        ordered = parse_telemetry_json(json.dumps(sorted(recs, key=lambda r: r["timestamp"])))
        assert np.array_equal(shuffled.timestamps, ordered.timestamps)
        assert np.array_equal(shuffled.values, ordered.values)

    def test_iso8601_timestamps(self):
        recs = [
            {"timestamp": "2020-01-01T00:00:00Z", "bps": 1.0},
            {"timestamp": "2020-01-01T00:05:00+00:00", "bps": 2.0},
        ]
        s = parse_telemetry_json(json.dumps(recs))
        assert s.timestamps.tolist() == [1577836800, 1577837100]

    def test_malformed_record_names_index(self):
        with pytest.raises(ParseError, match="record 1"):
            parse_telemetry_json(b'[{"timestamp": 0, "bps": 1.0}, {"timestamp": 300}]')

    def test_duplicate_timestamp_is_error(self):
        recs = [{"timestamp": 0, "bps": 1.0}, {"timestamp": 0, "bps": 2.0}]
        with pytest.raises(ValidationError, match="duplicate timestamp"):
            parse_telemetry_json(json.dumps(recs))

    def test_gap_is_error_listing_first_gap(self):
        recs = [{"timestamp": t, "bps": 1.0} for t in (0, 300, 1200)]
        with pytest.raises(ValidationError, match="gap of 900 s"):
            parse_telemetry_json(json.dumps(recs))

    def test_fill_gaps_backfills_missing_points(self):
        recs = [{"timestamp": t, "bps": v} for t, v in ((0, 1.0), (300, 2.0), (1200, 5.0))]
        s = parse_telemetry_json(json.dumps(recs), fill_gaps=True)
        assert len(s) == 5
        # inserted points take the next real value
        assert s.values.tolist() == [1.0, 2.0, 5.0, 5.0, 5.0]

    def test_not_an_array(self):
        with pytest.raises(ParseError, match="array"):
            parse_telemetry_json(b'{"timestamp": 0}')


class TestParseTelemetryCsv:
    def test_two_rows(self):
        s = parse_telemetry_csv(b"timestamp,bps\n0,1.5\n300,2.5\n")
        assert len(s) == 2
        assert s.values.tolist() == [1.5, 2.5]

    def test_header_only_is_empty_series(self):
        with pytest.raises(ValidationError, match="empty series"):
            parse_telemetry_csv(b"timestamp,bps\n")

    def test_missing_header(self):
        with pytest.raises(ParseError, match="missing header"):
            parse_telemetry_csv(b"0,1.5\n300,2.5\n")

    def test_negative_bps_is_validation_error(self):
        with pytest.raises(ValidationError, match="negative value"):
            parse_telemetry_csv(b"timestamp,bps\n0,1.5\n300,-2.5\n")

    def test_bad_row_names_row_number(self):
        with pytest.raises(ParseError, match="row 3"):
            parse_telemetry_csv(b"timestamp,bps\n0,1.5\n300,abc\n")


class TestRoundTrips:
    @pytest.fixture
    def series(self):
        rng = np.random.default_rng(42)
        return make_series(rng.uniform(0, 9e9, size=50))

    def test_json_round_trip_identical(self, series):
        again = parse_telemetry_json(serialize_telemetry_json(series))
        assert np.array_equal(again.timestamps, series.timestamps)
        assert np.array_equal(again.values, series.values)

    def test_csv_round_trip_identical(self, series):
        again = parse_telemetry_csv(serialize_telemetry_csv(series))
        assert np.array_equal(again.timestamps, series.timestamps)
        assert np.array_equal(again.values, series.values)

    def test_series_csv_round_trip_identical(self, series):
        again = parse_series_csv(serialize_series_csv(series))
        assert again.cadence_seconds == series.cadence_seconds
        assert np.array_equal(again.values, series.values)


class TestDropIncompleteTail:
    def test_production_sized_example(self):
        s = make_series(np.ones(8563))
        out = drop_incomplete_tail(s, 288)
        assert len(out) == 8352  # 29 complete days

    def test_exact_multiple_unchanged(self):
        s = make_series(np.ones(576))
        assert drop_incomplete_tail(s, 288) is s

    def test_less_than_a_day_is_error(self):
        with pytest.raises(ValidationError, match="no complete day"):
            drop_incomplete_tail(make_series(np.ones(100)), 288)

    @given(n=st.integers(1, 2000), ppd=st.integers(1, 300))
    @settings(max_examples=60, deadline=None)
    def test_result_is_multiple_of_points_per_day(self, n, ppd):
        s = make_series(np.ones(n), cadence=300)
        if n < ppd:
            with pytest.raises(ValidationError):
                drop_incomplete_tail(s, ppd)
        else:
            assert len(drop_incomplete_tail(s, ppd)) % ppd == 0


class TestBpsToGbps:
    def test_definition(self):
        s = make_series([2.5e9, 0.0])
        out = bps_to_gbps(s)
        assert out.values.tolist() == [2.5, 0.0]
        assert np.array_equal(out.timestamps, s.timestamps)

    def test_round_trip_relative_error(self):
        rng = np.random.default_rng(0)
        v = rng.uniform(0.01, 100.0, size=200)
        back = bps_to_gbps(make_series(v * 1e9)).values
        assert np.max(np.abs(back - v) / v) < 1e-12

    def test_preserves_order_relations(self):
        rng = np.random.default_rng(1)
        v = rng.uniform(0, 5e9, size=100)
        out = bps_to_gbps(make_series(v)).values
        assert np.argmax(out) == np.argmax(v)
        assert np.argmin(out) == np.argmin(v)
        assert np.array_equal(np.argsort(out), np.argsort(v))


class TestGenerateSynthetic:
    def test_no_spikes_means_empty_mask(self):
        _, mask = generate_synthetic(SynthConfig(days=1, spike_fraction=0.0, seed=3))
        assert not mask.any()

    def test_same_seed_is_bit_identical(self):
        cfg = SynthConfig(days=2, seed=11)
        a, mask_a = generate_synthetic(cfg)
        b, mask_b = generate_synthetic(cfg)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.timestamps, b.timestamps)
        assert np.array_equal(mask_a, mask_b)

    def test_30_days_gives_8640_points(self):
        s, _ = generate_synthetic(SynthConfig(days=30, seed=0))
        assert len(s) == 30 * 288

    def test_values_clamped_non_negative(self):
        s, _ = generate_synthetic(
            SynthConfig(days=1, base_gbps=0.1, diurnal_amplitude=0.0, noise_std=5.0, seed=5)
        )
        assert (s.values >= 0).all()

    def test_spike_count_matches_fraction(self):
        s, mask = generate_synthetic(SynthConfig(days=10, spike_fraction=0.02, seed=9))
        assert mask.sum() == round(0.02 * len(s))

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(days=0)
        with pytest.raises(ConfigError):
            SynthConfig(spike_multiplier=1.0)
        with pytest.raises(ConfigError):
            SynthConfig(spike_fraction=1.5)
