import json

import pytest

from anomflow import parse_series_csv
from anomflow.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ANOMFLOW_THREADS", raising=False)
    return tmp_path


def run(*argv):
    return main(list(argv))


class TestSynthIngest:
    def test_synth_then_ingest(self, workdir):
        assert run("synth", "--days", "2", "--seed", "5", "--out", "t.json",
                   "--truth-out", "truth.csv") == 0
        assert run("ingest", "--input", "t.json", "--out", "s.csv") == 0
        series = parse_series_csv((workdir / "s.csv").read_bytes())
        assert len(series) == 576
        truth = (workdir / "truth.csv").read_text().strip().splitlines()
        assert truth[0] == "index,timestamp,is_spike"
        assert len(truth) == 577

    def test_synth_csv_format(self, workdir):
        assert run("synth", "--days", "1", "--format", "csv", "--out", "t.csv") == 0
        header = (workdir / "t.csv").read_text().splitlines()[0]
        assert header == "timestamp,bps"

    def test_ingest_drops_incomplete_tail(self, workdir):
        assert run("synth", "--days", "2", "--out", "t.json") == 0
        # append 10 extra points to make the last day incomplete
        records = json.loads((workdir / "t.json").read_text())
        last = records[-1]["timestamp"]
        for i in range(1, 11):
            records.append({"timestamp": last + 300 * i, "bps": 1e9})
        (workdir / "t.json").write_text(json.dumps(records))
        assert run("ingest", "--input", "t.json", "--out", "s.csv") == 0
        assert len(parse_series_csv((workdir / "s.csv").read_bytes())) == 576

    def test_fill_gaps_flag(self, workdir):
        records = [{"timestamp": t * 300, "bps": float(t + 1) * 1e9} for t in range(576)]
        del records[100:103]  # punch a 3-point hole
        (workdir / "gappy.json").write_text(json.dumps(records))
        assert run("ingest", "--input", "gappy.json", "--out", "s.csv") == 2  # hard error
        assert run("ingest", "--input", "gappy.json", "--fill-gaps", "--out", "s.csv") == 0
        series = parse_series_csv((workdir / "s.csv").read_bytes())
        assert len(series) == 576
        assert series.values[100] == series.values[103]  # backfilled from next point

    def test_meta_sidecar_written(self, workdir):
        run("synth", "--days", "1", "--out", "t.json")
        meta = json.loads((workdir / "t.json.meta.json").read_text())
        assert meta["command"] == "synth"
        assert meta["config_digest"]
        assert meta["effective_config"]["days"] == 1

    def test_missing_input_is_data_error(self, workdir):
        assert run("ingest", "--input", "absent.json", "--out", "s.csv") == 2

    def test_no_partial_output_on_failure(self, workdir):
        (workdir / "bad.json").write_text("[{]")
        assert run("ingest", "--input", "bad.json", "--out", "s.csv") == 2
        assert not (workdir / "s.csv").exists()


@pytest.fixture
def series_file(workdir):
    run("synth", "--days", "3", "--seed", "7", "--out", "t.json")
    run("ingest", "--input", "t.json", "--out", "s.csv")
    return workdir / "s.csv"


class TestDetectAdjust:
    def test_detect_three_sigma(self, workdir, series_file):
        assert run("detect", "--input", str(series_file), "--out", "d.csv") == 0
        lines = (workdir / "d.csv").read_text().strip().splitlines()
        assert lines[0] == "index,timestamp,value,is_outlier,score_or_bound_violation"
        assert len(lines) == 865

    def test_detect_constant_series_finds_nothing(self, workdir):
        rows = ["timestamp,gbps"] + [f"{i * 300},5.0" for i in range(10)]
        (workdir / "flat.csv").write_text("\n".join(rows) + "\n")
        assert run("detect", "--input", "flat.csv", "--out", "d.csv") == 0
        body = (workdir / "d.csv").read_text().strip().splitlines()[1:]
        assert all(line.split(",")[3] == "false" for line in body)

    def test_detect_isolation_forest(self, workdir, series_file):
        assert run("detect", "--input", str(series_file), "--method", "isolation-forest",
                   "--contamination", "0.01", "--seed", "1", "--out", "d.csv") == 0
        body = (workdir / "d.csv").read_text().strip().splitlines()[1:]
        flagged = sum(1 for line in body if line.split(",")[3] == "true")
        assert flagged >= 1

    def test_adjust_removes_outliers(self, workdir, series_file):
        assert run("adjust", "--input", str(series_file), "--out", "a.csv") == 0
        raw = parse_series_csv(series_file.read_bytes())
        adjusted = parse_series_csv((workdir / "a.csv").read_bytes())
        assert len(adjusted) == len(raw)
        assert adjusted.values.max() < raw.values.max()


class TestTrainPredict:
    def test_train_predict_plot(self, workdir, series_file):
        assert run("train", "--input", str(series_file), "--model", "gbt-b",
                   "--window", "6", "--adjust", "--out", "m.json") == 0
        assert run("predict", "--input", str(series_file), "--model-file", "m.json",
                   "--out", "p.csv") == 0
        lines = (workdir / "p.csv").read_text().strip().splitlines()
        assert lines[0] == "timestamp,predicted_gbps"
        assert len(lines) == 864 - 6 + 1
        assert run("plot-data", "--input", str(series_file), "--model-file", "m.json",
                   "--out", "plot.csv") == 0
        plot = (workdir / "plot.csv").read_text().strip().splitlines()
        assert plot[0] == "timestamp,actual_gbps,predicted_gbps"
        assert len(plot) == len(lines)

    def test_train_unknown_model_is_config_error(self, workdir, series_file):
        assert run("train", "--input", str(series_file), "--model", "nope",
                   "--out", "m.json") == 3


class TestGridCommand:
    def test_grid_runs_and_is_deterministic(self, workdir):
        args = ("grid", "--synth-days", "3", "--seed", "9", "--windows", "6",
                "--models", "gbt-b,sgd", "--train-days", "2", "--k-folds", "3")
        assert run(*args, "--out", "g1.csv") == 0
        assert run(*args, "--out", "g2.csv") == 0
        assert (workdir / "g1.csv").read_bytes() == (workdir / "g2.csv").read_bytes()
        lines = (workdir / "g1.csv").read_text().strip().splitlines()
        assert lines[0] == "model,window,arm,mape_percent"
        assert len(lines) == 1 + 2 * 1 * 2

    def test_grid_threads_env(self, workdir, monkeypatch):
        monkeypatch.setenv("ANOMFLOW_THREADS", "2")
        assert run("grid", "--synth-days", "3", "--seed", "9", "--windows", "6",
                   "--models", "sgd", "--train-days", "2", "--k-folds", "3",
                   "--out", "g.csv") == 0

    def test_grid_bad_threads_env(self, workdir, monkeypatch):
        monkeypatch.setenv("ANOMFLOW_THREADS", "zero")
        assert run("grid", "--synth-days", "3", "--windows", "6", "--models", "sgd",
                   "--train-days", "2", "--out", "g.csv") == 3

    def test_grid_json_format(self, workdir):
        assert run("grid", "--synth-days", "3", "--seed", "9", "--windows", "6",
                   "--models", "sgd", "--train-days", "2", "--k-folds", "3",
                   "--format", "json", "--out", "g.json") == 0
        payload = json.loads((workdir / "g.json").read_text())
        assert len(payload["cells"]) == 2
        assert payload["metadata"]["config_digest"]

    def test_grid_needs_input_or_synth(self, workdir):
        assert run("grid", "--out", "g.csv") == 3


class TestConfigFileAndErrors:
    def test_config_file_overridden_by_flags(self, workdir):
        (workdir / "run.cfg").write_text("[synth]\ndays = 2\nseed = 3\n")
        assert run("synth", "--config", "run.cfg", "--seed", "4", "--out", "t.json") == 0
        meta = json.loads((workdir / "t.json.meta.json").read_text())
        assert meta["effective_config"]["days"] == 2  # from file
        assert meta["effective_config"]["seed"] == 4  # flag wins

    def test_unknown_config_key_rejected(self, workdir):
        (workdir / "run.cfg").write_text("[synth]\nbananas = 7\n")
        assert run("synth", "--config", "run.cfg", "--out", "t.json") == 3

    def test_unknown_flag_exits_3(self, workdir):
        assert run("synth", "--does-not-exist") == 3

    def test_unknown_subcommand_exits_3(self, workdir):
        assert run("transmogrify") == 3

    def test_no_subcommand_exits_3(self, workdir):
        assert run() == 3

    def test_help_exits_zero(self, workdir, capsys):
        assert run("--help") == 0
        assert "synth" in capsys.readouterr().out

    def test_same_config_reproduces_byte_identical_outputs(self, workdir):
        run("synth", "--days", "2", "--seed", "12", "--out", "a.json")
        run("synth", "--days", "2", "--seed", "12", "--out", "b.json")
        assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()
        meta_a = json.loads((workdir / "a.json.meta.json").read_text())
        meta_b = json.loads((workdir / "b.json.meta.json").read_text())
        assert meta_a["config_digest"] != meta_b["config_digest"]  # different out paths

    def test_config_digest_stable_for_same_settings(self, workdir):
        run("synth", "--days", "2", "--seed", "12", "--out", "a.json")
        digest1 = json.loads((workdir / "a.json.meta.json").read_text())["config_digest"]
        run("synth", "--days", "2", "--seed", "12", "--out", "a.json")
        digest2 = json.loads((workdir / "a.json.meta.json").read_text())["config_digest"]
        assert digest1 == digest2
