"""Command-line behavior: outputs, exit codes and environment settings."""

import json

import pandas as pd
import pytest

from conftest import office_document
from src.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ("INDOOR_SIM_OUTPUT_DIR", "INDOOR_SIM_WORKERS", "INDOOR_SIM_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "office.json"
    path.write_text(json.dumps(office_document()), encoding="utf-8")
    return path


def test_run_writes_history_and_tables(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config_file), "--seed", "3", "--out", str(out), "--densify", "5"]) == EXIT_OK
    for name in ("history.json", "places.csv", "persons.csv", "places_metrics.csv", "persons_metrics.csv",
                 "departments_metrics.csv", "building_metrics.csv", "person_summary.csv", "densified.csv"):
        assert (out / name).exists(), name
    summary = pd.read_csv(out / "person_summary.csv")
    assert len(summary) == 6
    assert summary["infection_probability"].between(0.0, 1.0).all()
    printed = capsys.readouterr().out
    assert "manifest: python -m src.cli run" in printed
    assert "--seed 3" in printed


def test_run_is_reproducible(config_file, tmp_path):
    main(["run", "--config", str(config_file), "--seed", "9", "--out", str(tmp_path / "a")])
    main(["run", "--config", str(config_file), "--seed", "9", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "history.json").read_bytes() == (tmp_path / "b" / "history.json").read_bytes()


def test_output_dir_from_environment(config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("INDOOR_SIM_OUTPUT_DIR", str(tmp_path / "env-out"))
    assert main(["run", "--config", str(config_file)]) == EXIT_OK
    assert (tmp_path / "env-out" / "history.json").exists()


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_USAGE


def test_invalid_config(tmp_path):
    document = office_document()
    document["places"][0]["area"] = -1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_flags_are_usage_errors(config_file):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(config_file), "--densify", "0"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == EXIT_USAGE


def test_bad_environment(config_file, tmp_path, monkeypatch):
    monkeypatch.setenv("INDOOR_SIM_WORKERS", "many")
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path)]) == EXIT_USAGE
    monkeypatch.setenv("INDOOR_SIM_WORKERS", "1")
    monkeypatch.setenv("INDOOR_SIM_LOG_LEVEL", "LOUD")
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path)]) == EXIT_USAGE


def test_batch_and_compare(config_file, tmp_path, capsys):
    out = tmp_path / "batches"
    assert main(["batch", "--config", str(config_file), "--runs", "4", "--seed", "1",
                 "--name", "base", "--out", str(out)]) == EXIT_OK
    assert main(["batch", "--config", str(config_file), "--runs", "4", "--seed", "2",
                 "--name", "other", "--out", str(out)]) == EXIT_OK
    for name in ("result.json", "manifest.json", "places_metrics.csv", "building_metrics.csv"):
        assert (out / "base" / name).exists(), name
    log_lines = (out / "batch_history.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["experiment"] for line in log_lines] == ["base", "other"]

    report_dir = tmp_path / "report"
    assert main(["compare", "--baseline", str(out / "base" / "result.json"),
                 "--experiment", str(out / "other" / "result.json"), "--out", str(report_dir)]) == EXIT_OK
    assert (report_dir / "comparison.json").exists()
    assert (report_dir / "comparison.csv").exists()
    assert "other vs base" in capsys.readouterr().out


def test_compare_mismatched_experiments(config_file, tmp_path):
    document = office_document()
    document["places"][3]["name"] = "Kitchen"
    other = tmp_path / "kitchen.json"
    other.write_text(json.dumps(document), encoding="utf-8")
    out = tmp_path / "batches"
    main(["batch", "--config", str(config_file), "--runs", "3", "--name", "base", "--out", str(out)])
    main(["batch", "--config", str(other), "--runs", "3", "--name", "kitchen", "--out", str(out)])
    args = ["compare", "--baseline", str(out / "base" / "result.json"),
            "--experiment", str(out / "kitchen" / "result.json"), "--out", str(tmp_path / "report")]
    assert main(args) == EXIT_RUNTIME
    assert main(args + ["--allow-partial"]) == EXIT_OK


def test_validate(tmp_path):
    assert main(["validate", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "validation.csv").exists()
    assert (tmp_path / "validation.svg").exists()


def test_plot(config_file, tmp_path):
    run_dir = tmp_path / "run"
    main(["run", "--config", str(config_file), "--out", str(run_dir)])
    charts = tmp_path / "charts"
    assert main(["plot", "--input", str(run_dir), "--out", str(charts)]) == EXIT_OK
    assert (charts / "timelines.svg").exists()
    assert (charts / "activity.svg").exists()
    assert main(["plot", "--input", str(tmp_path / "missing")]) == EXIT_USAGE


def test_batch_prints_history_of_the_experiment(config_file, tmp_path, capsys):
    out = tmp_path / "batches"
    args = ["batch", "--config", str(config_file), "--runs", "3", "--seed", "5", "--name", "base", "--out", str(out)]
    assert main(args) == EXIT_OK
    assert main(args + ["--workers", "2"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "Batch history - base" in printed
    digests = {json.loads(line)["result_digest"]
               for line in (out / "batch_history.jsonl").read_text(encoding="utf-8").splitlines()}
    assert len(digests) == 1


def test_cv_command_writes_curves_and_chart(config_file, tmp_path, capsys):
    out = tmp_path / "cv"
    assert main(["cv", "--config", str(config_file), "--grid", "2,4", "--repetitions", "2",
                 "--seed", "3", "--name", "office", "--out", str(out)]) == EXIT_OK
    curves = pd.read_csv(out / "office" / "cv_convergence.csv")
    assert set(curves["s_run"]) == {2, 4}
    spread = pd.read_csv(out / "office" / "cv_spread.csv")
    assert len(spread) == 4 * 2
    assert (out / "office" / "cv_convergence.svg").exists()
    assert "manifest: python -m src.cli cv" in capsys.readouterr().out

    charts = tmp_path / "charts"
    assert main(["plot", "--input", str(out / "office"), "--out", str(charts)]) == EXIT_OK
    assert (charts / "cv_convergence.svg").exists()


def test_cv_rejects_bad_grid(config_file):
    for grid in ("4,2", "1,5", "ten"):
        with pytest.raises(SystemExit) as exc:
            main(["cv", "--config", str(config_file), "--grid", grid])
        assert exc.value.code == EXIT_USAGE
