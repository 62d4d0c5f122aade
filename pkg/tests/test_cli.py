# coding:utf-8
import io
import json

import pandas as pd
import pytest

from conftest import tiny_config
from app.services.data_service import synthetic_gaussian_raw, transform
from app.services.vcnet_model import predict_classes, read_model_file
from app.view.cli import cli_dispatch


@pytest.fixture
def configFile(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config("runs/tiny").to_dict()), encoding="utf-8")
    return path


@pytest.fixture
def trained(tmp_path, configFile, capsys):
    out = tmp_path / "run"
    assert cli_dispatch(["--config", str(configFile), "--out", str(out), "train"]) == 0
    capsys.readouterr()
    return out


def test_usage_errors(capsys):
    assert cli_dispatch(["frobnicate"]) == 2
    assert cli_dispatch([]) == 2
    assert cli_dispatch(["report", "a.json", "--format", "pdf"]) == 2
    assert cli_dispatch(["--version"]) == 0
    assert "0.3.0" in capsys.readouterr().out


def test_missing_model_is_a_one_line_error(tmp_path, capsys):
    code = cli_dispatch(["explain", "--model", str(tmp_path / "none.json"), "--input", str(tmp_path / "x.csv")])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("error: ") and "does not exist" in err[-1]


def test_invalid_config_is_reported(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"lr": -1}}), encoding="utf-8")
    assert cli_dispatch(["--config", str(path), "train"]) == 1
    assert "lr" in capsys.readouterr().err


def test_train_writes_artifacts(trained):
    for name in ("model.json", "counterfactuals.csv", "counterfactuals.json", "report.json", "training_log.csv"):
        assert (trained / name).is_file()
    frame = pd.read_csv(trained / "counterfactuals.csv")
    assert len(frame) == 15
    assert {"original.x0", "counterfactual.x7", "target_class", "valid", "label"} <= set(frame.columns)


def test_options_after_the_command(tmp_path, configFile, capsys):
    out = tmp_path / "late"
    assert cli_dispatch(["train", "--config", str(configFile), "--out", str(out), "--seed", "3"]) == 0
    assert "Dataset: synthetic" in capsys.readouterr().out
    assert json.loads((out / "report.json").read_text(encoding="utf-8"))["seed"] == 3


def test_explain_writes_csv_to_stdout(tmp_path, trained, capsys):
    rows = synthetic_gaussian_raw(5, seed=9).drop(columns=["class"])
    rows.to_csv(tmp_path / "rows.csv", index=False)

    assert cli_dispatch(["explain", "--model", str(trained / "model.json"), "--input", str(tmp_path / "rows.csv")]) == 0
    frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(frame) == 5
    assert "label" not in frame.columns
    assert set(frame["target_class"].astype(str)) <= {"0", "1", "2"}


def test_explain_with_target_and_output(tmp_path, trained):
    rows = synthetic_gaussian_raw(3, seed=2).drop(columns=["class"]).head(1)
    rows.to_csv(tmp_path / "rows.csv", index=False)
    model, schema = read_model_file(trained / "model.json")
    predicted = int(predict_classes(model, transform(rows, schema).examples)[0])
    target = (predicted + 1) % 3
    output = tmp_path / "explained.csv"

    assert cli_dispatch(["explain", "--model", str(trained / "model.json"), "--input", str(tmp_path / "rows.csv"),
                         "--target-class", str(target), "--output", str(output)]) == 0
    frame = pd.read_csv(output)
    assert frame["target_class"].tolist() == [target]
    assert output.with_suffix(".json").is_file()

    for rejected in (str(predicted), "7"):
        assert cli_dispatch(["explain", "--model", str(trained / "model.json"), "--input",
                             str(tmp_path / "rows.csv"), "--target-class", rejected]) == 1


def test_evaluate_reproduces_the_report(tmp_path, trained, capsys):
    again = tmp_path / "again"
    assert cli_dispatch(["evaluate", "--model", str(trained / "model.json"),
                         "--records", str(trained / "counterfactuals.json"), "--out", str(again)]) == 0
    assert (again / "report.json").read_bytes() == (trained / "report.json").read_bytes()
    assert "Validity" in capsys.readouterr().out


@pytest.mark.parametrize("fmt, marker", [("text", "Dataset: synthetic"), ("markdown", "| Metric |"),
                                         ("html", "<table>"), ("json", '"method": "vcnet"')])
def test_report_formats(trained, capsys, fmt, marker):
    assert cli_dispatch(["report", str(trained / "report.json"), "--format", fmt]) == 0
    assert marker in capsys.readouterr().out


def test_report_of_missing_file(tmp_path, capsys):
    assert cli_dispatch(["report", str(tmp_path / "nothing.json")]) == 1
    assert "error: " in capsys.readouterr().err


def test_synth_command(tmp_path, configFile, capsys):
    assert cli_dispatch(["--config", str(configFile), "--out", str(tmp_path / "synth"), "synth"]) == 0
    out = capsys.readouterr().out
    assert "validity:" in out and "synth_summary.json" in out and "checks: validity" in out
    assert (tmp_path / "synth" / "synth_curves.csv").is_file()


def test_suite_command(tmp_path, configFile, capsys):
    assert cli_dispatch(["--out", str(tmp_path / "suite"), "suite", str(configFile), "--workers", "1"]) == 0
    assert capsys.readouterr().out.startswith("ok")
    assert (tmp_path / "suite" / "tiny" / "synth_summary.json").is_file()
