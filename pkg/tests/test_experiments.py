# coding:utf-8
import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import tiny_config, warnings_of
from app.common.config import ArchConfig, PerturbationSpec
from app.common.exception_handler import ConfigError, DataError, StudyCheckFailed
from app.services import experiment_service
from app.services.counterfactual_service import generate_batch, read_records_file
from app.services.experiment_service import (load_experiment_data, run_benchmark, run_posthoc_benchmark,
                                             run_suite, run_synth_study, sphere_offsets)
from app.services.vcnet_model import flatten, load_model, predict_classes

BENCHMARK_FILES = ("model.json", "counterfactuals.csv", "counterfactuals.json", "report.json", "training_log.csv")


def test_data_split_is_seeded(tmp_path):
    a = load_experiment_data(tiny_config(tmp_path))
    b = load_experiment_data(tiny_config(tmp_path))
    assert (a.train.n, a.test.n) == (45, 15)
    np.testing.assert_array_equal(a.test.examples, b.test.examples)
    assert a.schema.hash() == a.test.schema.hash()

    other = load_experiment_data(tiny_config(tmp_path, seed=1))
    assert not np.array_equal(a.test.examples, other.test.examples)


def test_empty_evaluation_split(tmp_path):
    with pytest.raises(DataError):
        load_experiment_data(tiny_config(tmp_path, n=3, eval_fraction=0.1))


def test_benchmark_writes_every_artifact(tmp_path):
    result = run_benchmark(tiny_config(tmp_path / "run"))
    assert sorted(p.name for p in result.files) == sorted(BENCHMARK_FILES)
    assert all(p.is_file() for p in result.files)
    assert not list((tmp_path / "run").glob("*.part"))

    assert result.report.sample_size == 15 == len(result.records)
    assert result.report.method == "vcnet" and result.report.dataset == "synthetic"
    assert len(result.log.records) == 2

    records, meta = read_records_file(tmp_path / "run" / "counterfactuals.json")
    assert (meta["dataset"], meta["method"], meta["seed"]) == ("synthetic", "vcnet", 0)
    np.testing.assert_array_equal(records[3].counterfactual, result.records[3].counterfactual)
    np.testing.assert_array_equal(flatten(load_model(tmp_path / "run" / "model.json")), flatten(result.model))


def test_benchmark_is_deterministic(tmp_path):
    run_benchmark(tiny_config(tmp_path / "a"))
    run_benchmark(tiny_config(tmp_path / "b"))
    for name in ("report.json", "model.json", "counterfactuals.json", "training_log.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def _diskFull(path, obj, indent=2):
    raise OSError("disk full")


def test_failed_run_removes_its_outputs(tmp_path, monkeypatch, logRecords):
    monkeypatch.setattr(experiment_service, "writeJson", _diskFull)
    with pytest.raises(OSError):
        run_benchmark(tiny_config(tmp_path / "run"))

    assert not (tmp_path / "run").exists()
    assert any("removed partial outputs" in r.getMessage() for r in logRecords)


def test_failed_run_keeps_existing_folder(tmp_path, monkeypatch):
    out = tmp_path / "run"
    out.mkdir()
    (out / "notes.txt").write_text("keep me", encoding="utf-8")

    monkeypatch.setattr(experiment_service, "writeJson", _diskFull)
    with pytest.raises(OSError):
        run_benchmark(tiny_config(out))
    assert sorted(p.name for p in out.iterdir()) == ["notes.txt"]


def test_posthoc_comparison(tmp_path):
    result = run_posthoc_benchmark(tiny_config(tmp_path))
    names = {p.name for p in result.files}
    assert {"report.json", "posthoc_report.json", "posthoc_model.json", "paired_report.json"} <= names

    assert result.joint.report.sample_size == result.posthoc.report.sample_size
    assert result.posthoc.model.isPosthoc and not result.joint.model.isPosthoc

    data = load_experiment_data(tiny_config(tmp_path))
    np.testing.assert_array_equal(predict_classes(result.stage1, data.test.examples),
                                  predict_classes(result.posthoc.model, data.test.examples))

    paired = json.loads((tmp_path / "paired_report.json").read_text(encoding="utf-8"))
    assert paired["joint"]["method"] == "vcnet" and paired["posthoc"]["method"] == "posthoc"
    assert len(paired["eval_rows_sha256"]) == 64


def test_sphere_offsets(rng):
    offsets = sphere_offsets(rng, 50, 4, 3.0)
    np.testing.assert_allclose(np.linalg.norm(offsets, axis=1), 3.0, rtol=1e-12)
    assert not sphere_offsets(rng, 5, 4, 0.0).any()


def test_synthetic_study(tmp_path):
    config = tiny_config(tmp_path)
    result = run_synth_study(config)
    assert {p.name for p in result.files} >= {"synth_curves.csv", "synth_points.csv", "synth_summary.json"}

    summary = result.summary
    assert summary["norms"] == [0.0, 1.0, 3.0] and summary["repeats"] == 2
    assert 0.0 <= summary["validity"] <= 1.0
    assert all(p["origin"] != p["target"] for p in summary["pairs"])
    assert len(summary["pairs"]) == 6

    # without an offset the curve is the distance of the ordinary counterfactual
    data = load_experiment_data(config)
    X, labels = data.test.examples, data.test.labels
    predicted = predict_classes(result.model, X)
    atZero = result.curves[result.curves["norm"] == 0.0]
    assert len(atZero) == sum(1 for p in summary["pairs"] if p["n"])
    for _, row in atZero.iterrows():
        origin, target = int(row["origin_class"]), int(row["target_class"])
        members = (labels == origin) & (predicted != target)
        generated = np.stack([r.counterfactual for r in generate_batch(result.model, X[members], target)])
        expected = np.linalg.norm(generated - X[members], axis=1).mean()
        assert row["mean_distance"] == pytest.approx(expected, rel=1e-12)
        assert row["mean_variance"] == 0.0
        assert row["n_examples"] == members.sum()


def test_synthetic_study_with_explicit_offsets(tmp_path):
    spec = PerturbationSpec((0.0, 2.0), 3, 5)
    result = run_synth_study(tiny_config(tmp_path), spec)
    assert sorted(result.curves["norm"].unique()) == [0.0, 2.0]
    assert result.summary["perturbation_seed"] == 5

    with pytest.raises(ConfigError):
        run_synth_study(tiny_config(tmp_path, dataset="breast_cancer"))


def test_suite_runs_independent_experiments(tmp_path, logRecords):
    good = tiny_config(tmp_path / "good")
    # consistent widths, but a binary condition for a three-class dataset
    bad = tiny_config(tmp_path / "bad", arch=ArchConfig((8, 6), (7, 4), (5, 8), (6, 1), 4))
    results = run_suite([good, bad], maxWorkers=2)

    assert list(results) == [good.out_dir, bad.out_dir]
    assert results[good.out_dir]["repeats"] == 2
    assert results[bad.out_dir] is None
    assert any(r.levelname == "ERROR" and "1 experiment(s) failed" in r.getMessage() for r in logRecords)


def test_suite_matches_sequential_runs(tmp_path):
    configs = [tiny_config(tmp_path / f"s{seed}", seed=seed) for seed in range(3)]
    suite = run_suite(configs, maxWorkers=3)
    for config in configs:
        alone = run_synth_study(replace(config, out_dir=config.out_dir + "-alone")).summary
        assert suite[config.out_dir] == alone


def test_suite_needs_distinct_outputs(tmp_path):
    config = tiny_config(tmp_path / "same")
    with pytest.raises(ConfigError):
        run_suite([config, config])


def test_synthetic_study_reports_its_checks(tmp_path, logRecords):
    summary = run_synth_study(tiny_config(tmp_path)).summary
    checks = summary["checks"]
    assert set(checks) == {"validity", "nearest_class", "increasing_trend"}
    assert checks["validity"] == (summary["validity"] >= 0.95)
    assert checks["increasing_trend"] == (summary["increasing_pairs"] >= 2)

    failed = [name for name, passed in checks.items() if not passed]
    warned = [m for m in warnings_of(logRecords) if m.startswith("synth-check-failed")]
    assert len(warned) == len(failed)
    assert all(any(f"check={name}" in m for m in warned) for name in failed)


def test_strict_synthetic_study_raises_after_writing_outputs(tmp_path, monkeypatch):
    # no validity can reach this threshold
    monkeypatch.setattr(experiment_service, "SYNTH_MIN_VALIDITY", 1.5)
    with pytest.raises(StudyCheckFailed) as error:
        run_synth_study(tiny_config(tmp_path / "strict"), strict=True)
    assert "validity" in error.value.failed
    assert (tmp_path / "strict" / "synth_summary.json").is_file()

    summary = run_synth_study(tiny_config(tmp_path / "lenient")).summary
    assert summary["checks"]["validity"] is False
