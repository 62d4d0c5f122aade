# file: services/experiment_service.py
# coding:utf-8
"""
实验编排：基准评测 (联合训练)、post-hoc 对比、合成数据解耦实验，以及并发运行多个实验
"""
import hashlib
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..common.concurrent import Future, TaskExecutor
from ..common.config import ExperimentConfig, PerturbationSpec
from ..common.exception_handler import ConfigError, DataError, StudyCheckFailed, exceptionHandler
from ..common.logger import Logger
from ..common.setting import SYNTH_MIN_INCREASING_PAIRS, SYNTH_MIN_VALIDITY
from ..common.utils import seedStreams, writeJson, writeTextAtomic
from .counterfactual_service import (CounterfactualRecord, generate_batch, perturbed_generate_batch,
                                     records_validity, write_records_csv, write_records_json)
from .data_service import (SYNTHETIC_MEANS, FeatureSchema, PreprocessedDataset, fit_transform, inverse_transform,
                           load_breast_cancer, load_csv, load_schema_declaration, split_table,
                           synthetic_declaration, synthetic_gaussian_raw, transform, validate_encoded_rows)
from .metrics_service import MetricsReport, evaluate_counterfactuals
from .vcnet_model import ModelParams, TrainingLog, predict_classes, save_model, train_joint, train_posthoc

logger = Logger("experiment")


@dataclass
class ExperimentData:
    train: PreprocessedDataset
    test: PreprocessedDataset
    schema: FeatureSchema


@dataclass
class BenchmarkResult:
    report: MetricsReport
    model: ModelParams
    records: List[CounterfactualRecord]
    log: TrainingLog
    files: List[Path] = field(default_factory=list)


@dataclass
class PosthocResult:
    joint: BenchmarkResult
    posthoc: BenchmarkResult
    stage1: ModelParams
    files: List[Path] = field(default_factory=list)

    def paired(self) -> Dict[str, Any]:
        return {"joint": self.joint.report.to_dict(), "posthoc": self.posthoc.report.to_dict()}


@dataclass
class SynthStudyResult:
    model: ModelParams
    curves: pd.DataFrame
    points: pd.DataFrame
    summary: Dict[str, Any]
    files: List[Path] = field(default_factory=list)


# ----------------------------------------------------------------- helpers

class ArtifactWriter:
    """ records every file written into the output folder so a failed run can remove them """

    def __init__(self, outDir):
        self.outDir = Path(outDir)
        self.written: List[Path] = []
        self._createdDir = not self.outDir.exists()

    def path(self, name: str) -> Path:
        path = self.outDir / name
        self.written.append(path)
        return path

    def rollback(self):
        for path in self.written:
            for candidate in (path, path.with_name(path.name + ".part")):
                if candidate.exists():
                    candidate.unlink()
        if self._createdDir and self.outDir.is_dir() and not any(self.outDir.iterdir()):
            self.outDir.rmdir()
        logger.warning(f"removed partial outputs in {self.outDir}")


@contextmanager
def artifacts(outDir):
    writer = ArtifactWriter(outDir)
    writer.outDir.mkdir(parents=True, exist_ok=True)
    try:
        yield writer
    except BaseException:
        writer.rollback()
        raise


def _rawTable(config: ExperimentConfig) -> Tuple[pd.DataFrame, FeatureSchema]:
    if config.dataset == "breast_cancer":
        return load_breast_cancer()
    if config.dataset == "synthetic":
        return synthetic_gaussian_raw(config.synth.n, config.seed), synthetic_declaration()

    declaration = load_schema_declaration(config.schema_path)
    return load_csv(config.csv_path, declaration), declaration


def load_experiment_data(config: ExperimentConfig) -> ExperimentData:
    """
    读取数据并按种子切分；缩放只在训练部分上拟合
    """
    config.validate()
    table, declaration = _rawTable(config)
    trainTable, testTable = split_table(table, config.eval_fraction, config.seed)
    if len(testTable) == 0:
        raise DataError(f"evaluation split of '{config.dataset}' is empty ({len(table)} rows)")

    train = fit_transform(trainTable, declaration, name=f"{config.dataset}/train")
    test = transform(testTable, train.schema, name=f"{config.dataset}/test")
    config.arch.checkWidths(p=train.p, n_classes=train.schema.n_classes)
    return ExperimentData(train, test, train.schema)


def _writeLog(log: TrainingLog, path: Path):
    writeTextAtomic(path, log.to_frame().to_csv(index=False, float_format="%.17g"))


def _evaluate(model: ModelParams, data: ExperimentData, config: ExperimentConfig, method: str):
    records = generate_batch(model, data.test.examples, labels=data.test.labels)
    validate_encoded_rows(np.stack([r.counterfactual for r in records]), data.schema)
    return records, evaluate_counterfactuals(model, records, config.dataset, method, config.seed)


def _emit(writer: ArtifactWriter, prefix: str, model: ModelParams, records, report: MetricsReport,
          log: TrainingLog, data: ExperimentData, method: str):
    save_model(model, writer.path(f"{prefix}model.json"), data.schema)
    write_records_csv(records, data.schema, writer.path(f"{prefix}counterfactuals.csv"))
    write_records_json(records, writer.path(f"{prefix}counterfactuals.json"), data.schema,
                       dataset=report.dataset, method=method, seed=report.seed)
    writeJson(writer.path(f"{prefix}report.json"), report.to_dict())
    _writeLog(log, writer.path(f"{prefix}training_log.csv"))


def _joint(config: ExperimentConfig, data: ExperimentData, writer: ArtifactWriter, progress: bool) -> BenchmarkResult:
    model, log = train_joint(data.train, config.arch, config.trainingConfig(), progress=progress)
    records, report = _evaluate(model, data, config, "vcnet")
    _emit(writer, "", model, records, report, log, data, "vcnet")
    return BenchmarkResult(report, model, records, log, list(writer.written))


# ---------------------------------------------------------- experiments

def run_benchmark(config: ExperimentConfig, progress: bool = False) -> BenchmarkResult:
    """
    切分 -> 联合训练 -> 为每个评估样本生成反事实 -> 指标报告

    输出 model.json, counterfactuals.csv/.json, report.json, training_log.csv；失败时删除已写出的文件
    """
    logger.event("benchmark", dataset=config.dataset, seed=config.seed, out=config.out_dir)
    data = load_experiment_data(config)
    with artifacts(config.out_dir) as writer:
        return _joint(config, data, writer, progress)


def _rowsDigest(dataset: PreprocessedDataset) -> str:
    return hashlib.sha256(np.ascontiguousarray(dataset.examples).tobytes()).hexdigest()


def run_posthoc_benchmark(config: ExperimentConfig, progress: bool = False) -> PosthocResult:
    """
    在同一切分和种子上训练联合版本与 post-hoc 版本，输出成对报告
    """
    logger.event("posthoc-benchmark", dataset=config.dataset, seed=config.seed, out=config.out_dir)
    data = load_experiment_data(config)
    with artifacts(config.out_dir) as writer:
        joint = _joint(config, data, writer, progress)

        stage1, model, log = train_posthoc(data.train, config.arch, config.posthoc, config.seed, progress=progress)
        records, report = _evaluate(model, data, config, "posthoc")
        _emit(writer, "posthoc_", model, records, report, log, data, "posthoc")
        posthoc = BenchmarkResult(report, model, records, log)

        if joint.report.sample_size != posthoc.report.sample_size:
            raise DataError("joint and post-hoc runs were evaluated on different samples")

        result = PosthocResult(joint, posthoc, stage1)
        writeJson(writer.path("paired_report.json"), {
            **result.paired(),
            "train_rows_sha256": _rowsDigest(data.train),
            "eval_rows_sha256": _rowsDigest(data.test),
        })
        result.files = list(writer.written)
        return result


def sphere_offsets(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """n 个均匀分布在半径为 radius 的球面上的偏移"""
    if radius == 0:
        return np.zeros((n, dim))
    directions = rng.standard_normal((n, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    return radius * directions / np.maximum(norms, np.finfo(float).tiny)


def _synthCurves(model: ModelParams, X: np.ndarray, target: int, spec: PerturbationSpec,
                 rng: np.random.Generator) -> List[Dict[str, float]]:
    rows = []
    for norm in spec.norms:
        if norm == 0:
            generated = perturbed_generate_batch(model, X, np.zeros((len(X), model.latent_dim)), target)
            distances = np.linalg.norm(generated - X, axis=1)[:, None]
        else:
            distances = np.stack([
                np.linalg.norm(perturbed_generate_batch(
                    model, X, sphere_offsets(rng, len(X), model.latent_dim, norm), target) - X, axis=1)
                for _ in range(spec.repeats)
            ], axis=1)
        rows.append({
            "norm": float(norm),
            "mean_distance": float(distances.mean(axis=1).mean()),
            "mean_variance": float(distances.var(axis=1).mean()),
            "n_examples": len(X),
        })
    return rows


def run_synth_study(config: ExperimentConfig, spec: Optional[PerturbationSpec] = None,
                    progress: bool = False, strict: bool = False) -> SynthStudyResult:
    """
    合成 3 类高斯数据上的解耦实验

    对每个真实类别 c 的测试样本和每个其他类别 c'：
    (a) 以 c' 为条件生成的点 (前两维，原始单位)；
    (b) 每个扰动范数下 d(x, perturbed_generate(x, delta)) 的均值与方差 (每个样本 repeats 次)

    summary["checks"] 记录有效性、条件类别最近均值与距离随范数上升三项检查；
    strict 时任一检查失败 (产物已写出) 抛出 StudyCheckFailed
    """
    if config.dataset != "synthetic":
        raise ConfigError(f"the synthetic study needs dataset 'synthetic', got '{config.dataset}'")
    spec = (spec or config.synth.perturbation(config.seed)).validate()
    logger.event("synth-study", n=config.synth.n, seed=config.seed, out=config.out_dir)

    data = load_experiment_data(config)
    rng = seedStreams(spec.seed)["perturb"]
    with artifacts(config.out_dir) as writer:
        model, log = train_joint(data.train, config.arch, config.trainingConfig(), progress=progress)
        save_model(model, writer.path("model.json"), data.schema)
        _writeLog(log, writer.path("training_log.csv"))

        X, labels = data.test.examples, data.test.labels
        predicted = predict_classes(model, X)
        classes = range(data.schema.n_classes)
        defaultRecords = generate_batch(model, X, labels=labels)

        points, curves, pairs = [], [], []
        for c in classes:
            for target in classes:
                if target == c:
                    continue
                # rows already predicted as the target cannot be explained toward it
                members = np.flatnonzero((labels == c) & (predicted != target))
                skipped = int(np.sum((labels == c) & (predicted == target)))
                if len(members) == 0:
                    pairs.append({"origin": c, "target": target, "n": 0, "skipped": skipped})
                    continue

                records = generate_batch(model, X[members], target, labels[members])
                generated = np.stack([r.counterfactual for r in records])
                raw = inverse_transform(generated, data.schema)
                orig = inverse_transform(X[members], data.schema)
                for i, record in enumerate(records):
                    points.append({
                        "origin_class": c, "target_class": target, "example": int(members[i]),
                        "x0": float(orig.iloc[i, 0]), "x1": float(orig.iloc[i, 1]),
                        "cf_x0": float(raw.iloc[i, 0]), "cf_x1": float(raw.iloc[i, 1]),
                        "counterfactual_class": record.counterfactual_class,
                    })
                for row in _synthCurves(model, X[members], target, spec, rng):
                    curves.append({"origin_class": c, "target_class": target, **row})
                pairs.append({
                    "origin": c, "target": target, "n": len(members), "skipped": skipped,
                    "targeted_validity": float(np.mean([r.reached_target for r in records])),
                    "generated_mean": raw.mean(axis=0).tolist(),
                })
                logger.event("synth-pair", origin=c, target=target, n=len(members), skipped=skipped)

        curvesFrame = pd.DataFrame(curves, columns=["origin_class", "target_class", "norm", "mean_distance",
                                                    "mean_variance", "n_examples"])
        pointsFrame = pd.DataFrame(points, columns=["origin_class", "target_class", "example", "x0", "x1",
                                                    "cf_x0", "cf_x1", "counterfactual_class"])
        summary = _synthSummary(model, defaultRecords, pointsFrame, curvesFrame, pairs, spec, data)

        writeTextAtomic(writer.path("synth_curves.csv"), curvesFrame.to_csv(index=False, float_format="%.17g"))
        writeTextAtomic(writer.path("synth_points.csv"), pointsFrame.to_csv(index=False, float_format="%.17g"))
        writeJson(writer.path("synth_summary.json"), summary)
        result = SynthStudyResult(model, curvesFrame, pointsFrame, summary, list(writer.written))

    failed = [name for name, passed in summary["checks"].items() if not passed]
    for name in failed:
        logger.event("synth-check-failed", logging.WARNING, check=name)
    if failed and strict:
        raise StudyCheckFailed(failed)
    return result


def _synthSummary(model: ModelParams, defaultRecords, points: pd.DataFrame, curves: pd.DataFrame,
                  pairs: List[Dict[str, Any]], spec: PerturbationSpec, data: ExperimentData) -> Dict[str, Any]:
    targeted = [p for p in pairs if p["n"]]
    nTargeted = sum(p["n"] for p in targeted)

    # per conditioning class: mean generated point (first two dims) and its nearest configured class mean
    conditioning = {}
    means2d = SYNTHETIC_MEANS[:, :2]
    for target, group in points.groupby("target_class"):
        center = group[["cf_x0", "cf_x1"]].to_numpy().mean(axis=0)
        nearest = int(np.argmin(np.linalg.norm(means2d - center, axis=1)))
        conditioning[str(int(target))] = {
            "generated_mean": center.tolist(),
            "configured_mean": means2d[int(target)].tolist(),
            "nearest_configured_class": nearest,
        }

    increasing = 0
    top, bottom = max(spec.norms), min(spec.norms)
    for _, group in curves.groupby(["origin_class", "target_class"]):
        atTop = group.loc[group["norm"] == top, "mean_distance"].iloc[0]
        atZero = group.loc[group["norm"] == bottom, "mean_distance"].iloc[0]
        increasing += int(atTop > atZero)

    validity = records_validity(defaultRecords)
    checks = {
        "validity": validity >= SYNTH_MIN_VALIDITY,
        "nearest_class": bool(conditioning) and all(
            v["nearest_configured_class"] == int(k) for k, v in conditioning.items()),
        "increasing_trend": increasing >= SYNTH_MIN_INCREASING_PAIRS,
    }
    return {
        "n_train": data.train.n,
        "n_eval": data.test.n,
        "validity": validity,
        "checks": checks,
        "targeted_validity": (sum(p["targeted_validity"] * p["n"] for p in targeted) / nTargeted
                              if nTargeted else None),
        "pairs": pairs,
        "conditioning_classes": conditioning,
        "increasing_pairs": increasing,
        "norms": list(spec.norms),
        "repeats": spec.repeats,
        "perturbation_seed": spec.seed,
    }


# ------------------------------------------------------------------ suite

def _runOne(config: ExperimentConfig, posthoc: bool):
    if config.dataset == "synthetic" and not posthoc:
        return run_synth_study(config).summary
    if posthoc:
        return run_posthoc_benchmark(config).paired()
    return run_benchmark(config).report.to_dict()


def run_suite(configs: Sequence[ExperimentConfig], posthoc: bool = False,
              maxWorkers: Optional[int] = None) -> Dict[str, Optional[Dict[str, Any]]]:
    """
    并发运行相互独立的实验 (每个实验自身单线程、结果确定)

    某个实验失败不影响其他实验，其结果记为 None，详细信息见 experiment.log
    """
    outDirs = [str(Path(c.out_dir).resolve()) for c in configs]
    if len(set(outDirs)) != len(outDirs):
        raise ConfigError("experiments of one suite need distinct output directories")
    for config in configs:
        config.validate()

    guarded = exceptionHandler("experiment", None)(_runOne)
    with TaskExecutor(maxWorkers) as executor:
        futures: List[Future] = [
            executor.asyncRun(guarded, config, posthoc, name=config.out_dir) for config in configs
        ]
        results = Future.gather(futures)

    failed = [c.out_dir for c, r in zip(configs, results) if r is None]
    if failed:
        logger.error(f"{len(failed)} experiment(s) failed: {', '.join(failed)}")
    return {c.out_dir: r for c, r in zip(configs, results)}
