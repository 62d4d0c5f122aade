# file: services/metrics_service.py
# coding:utf-8
"""
反事实质量指标：validity / proximity / prediction gain / proximity score，以及准确率和均值±标准差汇总
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..common.exception_handler import ContractViolation
from ..common.logger import Logger
from ..common.setting import PAIRWISE_SUBSAMPLE_LIMIT, REPORT_FORMAT_VERSION
from ..common.utils import seedStreams
from .counterfactual_service import CounterfactualRecord
from .vcnet_model import ModelParams, predict_proba, predicted_class

logger = Logger("metrics")

# 报告中的指标顺序
METRIC_ORDER = ("validity", "proximity", "prediction_gain", "proximity_score")
METRIC_TITLES = {
    "validity": "Validity",
    "proximity": "Proximity",
    "prediction_gain": "Prediction gain",
    "proximity_score": "Proximity score",
    "accuracy": "Accuracy",
}

INVALID_INCLUDED_NOTE = ("proximity, prediction gain and proximity score aggregate every generated "
                         "counterfactual, valid or not; validity is reported separately")


def _pair(x, x_prime) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ContractViolation(f"shape mismatch: {x.shape} vs {x_prime.shape}")
    return x, x_prime


def validity(y_i, y_0):
    """1 iff the counterfactual class differs from the original class (elementwise for arrays)"""
    result = (np.asarray(y_i) != np.asarray(y_0)).astype(np.int64)
    return int(result) if result.ndim == 0 else result


def proximity(x, x_prime):
    """L1 distance in encoded space; one value per row for batches"""
    x, x_prime = _pair(x, x_prime)
    values = np.abs(x_prime - x).sum(axis=-1)
    return float(values) if values.ndim == 0 else values


def prediction_gain(model: ModelParams, x, x_prime):
    """f(x')[y_i] - f(x)[y_i], y_i = argmax f(x')"""
    x, x_prime = _pair(x, x_prime)
    pCf = predict_proba(model, x_prime)
    pOrig = predict_proba(model, x)
    classes = predicted_class(pCf)
    gain = np.take_along_axis(pCf - pOrig, np.asarray(classes)[..., None], axis=-1)[..., 0]
    return float(gain) if gain.ndim == 0 else gain


def pairwise_mean_distance(H, rng: Optional[np.random.Generator] = None,
                           limit: int = PAIRWISE_SUBSAMPLE_LIMIT) -> float:
    """
    H 内所有点对的平均欧氏距离；|H| 超过 limit 且给了 rng 时，用种子固定的子样本估计
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if H.shape[0] < 2:
        raise ContractViolation(f"need at least two rows for a pairwise mean, got {H.shape[0]}")
    if rng is not None and H.shape[0] > limit:
        H = H[np.sort(rng.choice(H.shape[0], size=limit, replace=False))]
    return float(pdist(H, "euclidean").mean())


def proximity_score(x_prime, H, denominator: Optional[float] = None) -> float:
    """
    distance from x' to its nearest row of H, over the mean pairwise distance within H
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    x_prime = np.asarray(x_prime, dtype=np.float64).reshape(1, -1)
    if H.shape[1] != x_prime.shape[1]:
        raise ContractViolation(f"row width {x_prime.shape[1]} != reference width {H.shape[1]}")
    if denominator is None:
        denominator = pairwise_mean_distance(H)
    if not denominator > 0:
        raise ContractViolation("reference rows are all identical, score undefined")
    return float(cdist(x_prime, H, "euclidean").min() / denominator)


def accuracy(model: ModelParams, X, y) -> float:
    """fraction of rows with argmax f(x) = y"""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).reshape(-1)
    if X.shape[0] == 0:
        raise ContractViolation("accuracy of an empty test set")
    return float(np.mean(predicted_class(predict_proba(model, X)) == y))


def aggregate(values) -> Tuple[float, float]:
    """(mean, population std)"""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ContractViolation("cannot aggregate an empty sample")
    return float(values.mean()), float(values.std())


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values) -> "MetricSummary":
        mean, std = aggregate(values)
        return cls(mean, std, int(np.size(values)))

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean, "std": self.std, "n": self.n}


@dataclass
class MetricsReport:
    """ mean ± std per metric over the evaluation sample, plus accuracy """

    dataset: str
    method: str
    sample_size: int
    metrics: Dict[str, MetricSummary]
    accuracy: Optional[float]
    seed: int = 0
    excluded_proximity_score: int = 0
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.sample_size < 1:
            raise ContractViolation("a metrics report needs at least one evaluated example")

    def value(self, name: str) -> float:
        if name == "accuracy":
            return self.accuracy
        return self.metrics[name].mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "dataset": self.dataset,
            "method": self.method,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "metrics": {k: self.metrics[k].to_dict() for k in METRIC_ORDER if k in self.metrics},
            "accuracy": self.accuracy,
            "excluded_proximity_score": self.excluded_proximity_score,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        try:
            metrics = {k: MetricSummary(float(v["mean"]), float(v["std"]), int(v["n"]))
                       for k, v in data["metrics"].items()}
            return cls(str(data["dataset"]), str(data["method"]), int(data["sample_size"]), metrics,
                       None if data.get("accuracy") is None else float(data["accuracy"]),
                       int(data.get("seed", 0)), int(data.get("excluded_proximity_score", 0)),
                       list(data.get("notes", [])))
        except (KeyError, TypeError, ValueError) as e:
            raise ContractViolation(f"malformed metrics report: {e}") from e


def evaluate_counterfactuals(model: ModelParams, records: Sequence[CounterfactualRecord], dataset: str,
                             method: str, seed: int = 0) -> MetricsReport:
    """
    由反事实记录计算全部指标

    评估集即记录中的原样本：H 按模型预测类别划分，只含评估样本、不含生成的反事实；
    准确率在记录带有真实标签时计算
    """
    if not records:
        raise ContractViolation("no counterfactual records to evaluate")

    originals = np.stack([r.original for r in records])
    counterfactuals = np.stack([r.counterfactual for r in records])
    y0 = np.array([r.original_class for r in records])
    yi = np.array([r.counterfactual_class for r in records])

    values = {
        "validity": validity(yi, y0),
        "proximity": proximity(originals, counterfactuals),
        "prediction_gain": prediction_gain(model, originals, counterfactuals),
    }

    rng = seedStreams(seed)["subsample"]
    evalClasses = predicted_class(predict_proba(model, originals))
    scores, excluded = [], 0
    for c in sorted(set(int(v) for v in yi)):
        H = originals[evalClasses == c]
        members = np.flatnonzero(yi == c)
        try:
            denominator = pairwise_mean_distance(H, rng)
            scores.extend(proximity_score(counterfactuals[i], H, denominator) for i in members)
        except ContractViolation as e:
            excluded += len(members)
            logger.warning(f"proximity score undefined for {len(members)} counterfactual(s) of class {c}: {e}")
    if scores:
        values["proximity_score"] = np.array(scores)

    labels = [r.label for r in records]
    acc = None
    if all(label is not None for label in labels):
        acc = float(np.mean(evalClasses == np.array(labels)))

    report = MetricsReport(
        dataset=dataset,
        method=method,
        sample_size=len(records),
        metrics={k: MetricSummary.of(v) for k, v in values.items()},
        accuracy=acc,
        seed=seed,
        excluded_proximity_score=excluded,
        notes=[INVALID_INCLUDED_NOTE],
    )
    logger.event("evaluated", method=method, dataset=dataset, n=len(records), validity=report.value("validity"),
                 excluded=excluded)
    return report


# published comparison table: (mean, std) per metric, std None where only a mean is given
PUBLISHED_REFERENCE: Dict[str, Dict[str, Dict[str, Tuple[float, Optional[float]]]]] = {
    "adult": {
        "vcnet": {"validity": (1.0, None), "proximity": (7.71, 2.11), "prediction_gain": (0.76, 0.15),
                  "proximity_score": (0.04, 0.11), "accuracy": (0.83, None)},
        "counternet": {"validity": (0.99, None), "proximity": (7.16, 2.13), "prediction_gain": (0.61, 0.17),
                       "proximity_score": (0.31, 0.28), "accuracy": (0.83, None)},
        "posthoc": {"validity": (0.84, None), "proximity": (7.28, 2.23), "prediction_gain": (0.47, 0.35),
                    "proximity_score": (0.06, 0.14), "accuracy": (0.83, None)},
    },
    "oulad": {
        "vcnet": {"validity": (1.0, None), "proximity": (11.66, 2.46), "prediction_gain": (0.93, 0.12),
                  "proximity_score": (0.38, 0.18), "accuracy": (0.93, None)},
        "counternet": {"validity": (0.99, None), "proximity": (11.96, 2.40), "prediction_gain": (0.74, 0.13),
                       "proximity_score": (0.46, 0.16), "accuracy": (0.93, None)},
        "posthoc": {"validity": (0.74, None), "proximity": (11.22, 2.54), "prediction_gain": (0.66, 0.44),
                    "proximity_score": (0.38, 0.18), "accuracy": (0.93, None)},
    },
    "heloc": {
        "vcnet": {"validity": (1.0, None), "proximity": (5.60, 2.11), "prediction_gain": (0.64, 0.13),
                  "proximity_score": (0.23, 0.21), "accuracy": (0.71, None)},
        "counternet": {"validity": (0.99, None), "proximity": (4.41, 1.80), "prediction_gain": (0.56, 0.15),
                       "proximity_score": (0.49, 0.35), "accuracy": (0.72, None)},
        "posthoc": {"validity": (0.77, None), "proximity": (5.09, 1.71), "prediction_gain": (0.24, 0.25),
                    "proximity_score": (0.40, 0.32), "accuracy": (0.71, None)},
    },
    "student": {
        "vcnet": {"validity": (0.96, None), "proximity": (19.90, 3.21), "prediction_gain": (0.86, 0.27),
                  "proximity_score": (0.70, 0.08), "accuracy": (0.90, None)},
        "counternet": {"validity": (1.0, None), "proximity": (19.86, 2.78), "prediction_gain": (0.76, 0.05),
                       "proximity_score": (0.73, 0.06), "accuracy": (0.92, None)},
        "posthoc": {"validity": (0.46, None), "proximity": (19.68, 3.03), "prediction_gain": (0.41, 0.46),
                    "proximity_score": (0.75, 0.08), "accuracy": (0.90, None)},
    },
    "titanic": {
        "vcnet": {"validity": (0.92, None), "proximity": (15.43, 3.79), "prediction_gain": (0.69, 0.31),
                  "proximity_score": (0.71, 0.21), "accuracy": (0.82, None)},
        "counternet": {"validity": (0.99, None), "proximity": (15.15, 4.05), "prediction_gain": (0.66, 0.15),
                       "proximity_score": (0.80, 0.16), "accuracy": (0.83, None)},
        "posthoc": {"validity": (0.38, None), "proximity": (15.56, 5.23), "prediction_gain": (0.26, 0.36),
                    "proximity_score": (1.21, 0.26), "accuracy": (0.82, None)},
    },
    "breast_cancer": {
        "vcnet": {"validity": (1.0, None), "proximity": (5.27, 1.47), "prediction_gain": (0.95, 0.11),
                  "proximity_score": (0.28, 0.03), "accuracy": (0.96, None)},
        "counternet": {"validity": (1.0, None), "proximity": (1.51, 1.01), "prediction_gain": (0.69, 0.15),
                       "proximity_score": (0.72, 0.48), "accuracy": (0.96, None)},
        "posthoc": {"validity": (0.59, None), "proximity": (7.71, 1.67), "prediction_gain": (0.60, 0.45),
                    "proximity_score": (0.94, 0.07), "accuracy": (0.96, None)},
    },
}


def reference_for(dataset: str) -> Optional[Dict[str, Dict[str, Tuple[float, Optional[float]]]]]:
    return PUBLISHED_REFERENCE.get(dataset)
