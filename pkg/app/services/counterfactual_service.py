# file: services/counterfactual_service.py
# coding:utf-8
"""
反事实生成服务：构造目标概率向量，解码并后处理为合法的编码行；CSV / JSON 导出
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..common.exception_handler import ContractViolation, DataError
from ..common.logger import Logger
from ..common.setting import REPORT_FORMAT_VERSION, SPAN_SUM_TOL
from ..common.utils import writeJson, writeTextAtomic
from ..components.activations import Span, check_spans
from .data_service import FeatureSchema, encoded_feature_names, inverse_transform
from .vcnet_model import (ModelParams, as_condition, decode, encode, forward_cvae_shared, forward_shared,
                          predict, predict_proba, predicted_class)

logger = Logger("counterfactual")

# 交换后仍与预测类别并列时，从预测类别挪给目标类别的概率质量
TIE_MARGIN = 1e-6


def _checkProbabilityVector(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ContractViolation(f"expected a probability vector, got shape {p.shape}")
    if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any() or abs(p.sum() - 1.0) > SPAN_SUM_TOL:
        raise ContractViolation(f"not a probability vector: {p.tolist()}")
    return p


def target_probability_vector(p_hat, target_class: Optional[int] = None) -> np.ndarray:
    """
    Target condition for the decoder.

    binary: one-hot on the non-predicted (or requested) class;
    multiclass: top-1 entry swapped with the top-2 entry (or with `target_class`).
    argmax always breaks ties toward the lower index, and the result never keeps
    the predicted class on top.
    """
    p = _checkProbabilityVector(p_hat)
    predicted = int(np.argmax(p))

    if target_class is not None:
        target = int(target_class)
        if not 0 <= target < p.size:
            raise ContractViolation(f"target class {target} out of range for {p.size} classes")
        if target == predicted:
            raise ContractViolation(f"target class {target} equals the predicted class")
    elif p.size == 2:
        target = 1 - predicted
    else:
        masked = p.copy()
        masked[predicted] = -np.inf
        target = int(np.argmax(masked))

    if p.size == 2:
        pc = np.zeros(2)
        pc[target] = 1.0
        return pc

    pc = p.copy()
    pc[predicted], pc[target] = p[target], p[predicted]
    if int(np.argmax(pc)) != target:
        pc[target] += TIE_MARGIN
        pc[predicted] -= TIE_MARGIN
    return pc


def postprocess(raw, one_hot_spans: Sequence[Span]) -> np.ndarray:
    """每个 one-hot 区间取 argmax (平局取较小下标)，连续位置原样保留"""
    raw = np.array(raw, dtype=np.float64)
    width = raw.shape[-1]
    spans = check_spans(one_hot_spans, width)
    if not np.isfinite(raw).all() or (raw < 0).any() or (raw > 1).any():
        raise ContractViolation("decoder output must lie in [0, 1]")

    rows = np.atleast_2d(raw)
    for start, stop in spans:
        block = rows[:, start:stop]
        if (np.abs(block.sum(axis=1) - 1.0) > SPAN_SUM_TOL).any():
            raise ContractViolation(f"span ({start}, {stop}) does not sum to 1")
        hot = np.zeros_like(block)
        hot[np.arange(len(block)), np.argmax(block, axis=1)] = 1.0
        rows[:, start:stop] = hot
    return rows if raw.ndim == 2 else rows[0]


@dataclass(frozen=True, eq=False)
class CounterfactualRecord:
    """ one explained example; `valid` is true when the predicted class changed """

    original: np.ndarray
    original_class: int
    target_condition: np.ndarray
    counterfactual: np.ndarray
    counterfactual_class: int
    valid: bool
    label: Optional[int] = None

    @property
    def target_class(self) -> int:
        return int(np.argmax(self.target_condition))

    @property
    def reached_target(self) -> bool:
        return self.counterfactual_class == self.target_class

    def to_dict(self) -> Dict[str, Any]:
        return {
            "original": self.original.tolist(),
            "original_class": self.original_class,
            "target_condition": self.target_condition.tolist(),
            "counterfactual": self.counterfactual.tolist(),
            "counterfactual_class": self.counterfactual_class,
            "valid": self.valid,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CounterfactualRecord":
        label = data.get("label")
        return cls(
            np.array(data["original"], dtype=np.float64),
            int(data["original_class"]),
            np.array(data["target_condition"], dtype=np.float64),
            np.array(data["counterfactual"], dtype=np.float64),
            int(data["counterfactual_class"]),
            bool(data["valid"]),
            None if label is None else int(label),
        )


def _latentMean(model: ModelParams, X: np.ndarray, probabilities: np.ndarray) -> np.ndarray:
    return encode(model, forward_cvae_shared(model, X), probabilities).mean


def _targets(probabilities: np.ndarray, target_classes) -> np.ndarray:
    n = probabilities.shape[0]
    if target_classes is None or np.isscalar(target_classes):
        target_classes = [target_classes] * n
    if len(target_classes) != n:
        raise ContractViolation(f"{len(target_classes)} target classes for {n} rows")
    return np.stack([target_probability_vector(p, t) for p, t in zip(probabilities, target_classes)])


def _decodeRecords(model: ModelParams, X: np.ndarray, probabilities: np.ndarray, z: np.ndarray,
                   targets: np.ndarray, labels) -> List[CounterfactualRecord]:
    counterfactuals = postprocess(decode(model, z, as_condition(model, targets)), model.one_hot_spans)
    originalClasses = predicted_class(probabilities)
    cfClasses = predicted_class(predict_proba(model, counterfactuals))
    labels = [None] * len(X) if labels is None else [int(v) for v in labels]
    return [
        CounterfactualRecord(X[i].copy(), int(originalClasses[i]), targets[i], counterfactuals[i],
                             int(cfClasses[i]), bool(cfClasses[i] != originalClasses[i]), labels[i])
        for i in range(len(X))
    ]


def generate_batch(model: ModelParams, X, target_classes=None, labels=None) -> List[CounterfactualRecord]:
    """
    对多行同时生成反事实；推理时使用潜变量均值，结果确定

    :param target_classes: None (默认目标) / 一个类别 / 每行一个类别 (元素可为 None)
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.p:
        raise ContractViolation(f"input width {X.shape[1]} != encoded width {model.p}")
    if X.shape[0] == 0:
        return []

    probabilities = predict(model, forward_shared(model, X))
    targets = _targets(probabilities, target_classes)
    return _decodeRecords(model, X, probabilities, _latentMean(model, X, probabilities), targets, labels)


def generate(model: ModelParams, x, target_class: Optional[int] = None) -> CounterfactualRecord:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation(f"expected one encoded row, got shape {x.shape}")
    return generate_batch(model, x[None, :], target_class)[0]


def perturbed_generate_batch(model: ModelParams, X, deltas, target_classes=None) -> np.ndarray:
    """decode z = mu + delta instead of mu; returns post-processed rows"""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    deltas = np.asarray(deltas, dtype=np.float64).reshape(X.shape[0], -1)
    if deltas.shape[1] != model.latent_dim:
        raise ContractViolation(f"offset width {deltas.shape[1]} != latent_dim {model.latent_dim}")

    probabilities = predict(model, forward_shared(model, X))
    targets = _targets(probabilities, target_classes)
    z = _latentMean(model, X, probabilities) + deltas
    return postprocess(decode(model, z, as_condition(model, targets)), model.one_hot_spans)


def perturbed_generate(model: ModelParams, x, delta, target_class: Optional[int] = None) -> np.ndarray:
    return perturbed_generate_batch(model, np.asarray(x)[None, :], np.asarray(delta)[None, :], target_class)[0]


def records_validity(records: Sequence[CounterfactualRecord]) -> float:
    if not records:
        raise ContractViolation("no counterfactual records")
    return float(np.mean([r.valid for r in records]))


# ------------------------------------------------------------------ export

def records_to_frame(records: Sequence[CounterfactualRecord], schema: FeatureSchema) -> pd.DataFrame:
    """原始单位下的原样本与反事实，加上类别和有效性"""
    if not records:
        columns = ([f"original.{c.name}" for c in schema.columns] + [f"counterfactual.{c.name}" for c in schema.columns]
                   + ["original_class", "target_class", "counterfactual_class", "valid"])
        return pd.DataFrame(columns=columns)

    originals = inverse_transform(np.stack([r.original for r in records]), schema)
    counterfactuals = inverse_transform(np.stack([r.counterfactual for r in records]), schema)
    classes = schema.label_classes
    frame = pd.concat([originals.add_prefix("original."), counterfactuals.add_prefix("counterfactual.")], axis=1)
    frame["original_class"] = [classes[r.original_class] for r in records]
    frame["target_class"] = [classes[r.target_class] for r in records]
    frame["counterfactual_class"] = [classes[r.counterfactual_class] for r in records]
    frame["valid"] = [int(r.valid) for r in records]
    if all(r.label is not None for r in records):
        frame["label"] = [classes[r.label] for r in records]
    return frame


def write_records_csv(records: Sequence[CounterfactualRecord], schema: FeatureSchema, path: Union[str, Path]):
    writeTextAtomic(path, records_to_frame(records, schema).to_csv(index=False, float_format="%.17g"))
    logger.info(f"{len(records)} counterfactual(s) written to {path}")


def write_records_json(records: Sequence[CounterfactualRecord], path: Union[str, Path],
                       schema: Optional[FeatureSchema] = None, **meta):
    """无损 JSON (编码空间)，meta (dataset / method / seed) 供 evaluate 复算时使用"""
    writeJson(path, {
        "format_version": REPORT_FORMAT_VERSION,
        "schema_hash": schema.hash() if schema is not None else None,
        "features": encoded_feature_names(schema) if schema is not None else None,
        **meta,
        "records": [r.to_dict() for r in records],
    }, indent=None)


def read_records_file(path: Union[str, Path]) -> Tuple[List[CounterfactualRecord], Dict[str, Any]]:
    """-> (records, meta)"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"records file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        records = [CounterfactualRecord.from_dict(r) for r in data.pop("records")]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as e:
        raise DataError(f"records file {path} is malformed: {e}") from e
    return records, data
