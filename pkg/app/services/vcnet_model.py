# file: services/vcnet_model.py
# coding:utf-8
"""
VCNet 模型服务：共享层 + 预测器 + 条件 VAE (编码器/解码器)，联合损失与解析梯度，
联合训练、两阶段 (post-hoc) 训练以及模型文件的读写
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..common.config import ArchConfig, PosthocConfig, TrainingConfig
from ..common.exception_handler import ContractViolation, DivergenceError, ModelFileError
from ..common.logger import Logger
from ..common.setting import MODEL_FORMAT_VERSION
from ..common.utils import memoryUsageMb, seedStreams, sha256Of, writeJson
from ..components.activations import Activation, Span, check_spans
from ..components.adam_optimizer import OptimizerState, adam_step
from ..components.dense_layer import DenseLayer, init_dense_layer
from ..components.latent_gaussian import LatentGaussian, reparameterize, reparameterize_backward
from ..components.layer_stack import LayerStack, build_stack
from ..components.losses import (bce_reconstruction, bce_reconstruction_grad, cross_entropy,
                                 cross_entropy_grad, kl_diag_gaussian, kl_diag_gaussian_grad)
from .data_service import FeatureSchema, PreprocessedDataset

logger = Logger("training")

# 参数分组顺序即展平顺序
GROUPS = ("shared", "predictor", "encoder", "encoder_mean", "encoder_log_variance", "decoder", "cvae_shared")
PREDICTOR_GROUPS = ("shared", "predictor")
CVAE_GROUPS = ("encoder", "encoder_mean", "encoder_log_variance", "decoder", "cvae_shared")

_STACK_FIELDS = {
    "shared": "shared_layers",
    "predictor": "predictor_layers",
    "encoder": "encoder_layers",
    "decoder": "decoder_layers",
    "cvae_shared": "cvae_shared_layers",
}


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Parameters of one VCNet model.

    Attributes
    ----------
    shared_layers: x [p] -> h
    predictor_layers: h -> condition [c]; sigmoid unit when binary (c = 1), softmax otherwise
    encoder_layers: hidden trunk on [h, condition], may be None when the encoder is a single layer
    encoder_mean, encoder_log_variance: identity heads -> latent_dim
    decoder_layers: [z, condition] -> x_hat [p], grouped softmax on one-hot spans, sigmoid elsewhere
    cvae_shared_layers: the cVAE's own copy of the shared block (post-hoc models only)
    """

    shared_layers: LayerStack
    predictor_layers: LayerStack
    encoder_layers: Optional[LayerStack]
    encoder_mean: DenseLayer
    encoder_log_variance: DenseLayer
    decoder_layers: LayerStack
    one_hot_spans: Tuple[Span, ...] = ()
    n_classes: int = 2
    cvae_shared_layers: Optional[LayerStack] = None

    def __post_init__(self):
        object.__setattr__(self, "one_hot_spans", check_spans(self.one_hot_spans, self.p))
        h, c, k = self.hidden_dim, self.condition_dim, self.latent_dim
        encIn = self.encoder_layers.in_dim if self.encoder_layers else self.encoder_mean.in_dim
        encOut = self.encoder_layers.out_dim if self.encoder_layers else self.encoder_mean.in_dim
        rules = [
            (self.n_classes >= 2, f"need at least two classes, got {self.n_classes}"),
            (c == (1 if self.n_classes == 2 else self.n_classes),
             f"condition width {c} does not fit {self.n_classes} classes"),
            (self.predictor_layers.in_dim == h, f"predictor input {self.predictor_layers.in_dim} != shared output {h}"),
            (encIn == h + c, f"encoder input {encIn} != shared output {h} + condition {c}"),
            (self.encoder_mean.in_dim == encOut and self.encoder_log_variance.in_dim == encOut,
             "encoder heads do not match the encoder trunk"),
            (self.encoder_log_variance.out_dim == k, "encoder heads differ in width"),
            (self.decoder_layers.in_dim == k + c, f"decoder input {self.decoder_layers.in_dim} != latent {k} + condition {c}"),
            (self.decoder_layers.out_dim == self.p, f"decoder output {self.decoder_layers.out_dim} != input width {self.p}"),
        ]
        if self.cvae_shared_layers is not None:
            rules.append((self.cvae_shared_layers.dims == self.shared_layers.dims,
                          "cVAE shared block must mirror the predictor's shared block"))
        for ok, message in rules:
            if not ok:
                raise ContractViolation(f"inconsistent model: {message}")

    @property
    def p(self) -> int:
        return self.shared_layers.in_dim

    @property
    def hidden_dim(self) -> int:
        return self.shared_layers.out_dim

    @property
    def condition_dim(self) -> int:
        return self.predictor_layers.out_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder_mean.out_dim

    @property
    def isBinary(self) -> bool:
        return self.n_classes == 2

    @property
    def isPosthoc(self) -> bool:
        return self.cvae_shared_layers is not None

    def architecture(self) -> ArchConfig:
        encoder = self.encoder_layers.dims if self.encoder_layers else [self.encoder_mean.in_dim]
        return ArchConfig(
            tuple(self.shared_layers.dims),
            tuple(encoder) + (self.latent_dim,),
            tuple(self.decoder_layers.dims),
            tuple(self.predictor_layers.dims),
            self.latent_dim,
        )


@dataclass(frozen=True)
class LossBreakdown:
    """ total = cvae + lambda2 * predictor; cvae = lambda3 * reconstruction + lambda1 * kl (all sums over the batch) """

    total: float
    predictor: float
    cvae: float
    kl: float
    reconstruction: float
    n: int


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total_loss: float
    predictor_loss: float
    cvae_loss: float
    accuracy: float
    stage: str = "joint"


@dataclass
class TrainingLog:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.records],
                            columns=["stage", "epoch", "total_loss", "predictor_loss", "cvae_loss", "accuracy"])

    def extend(self, other: "TrainingLog") -> "TrainingLog":
        return TrainingLog(self.records + other.records)


# ------------------------------------------------------------ construction

def init_model(arch: ArchConfig, one_hot_spans: Sequence[Span], n_classes: int,
               rng: np.random.Generator) -> ModelParams:
    """按架构配置初始化参数 (uniform ±1/sqrt(fan_in))"""
    arch.checkWidths(n_classes=n_classes)
    c = arch.condition_dim
    shared = build_stack(arch.shared_dims, rng)

    if n_classes == 2:
        predictor = build_stack(arch.predictor_dims, rng, last=Activation.SIGMOID)
    else:
        predictor = build_stack(arch.predictor_dims, rng, last=Activation.SOFTMAX_GROUPED, lastSpans=[(0, c)])

    trunkDims = arch.encoder_dims[:-1]
    trunk = build_stack(trunkDims, rng) if len(trunkDims) >= 2 else None
    headIn = trunkDims[-1]
    mean = init_dense_layer(headIn, arch.latent_dim, Activation.IDENTITY, rng)
    logVar = init_dense_layer(headIn, arch.latent_dim, Activation.IDENTITY, rng)

    decoder = build_stack(arch.decoder_dims, rng, last=Activation.SOFTMAX_GROUPED, lastSpans=one_hot_spans)
    return ModelParams(shared, predictor, trunk, mean, logVar, decoder, tuple(one_hot_spans), n_classes)


def init_model_for(dataset: PreprocessedDataset, arch: ArchConfig, rng: np.random.Generator) -> ModelParams:
    arch.checkWidths(p=dataset.p, n_classes=dataset.schema.n_classes)
    return init_model(arch, dataset.one_hot_spans, dataset.schema.n_classes, rng)


def _groupLayers(params: ModelParams, group: str) -> List[DenseLayer]:
    if group == "encoder_mean":
        return [params.encoder_mean]
    if group == "encoder_log_variance":
        return [params.encoder_log_variance]
    stack = getattr(params, _STACK_FIELDS[group])
    return list(stack.layers) if stack is not None else []


def _withGroupLayers(params: ModelParams, group: str, layers: List[DenseLayer]) -> Dict[str, Any]:
    if group in ("encoder_mean", "encoder_log_variance"):
        return {group: layers[0]}
    return {_STACK_FIELDS[group]: LayerStack(tuple(layers)) if layers else None}


def parameter_count(params: ModelParams, groups: Sequence[str] = GROUPS) -> int:
    return sum(layer.size for g in groups for layer in _groupLayers(params, g))


def flatten(params: ModelParams, groups: Sequence[str] = GROUPS) -> np.ndarray:
    """参数展平为一维向量 (每层先 W 按行优先，再 b)"""
    parts = [np.concatenate([layer.weights.ravel(), layer.bias])
             for g in groups for layer in _groupLayers(params, g)]
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(params: ModelParams, theta: np.ndarray, groups: Sequence[str] = GROUPS) -> ModelParams:
    """flatten 的逆操作；未列出的分组保持不变"""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (parameter_count(params, groups),):
        raise ContractViolation(
            f"parameter vector of length {theta.size} for {parameter_count(params, groups)} parameters")

    pos, changes = 0, {}
    for g in groups:
        rebuilt = []
        for layer in _groupLayers(params, g):
            nW = layer.weights.size
            weights = theta[pos:pos + nW].reshape(layer.weights.shape)
            bias = theta[pos + nW:pos + layer.size]
            rebuilt.append(layer.withParameters(weights, bias))
            pos += layer.size
        changes.update(_withGroupLayers(params, g, rebuilt))
    return replace(params, **changes)


def combine_posthoc(predictor: ModelParams, cvae: ModelParams) -> ModelParams:
    """阶段一的预测器 + 阶段二的 cVAE (自带共享层) 组合成一个推理模型"""
    if not cvae.isPosthoc:
        raise ContractViolation("the cVAE model has no shared block of its own")
    return replace(cvae, shared_layers=predictor.shared_layers, predictor_layers=predictor.predictor_layers)


# ----------------------------------------------------------------- forward

def _checkRows(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.p:
        raise ContractViolation(f"input width {x.shape[-1] if x.ndim else 0} != encoded width {params.p}")
    return x


def forward_shared(params: ModelParams, x) -> np.ndarray:
    """h = s(x)"""
    return params.shared_layers.forward(_checkRows(params, x))


def forward_cvae_shared(params: ModelParams, x) -> np.ndarray:
    """cVAE 一侧的共享表示；联合模型中与 forward_shared 相同"""
    stack = params.cvae_shared_layers or params.shared_layers
    return stack.forward(_checkRows(params, x))


def expand_probabilities(condition: np.ndarray, n_classes: int) -> np.ndarray:
    """binary scalar P(class 1) -> [1 - s, s]; multiclass vectors pass through"""
    condition = np.asarray(condition, dtype=np.float64)
    if n_classes == 2 and condition.shape[-1] == 1:
        return np.concatenate([1.0 - condition, condition], axis=-1)
    return condition


def as_condition(params: ModelParams, probabilities) -> np.ndarray:
    """probability vector (or raw condition) -> decoder/encoder condition of width condition_dim"""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    width = probabilities.shape[-1]
    if width == params.condition_dim:
        return probabilities
    if params.isBinary and width == 2:
        return probabilities[..., 1:2]
    raise ContractViolation(f"condition width {width} != {params.condition_dim}")


def predicted_class(probabilities) -> np.ndarray:
    """argmax，平局取较小下标"""
    return np.argmax(np.asarray(probabilities), axis=-1)


def predict(params: ModelParams, h) -> np.ndarray:
    """预测概率向量 (二分类时展开为两项)"""
    return expand_probabilities(params.predictor_layers.forward(h), params.n_classes)


def predict_proba(params: ModelParams, x) -> np.ndarray:
    return predict(params, forward_shared(params, x))


def predict_classes(params: ModelParams, x) -> np.ndarray:
    return predicted_class(predict_proba(params, x))


def encode(params: ModelParams, h, probabilities) -> LatentGaussian:
    """q(z | h, p_hat) 的均值和对数方差"""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.hidden_dim:
        raise ContractViolation(f"hidden width {h.shape[-1]} != {params.hidden_dim}")
    t = np.concatenate([h, as_condition(params, probabilities)], axis=-1)
    if params.encoder_layers is not None:
        t = params.encoder_layers.forward(t)
    return LatentGaussian(params.encoder_mean.forward(t), params.encoder_log_variance.forward(t))


def decode(params: ModelParams, z, condition) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.latent_dim:
        raise ContractViolation(f"latent width {z.shape[-1]} != {params.latent_dim}")
    return params.decoder_layers.forward(np.concatenate([z, as_condition(params, condition)], axis=-1))


# ------------------------------------------------------------------ losses

def loss_cvae(params: ModelParams, x, probabilities, noise, lambda1: float, lambda3: float) -> float:
    """
    单样本 Monte-Carlo 估计：lambda3 * BCE(decode(z, p), x) + lambda1 * KL(q || N(0, I))

    批量输入时返回各行之和
    """
    x = _checkRows(params, x)
    g = encode(params, forward_cvae_shared(params, x), probabilities)
    if not g.isFinite():
        raise DivergenceError("non-finite latent parameters")
    reconstruction = decode(params, reparameterize(g, noise), probabilities)
    value = float(np.sum(lambda3 * bce_reconstruction(reconstruction, x) + lambda1 * kl_diag_gaussian(g)))
    if not np.isfinite(value):
        raise DivergenceError("non-finite cVAE loss")
    return value


def loss_pred(params: ModelParams, x, y) -> float:
    """-log p_hat[y]；批量输入时取平均"""
    return float(np.mean(cross_entropy(predict_proba(params, x), y)))


def loss_total(params: ModelParams, x, y, config: TrainingConfig, noise) -> float:
    """sum of cVAE losses + lambda2 * mean predictor loss over the batch"""
    return loss_and_gradients(params, x, y, config, noise, withGradients=False)[0].total


def loss_and_gradients(params: ModelParams, x, y, config: TrainingConfig, noise,
                       withGradients: bool = True) -> Tuple[LossBreakdown, Optional[np.ndarray]]:
    """
    联合损失及其对全部参数的解析梯度 (顺序同 flatten)

    条件向量 p_hat 来自预测器，梯度同时经编码器和解码器的条件输入回传到预测器
    """
    X = np.atleast_2d(_checkRows(params, x))
    Y = np.asarray(y, dtype=np.int64).reshape(-1)
    noise = np.asarray(noise, dtype=np.float64).reshape(X.shape[0], params.latent_dim)
    n, hDim, k = X.shape[0], params.hidden_dim, params.latent_dim
    if n == 0:
        raise ContractViolation("empty batch")
    lambda1, lambda2, lambda3 = config.lambda1, config.lambda2, config.lambda3

    # forward
    h, sharedCache = params.shared_layers.forwardCached(X)
    condition, predCache = params.predictor_layers.forwardCached(h)
    if params.cvae_shared_layers is not None:
        hEnc, cvaeSharedCache = params.cvae_shared_layers.forwardCached(X)
    else:
        hEnc = h

    encIn = np.concatenate([hEnc, condition], axis=1)
    if params.encoder_layers is not None:
        t, trunkCache = params.encoder_layers.forwardCached(encIn)
    else:
        t = encIn
    mean, meanCache = params.encoder_mean.forwardCached(t)
    logVar, logVarCache = params.encoder_log_variance.forwardCached(t)
    g = LatentGaussian(mean, logVar)
    if not g.isFinite():
        raise DivergenceError("non-finite latent parameters")

    z = reparameterize(g, noise)
    reconstruction, decCache = params.decoder_layers.forwardCached(np.concatenate([z, condition], axis=1))
    probabilities = expand_probabilities(condition, params.n_classes)

    rec = bce_reconstruction(reconstruction, X)
    kl = kl_diag_gaussian(g)
    ce = cross_entropy(probabilities, Y)
    recSum, klSum, ceMean = float(rec.sum()), float(kl.sum()), float(ce.mean())
    cvae = lambda3 * recSum + lambda1 * klSum
    total = cvae + lambda2 * ceMean
    if not np.isfinite(total):
        raise DivergenceError("non-finite loss")
    breakdown = LossBreakdown(total, ceMean, cvae, klSum, recSum, n)
    if not withGradients:
        return breakdown, None

    grads: Dict[str, list] = {}

    # decoder
    dDecIn, grads["decoder"] = params.decoder_layers.backward(
        lambda3 * bce_reconstruction_grad(reconstruction, X), decCache)
    dZ, dCondition = dDecIn[:, :k], dDecIn[:, k:].copy()

    # latent: reparameterization + KL
    dMean, dLogVar = reparameterize_backward(g, noise, dZ)
    klMean, klLogVar = kl_diag_gaussian_grad(g)
    dMean = dMean + lambda1 * klMean
    dLogVar = dLogVar + lambda1 * klLogVar

    dT, dW, db = params.encoder_mean.backward(dMean, meanCache)
    grads["encoder_mean"] = [(dW, db)]
    dT2, dW, db = params.encoder_log_variance.backward(dLogVar, logVarCache)
    grads["encoder_log_variance"] = [(dW, db)]
    dT = dT + dT2

    if params.encoder_layers is not None:
        dEncIn, grads["encoder"] = params.encoder_layers.backward(dT, trunkCache)
    else:
        dEncIn, grads["encoder"] = dT, []
    dHEnc = dEncIn[:, :hDim]
    dCondition += dEncIn[:, hDim:]

    # predictor (mean-reduced cross entropy)
    dProbabilities = (lambda2 / n) * cross_entropy_grad(probabilities, Y)
    if params.isBinary:
        dCondition[:, 0] += dProbabilities[:, 1] - dProbabilities[:, 0]
    else:
        dCondition += dProbabilities
    dH, grads["predictor"] = params.predictor_layers.backward(dCondition, predCache)

    if params.cvae_shared_layers is not None:
        _, grads["cvae_shared"] = params.cvae_shared_layers.backward(dHEnc, cvaeSharedCache)
    else:
        dH = dH + dHEnc
        grads["cvae_shared"] = []
    _, grads["shared"] = params.shared_layers.backward(dH, sharedCache)

    flat = np.concatenate([np.concatenate([dW.ravel(), db]) for gName in GROUPS for dW, db in grads[gName]])
    return breakdown, flat


def predictor_loss_and_gradients(params: ModelParams, x, y) -> Tuple[float, np.ndarray]:
    """只含预测器的平均交叉熵，梯度顺序同 flatten(params, PREDICTOR_GROUPS)"""
    X = np.atleast_2d(_checkRows(params, x))
    Y = np.asarray(y, dtype=np.int64).reshape(-1)
    n = X.shape[0]

    h, sharedCache = params.shared_layers.forwardCached(X)
    condition, predCache = params.predictor_layers.forwardCached(h)
    probabilities = expand_probabilities(condition, params.n_classes)
    loss = float(cross_entropy(probabilities, Y).mean())
    if not np.isfinite(loss):
        raise DivergenceError("non-finite predictor loss")

    dProbabilities = cross_entropy_grad(probabilities, Y) / n
    if params.isBinary:
        dCondition = (dProbabilities[:, 1] - dProbabilities[:, 0])[:, None]
    else:
        dCondition = dProbabilities
    dH, predGrads = params.predictor_layers.backward(dCondition, predCache)
    _, sharedGrads = params.shared_layers.backward(dH, sharedCache)

    flat = np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in sharedGrads + predGrads])
    return loss, flat


# ---------------------------------------------------------------- training

def _accuracy(params: ModelParams, dataset: PreprocessedDataset) -> float:
    return float(np.mean(predict_classes(params, dataset.examples) == dataset.labels))


def _batches(n: int, batchSize: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for b, start in enumerate(range(0, n, batchSize)):
        yield b, order[start:start + batchSize]


def _checkTrainable(dataset: PreprocessedDataset):
    if dataset.labels is None or dataset.n == 0:
        raise ContractViolation("training needs a non-empty labelled dataset")


def _warnIfNotDecreasing(log: TrainingLog, stage: str):
    records = [r for r in log.records if r.stage == stage]
    if len(records) >= 2 and not records[-1].total_loss < records[0].total_loss:
        logger.warning(f"{stage}: final epoch loss {records[-1].total_loss:.6f} did not improve on "
                       f"first epoch loss {records[0].total_loss:.6f}")


def _optimize(params: ModelParams, dataset: PreprocessedDataset, config: TrainingConfig,
              streams: Dict[str, np.random.Generator], groups: Sequence[str], stage: str,
              progress: bool) -> Tuple[ModelParams, TrainingLog]:
    """在给定参数分组上做小批量 Adam；其余分组保持不变"""
    X, Y = dataset.examples, dataset.labels
    theta = flatten(params, groups)
    state = OptimizerState.fresh(theta.size, config.learning_rate)
    log = TrainingLog()
    predictorOnly = tuple(groups) == PREDICTOR_GROUPS

    epochs = tqdm(range(1, config.epochs + 1), desc=stage, unit="epoch", disable=not progress, leave=False)
    for epoch in epochs:
        total = pred = cvae = 0.0
        nBatches = 0
        for b, idx in _batches(dataset.n, config.batch_size, streams["shuffle"]):
            try:
                if predictorOnly:
                    loss, grad = predictor_loss_and_gradients(params, X[idx], Y[idx])
                    total, pred = total + loss, pred + loss * len(idx)
                else:
                    noise = streams["noise"].standard_normal((len(idx), params.latent_dim))
                    breakdown, grad = loss_and_gradients(params, X[idx], Y[idx], config, noise)
                    grad = _selectGroups(params, grad, groups)
                    total += breakdown.total
                    pred += breakdown.predictor * len(idx)
                    cvae += breakdown.cvae
                theta, state = adam_step(theta, grad, state, epoch, b)
            except DivergenceError as e:
                raise e.at(epoch, b) from e
            params = unflatten(params, theta, groups)
            nBatches += 1

        record = EpochRecord(epoch, total / nBatches, pred / dataset.n, cvae / dataset.n,
                             _accuracy(params, dataset), stage)
        log.append(record)
        epochs.set_postfix(loss=f"{record.total_loss:.4f}", acc=f"{record.accuracy:.3f}")
        logger.event("epoch", stage=stage, epoch=f"{epoch}/{config.epochs}", loss=record.total_loss,
                     pred=record.predictor_loss, cvae=record.cvae_loss, acc=record.accuracy)
        logger.event("memory", logging.DEBUG, stage=stage, rss_mb=memoryUsageMb())

    _warnIfNotDecreasing(log, stage)
    return params, log


def _selectGroups(params: ModelParams, grad: np.ndarray, groups: Sequence[str]) -> np.ndarray:
    if tuple(groups) == GROUPS:
        return grad
    pieces, pos = {}, 0
    for g in GROUPS:
        size = parameter_count(params, [g])
        pieces[g] = grad[pos:pos + size]
        pos += size
    return np.concatenate([pieces[g] for g in groups])


def train_joint(dataset: PreprocessedDataset, arch: ArchConfig, config: TrainingConfig,
                progress: bool = False) -> Tuple[ModelParams, TrainingLog]:
    """
    联合训练预测器与 cVAE (同一个共享层)

    同样的数据、配置和种子得到逐位相同的参数
    """
    _checkTrainable(dataset)
    config.validate()
    streams = seedStreams(config.seed)
    params = init_model_for(dataset, arch, streams["init"])
    logger.event("train", stage="joint", dataset=dataset.name, n=dataset.n, parameters=parameter_count(params),
                 seed=config.seed)
    return _optimize(params, dataset, config, streams, GROUPS, "joint", progress)


def train_posthoc(dataset: PreprocessedDataset, arch: ArchConfig, posthoc: PosthocConfig, seed: int = 0,
                  progress: bool = False) -> Tuple[ModelParams, ModelParams, TrainingLog]:
    """
    两阶段训练：先单独训练共享层 + 预测器，再冻结预测器训练一个独立的 cVAE
    (有自己的共享层，以冻结预测器的 p_hat 为条件)

    :return: (阶段一模型, 组合后的推理模型, 训练日志)
    """
    _checkTrainable(dataset)
    posthoc.validate()
    streams = seedStreams(seed)
    initial = init_model_for(dataset, arch, streams["init"])
    logger.event("train", stage="posthoc", dataset=dataset.name, n=dataset.n, seed=seed)

    predictorCfg = replace(posthoc.predictor, lambda1=0.0, lambda2=1.0, lambda3=0.0, seed=seed)
    predictor, log = _optimize(initial, dataset, predictorCfg, streams, PREDICTOR_GROUPS, "posthoc-predictor", progress)

    fresh = init_model(arch, dataset.one_hot_spans, dataset.schema.n_classes, streams["init"])
    model = replace(fresh, shared_layers=predictor.shared_layers, predictor_layers=predictor.predictor_layers,
                    cvae_shared_layers=fresh.shared_layers)
    cvaeCfg = replace(posthoc.cvae, lambda2=0.0, seed=seed)
    model, cvaeLog = _optimize(model, dataset, cvaeCfg, streams, CVAE_GROUPS, "posthoc-cvae", progress)

    return predictor, combine_posthoc(predictor, model), log.extend(cvaeLog)


# ---------------------------------------------------------------- model file

def _layerToDict(layer: DenseLayer) -> Dict[str, Any]:
    return {
        "activation": layer.activation.value,
        "spans": [list(s) for s in layer.spans],
        "weights": layer.weights.tolist(),
        "bias": layer.bias.tolist(),
    }


def _layerFromDict(data: Dict[str, Any]) -> DenseLayer:
    return DenseLayer(np.array(data["weights"], dtype=np.float64).reshape(len(data["bias"]), -1),
                      np.array(data["bias"], dtype=np.float64),
                      Activation(data["activation"]),
                      tuple(tuple(s) for s in data.get("spans", [])))


def _stackFromList(data) -> Optional[LayerStack]:
    if data is None or len(data) == 0:
        return None
    return LayerStack(tuple(_layerFromDict(d) for d in data))


def model_to_dict(params: ModelParams, schema: Optional[FeatureSchema] = None) -> Dict[str, Any]:
    stacks = {g: [_layerToDict(l) for l in _groupLayers(params, g)] for g in _STACK_FIELDS}
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": params.architecture().to_dict(),
        "condition_dim": params.condition_dim,
        "n_classes": params.n_classes,
        "one_hot_spans": [list(s) for s in params.one_hot_spans],
        "schema_hash": schema.hash() if schema is not None else None,
        "schema": schema.to_dict() if schema is not None else None,
        "blocks": {
            **stacks,
            "cvae_shared": stacks["cvae_shared"] if params.isPosthoc else None,
            "encoder_mean": _layerToDict(params.encoder_mean),
            "encoder_log_variance": _layerToDict(params.encoder_log_variance),
        },
    }


def model_from_dict(data: Dict[str, Any], expected_schema_hash: Optional[str] = None
                    ) -> Tuple[ModelParams, Optional[FeatureSchema]]:
    if not isinstance(data, dict) or "format_version" not in data:
        raise ModelFileError("not a model file")
    if data["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFileError(
            f"model format version {data['format_version']} is not supported (expected {MODEL_FORMAT_VERSION})")

    schema = None
    if data.get("schema") is not None:
        schema = FeatureSchema.from_dict(data["schema"])
        if schema.hash() != data.get("schema_hash"):
            raise ModelFileError("stored schema does not match the stored schema hash")
    if expected_schema_hash is not None and data.get("schema_hash") != expected_schema_hash:
        raise ModelFileError(
            f"model was trained for schema {data.get('schema_hash')}, not {expected_schema_hash}")

    try:
        blocks = data["blocks"]
        params = ModelParams(
            _stackFromList(blocks["shared"]),
            _stackFromList(blocks["predictor"]),
            _stackFromList(blocks["encoder"]),
            _layerFromDict(blocks["encoder_mean"]),
            _layerFromDict(blocks["encoder_log_variance"]),
            _stackFromList(blocks["decoder"]),
            tuple(tuple(s) for s in data["one_hot_spans"]),
            int(data["n_classes"]),
            _stackFromList(blocks.get("cvae_shared")),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ModelFileError(f"malformed model file: {e}") from e

    if params.condition_dim != data.get("condition_dim"):
        raise ModelFileError("stored condition_dim does not match the layers")
    return params, schema


def save_model(params: ModelParams, path, schema: Optional[FeatureSchema] = None):
    """JSON 模型文件，浮点数按完整 64 位精度写出；先写临时文件再替换"""
    writeJson(path, model_to_dict(params, schema), indent=None)
    logger.info(f"model saved to {path}")


def read_model_file(path, expected_schema_hash: Optional[str] = None) -> Tuple[ModelParams, Optional[FeatureSchema]]:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"model file {path} is truncated or corrupt: {e}") from e
    return model_from_dict(data, expected_schema_hash)


def load_model(path, expected_schema_hash: Optional[str] = None) -> ModelParams:
    return read_model_file(path, expected_schema_hash)[0]
