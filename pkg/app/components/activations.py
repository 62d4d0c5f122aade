# coding:utf-8
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..common.exception_handler import ContractViolation
from ..common.setting import ELU_ALPHA


Span = Tuple[int, int]


class Activation(Enum):
    """ activation of a dense layer """

    ELU = "elu"
    SIGMOID = "sigmoid"
    SOFTMAX_GROUPED = "softmax_grouped"
    IDENTITY = "identity"


def check_spans(spans: Sequence[Span], width: int) -> Tuple[Span, ...]:
    """ validate half-open index spans `[start, stop)`: non-empty, in bounds, disjoint """
    checked = []
    for span in spans:
        if len(span) != 2:
            raise ContractViolation(f"span {span!r} is not a (start, stop) pair")

        start, stop = int(span[0]), int(span[1])
        if start < 0 or stop > width or start >= stop:
            raise ContractViolation(f"span ({start}, {stop}) out of range for width {width}")

        checked.append((start, stop))

    checked.sort()
    for (_, prevStop), (start, _) in zip(checked, checked[1:]):
        if start < prevStop:
            raise ContractViolation(f"spans overlap at index {start}")

    return tuple(checked)


def span_mask(spans: Sequence[Span], width: int) -> np.ndarray:
    """ boolean mask of positions covered by a span """
    mask = np.zeros(width, dtype=bool)
    for start, stop in spans:
        mask[start:stop] = True
    return mask


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, ELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softmax_grouped(logits: np.ndarray, groups: Sequence[Span]) -> np.ndarray:
    """
    Softmax inside every span, sigmoid on the positions outside all spans.

    Works on a single vector or on a batch (last axis).
    """
    logits = np.asarray(logits, dtype=np.float64)
    width = logits.shape[-1]
    groups = check_spans(groups, width)

    out = sigmoid(logits)
    for start, stop in groups:
        block = logits[..., start:stop]
        shifted = np.exp(block - block.max(axis=-1, keepdims=True))
        out[..., start:stop] = shifted / shifted.sum(axis=-1, keepdims=True)

    return out


def activate(activation: Activation, z: np.ndarray, spans: Sequence[Span] = ()) -> np.ndarray:
    if activation is Activation.ELU:
        return elu(z)
    if activation is Activation.SIGMOID:
        return sigmoid(z)
    if activation is Activation.SOFTMAX_GROUPED:
        return softmax_grouped(z, spans)
    return np.array(z, dtype=np.float64, copy=True)


def activation_backward(activation: Activation, z: np.ndarray, out: np.ndarray,
                        dout: np.ndarray, spans: Sequence[Span] = ()) -> np.ndarray:
    """ vector-Jacobian product of the activation at pre-activation `z` """
    if activation is Activation.ELU:
        return dout * np.where(z > 0, 1.0, out + ELU_ALPHA)

    if activation is Activation.SIGMOID:
        return dout * out * (1.0 - out)

    if activation is Activation.SOFTMAX_GROUPED:
        dz = dout * out * (1.0 - out)
        for start, stop in spans:
            s = out[..., start:stop]
            g = dout[..., start:stop]
            dz[..., start:stop] = s * (g - (g * s).sum(axis=-1, keepdims=True))
        return dz

    return np.array(dout, dtype=np.float64, copy=True)
