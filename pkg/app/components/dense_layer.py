# coding:utf-8
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from ..common.exception_handler import ContractViolation
from .activations import Activation, Span, activate, activation_backward, check_spans


@dataclass(frozen=True)
class LayerCache:
    """ intermediate values of one forward pass, consumed by `DenseLayer.backward` """

    x: np.ndarray
    z: np.ndarray
    out: np.ndarray


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """
    Fully connected layer `activation(W x + b)`

    Attributes
    ----------
    weights: ndarray [out_dim, in_dim]
    bias: ndarray [out_dim]
    activation: Activation
    spans: one-hot spans used by `SOFTMAX_GROUPED` (ignored otherwise)
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY
    spans: Tuple[Span, ...] = field(default=())

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if weights.ndim != 2:
            raise ContractViolation(f"weights must be a matrix, got shape {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ContractViolation(
                f"bias shape {bias.shape} does not match {weights.shape[0]} outputs")
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise ContractViolation("layer parameters must be finite")

        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.activation is Activation.SOFTMAX_GROUPED:
            object.__setattr__(self, "spans", check_spans(self.spans, weights.shape[0]))
        else:
            object.__setattr__(self, "spans", ())

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def _checkInput(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.in_dim:
            raise ContractViolation(
                f"input width {x.shape[-1] if x.ndim else 0} does not match layer in_dim {self.in_dim}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._checkInput(x)
        return activate(self.activation, x @ self.weights.T + self.bias, self.spans)

    def forwardCached(self, x) -> Tuple[np.ndarray, LayerCache]:
        x = self._checkInput(x)
        z = x @ self.weights.T + self.bias
        out = activate(self.activation, z, self.spans)
        return out, LayerCache(x, z, out)

    def backward(self, dout: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Returns
        -------
        dx, dW, db: gradients w.r.t. input, weights and bias (summed over the batch)
        """
        dz = activation_backward(self.activation, cache.z, cache.out, dout, self.spans)
        if dz.ndim == 1:
            return self.weights.T @ dz, np.outer(dz, cache.x), dz

        return dz @ self.weights, dz.T @ cache.x, dz.sum(axis=0)

    def withParameters(self, weights: np.ndarray, bias: np.ndarray) -> "DenseLayer":
        return DenseLayer(weights, bias, self.activation, self.spans)


def init_dense_layer(in_dim: int, out_dim: int, activation: Activation, rng: np.random.Generator,
                     spans: Sequence[Span] = ()) -> DenseLayer:
    """ uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and bias """
    bound = 1.0 / np.sqrt(in_dim)
    weights = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    bias = rng.uniform(-bound, bound, size=out_dim)
    return DenseLayer(weights, bias, activation, tuple(spans))


def zero_dense_layer(in_dim: int, out_dim: int, activation: Activation, spans: Sequence[Span] = ()) -> DenseLayer:
    return DenseLayer(np.zeros((out_dim, in_dim)), np.zeros(out_dim), activation, tuple(spans))


def dense_forward(layer: DenseLayer, input) -> np.ndarray:
    return layer.forward(input)
