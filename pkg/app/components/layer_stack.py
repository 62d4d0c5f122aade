# coding:utf-8
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..common.exception_handler import ContractViolation
from .activations import Activation, Span
from .dense_layer import DenseLayer, LayerCache, init_dense_layer


LayerGrad = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True, eq=False)
class LayerStack:
    """ ordered dense layers applied one after another """

    layers: Tuple[DenseLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ContractViolation(
                    f"layer widths do not chain: {prev.out_dim} -> {nxt.in_dim}")
        object.__setattr__(self, "layers", layers)

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> List[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def forward(self, x) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def forwardCached(self, x) -> Tuple[np.ndarray, List[LayerCache]]:
        caches = []
        for layer in self.layers:
            x, cache = layer.forwardCached(x)
            caches.append(cache)
        return x, caches

    def backward(self, dout: np.ndarray, caches: Sequence[LayerCache]) -> Tuple[np.ndarray, List[LayerGrad]]:
        """ back-propagate `dout` (gradient w.r.t. the stack output) through every layer """
        grads: List[LayerGrad] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dout, dW, db = self.layers[i].backward(dout, caches[i])
            grads[i] = (dW, db)
        return dout, grads


def build_stack(dims: Sequence[int], rng: np.random.Generator, hidden: Activation = Activation.ELU,
                last: Activation = Activation.ELU, lastSpans: Sequence[Span] = ()) -> LayerStack:
    """
    dims = [in, h1, ..., out]; hidden layers use `hidden`, the last one `last`
    """
    if len(dims) < 2:
        raise ContractViolation(f"a layer stack needs at least two widths, got {list(dims)}")

    layers = []
    for i, (fanIn, fanOut) in enumerate(zip(dims, dims[1:])):
        isLast = i == len(dims) - 2
        layers.append(init_dense_layer(
            fanIn, fanOut, last if isLast else hidden, rng, lastSpans if isLast else ()))

    return LayerStack(tuple(layers))
