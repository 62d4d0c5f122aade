# coding:utf-8
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from ..common.exception_handler import ContractViolation, DivergenceError


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """ Adam moments over a flat parameter vector """

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, size: int, learning_rate: float = 0.001, **kwargs) -> "OptimizerState":
        return cls(np.zeros(size), np.zeros(size), 0, learning_rate, **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState,
              epoch: int = None, batch: int = None) -> Tuple[np.ndarray, OptimizerState]:
    """
    One bias-corrected Adam update; returns new parameters and state (inputs untouched)
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == state.first_moment.shape == state.second_moment.shape):
        raise ContractViolation(
            f"parameter {params.shape}, gradient {grads.shape} and moment "
            f"{state.first_moment.shape} shapes differ")
    if not np.isfinite(grads).all():
        raise DivergenceError("non-finite gradient", epoch, batch)

    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (grads * grads)

    mHat = m / (1.0 - state.beta1 ** t)
    vHat = v / (1.0 - state.beta2 ** t)
    newParams = params - state.learning_rate * mHat / (np.sqrt(vHat) + state.epsilon)

    return newParams, replace(state, first_moment=m, second_moment=v, step_count=t)
