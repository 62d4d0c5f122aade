# coding:utf-8
import numpy as np
import pytest

from app.common.exception_handler import ContractViolation, DivergenceError
from app.components.activations import Activation
from app.components.adam_optimizer import OptimizerState, adam_step
from app.components.dense_layer import DenseLayer


def test_zero_gradient_leaves_parameters_unchanged():
    params = np.array([0.3, -1.2, 4.0])
    newParams, state = adam_step(params, np.zeros(3), OptimizerState.fresh(3, 0.1))
    np.testing.assert_array_equal(newParams, params)
    assert state.step_count == 1


def test_first_step_moves_by_learning_rate():
    newParams, _ = adam_step(np.zeros(1), np.ones(1), OptimizerState.fresh(1, 0.1))
    assert newParams[0] == pytest.approx(-0.1, rel=1e-7)


def test_two_steps_with_constant_gradient():
    # m2 = 0.19, v2 = 0.001999; both bias corrections give exactly 1
    state = OptimizerState.fresh(1, 0.1)
    params, state = adam_step(np.zeros(1), np.ones(1), state)
    params, state = adam_step(params, np.ones(1), state)

    expected = -2 * 0.1 / (1.0 + 1e-8)
    assert params[0] == pytest.approx(expected, rel=1e-9)
    assert state.step_count == 2
    assert state.first_moment[0] == pytest.approx(0.19)
    assert state.second_moment[0] == pytest.approx(0.001999)


def test_inputs_are_not_modified():
    params, grads = np.ones(2), np.full(2, 0.5)
    state = OptimizerState.fresh(2)
    adam_step(params, grads, state)
    np.testing.assert_array_equal(params, np.ones(2))
    assert state.step_count == 0
    np.testing.assert_array_equal(state.first_moment, np.zeros(2))


def test_non_finite_gradient_is_a_divergence():
    with pytest.raises(DivergenceError) as info:
        adam_step(np.zeros(2), np.array([0.0, np.nan]), OptimizerState.fresh(2), epoch=3, batch=7)
    assert (info.value.epoch, info.value.batch) == (3, 7)
    assert "epoch 3, batch 7" in str(info.value)


def test_shape_mismatch_is_rejected():
    with pytest.raises(ContractViolation):
        adam_step(np.zeros(2), np.zeros(3), OptimizerState.fresh(2))


def test_backward_of_scalar_linear_layer():
    # L = (w x - t)^2 at w = 1, x = 1, t = 0
    layer = DenseLayer([[1.0]], [0.0], Activation.IDENTITY)
    out, cache = layer.forwardCached(np.array([1.0]))
    _, dW, _ = layer.backward(2.0 * (out - 0.0), cache)
    assert dW[0, 0] == 2.0
