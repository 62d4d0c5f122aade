# coding:utf-8
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.common.exception_handler import ContractViolation
from app.components.activations import (Activation, activate, activation_backward, check_spans, elu, sigmoid,
                                        softmax_grouped, span_mask)
from app.components.gradient_check import numerical_gradient, relative_error


finite = st.floats(-30, 30, allow_nan=False)


def test_elu_is_identity_for_positive_and_continuous_at_zero():
    x = np.array([-1.0, -1e-12, 0.0, 1e-12, 2.5])
    out = elu(x)
    assert out[0] == pytest.approx(np.expm1(-1.0))
    assert out[2] == 0.0
    assert out[4] == 2.5
    assert abs(out[1] - out[3]) < 1e-11


def test_sigmoid_at_zero_and_saturation():
    assert sigmoid(np.array(0.0)) == 0.5
    assert np.isfinite(sigmoid(np.array([-1000.0, 1000.0]))).all()


def test_softmax_grouped_example():
    out = softmax_grouped(np.array([0.0, 0.0, 0.0, np.log(3.0)]), [(1, 4)])
    assert out[0] == 0.5
    np.testing.assert_allclose(out[1:], [0.2, 0.2, 0.6])


@given(arrays(np.float64, 7, elements=finite))
def test_softmax_grouped_spans_sum_to_one(logits):
    spans = [(0, 3), (4, 6)]
    out = softmax_grouped(logits, spans)
    assert ((out >= 0) & (out <= 1)).all()
    for start, stop in spans:
        assert abs(out[start:stop].sum() - 1.0) < 1e-9


def test_softmax_grouped_batch_matches_rows(rng):
    logits = rng.normal(size=(5, 6))
    batch = softmax_grouped(logits, [(2, 5)])
    for i in range(5):
        np.testing.assert_allclose(batch[i], softmax_grouped(logits[i], [(2, 5)]))


@pytest.mark.parametrize("spans", [[(0, 9)], [(2, 2)], [(-1, 2)], [(0, 3), (2, 4)], [(1,)]])
def test_check_spans_rejects_bad_spans(spans):
    with pytest.raises(ContractViolation):
        check_spans(spans, 6)


def test_check_spans_sorts_and_mask():
    assert check_spans([(3, 5), (0, 2)], 6) == ((0, 2), (3, 5))
    assert span_mask([(1, 3)], 4).tolist() == [False, True, True, False]


@pytest.mark.parametrize("activation", list(Activation))
def test_activation_backward_matches_finite_differences(activation, rng):
    spans = [(1, 4)] if activation is Activation.SOFTMAX_GROUPED else []
    z = rng.normal(size=6)
    upstream = rng.normal(size=6)

    def f(v):
        return float(upstream @ activate(activation, v, spans))

    out = activate(activation, z, spans)
    analytic = activation_backward(activation, z, out, upstream, spans)
    assert relative_error(analytic, numerical_gradient(f, z)) < 1e-6
