"""Tests for the dense kernels, Parameter, gradient checker and RMSProp."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from trafficgc.config import OptimizerConfig
from trafficgc.errors import NonFiniteError, ShapeError
from trafficgc.numeric import (
    Parameter, clip_grad_norm, fd_gradient_check, hadamard, masked_linear_backward,
    linear, masked_linear_forward, matmul, rmsprop_step, sigmoid, sigmoid_grad, tanh, tanh_grad
)
from trafficgc.utils.helpers import make_rng


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            total = 0.0
            for k in range(a.shape[1]):
                total += a[i, k] * b[k, j]
            out[i, j] = total
    return out


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(matmul(a, np.array([[1.0], [1.0]])), [[3.0], [7.0]])
    assert_array_equal(matmul(a, np.eye(2)), a)
    assert_array_equal(matmul(a, np.zeros((2, 3))), np.zeros((2, 3)))
    assert_array_equal(matmul(a, np.array([1.0, 1.0])), [3.0, 7.0])


def test_matmul_matches_triple_loop_exactly():
    rng = make_rng(1)
    for _ in range(100):
        r, n, c = rng.integers(1, 7, size=3)
        a = rng.normal(size=(r, n))
        b = rng.normal(size=(n, c))
        assert_array_equal(matmul(a, b), naive_matmul(a, b))


def test_linear_rows_and_vectors():
    rng = make_rng(2)
    weight = rng.normal(size=(3, 5))
    x = rng.normal(size=(4, 5))
    rows = linear(x, weight)
    assert_array_equal(rows, naive_matmul(x, weight.T))
    for b in range(4):
        assert_array_equal(linear(x[b], weight), rows[b])
    assert_allclose(rows, x @ weight.T, rtol=0, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_nan():
    with pytest.raises(NonFiniteError):
        matmul(np.array([[np.nan]]), np.ones((1, 1)))


def test_hadamard():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(hadamard(a, np.array([[0.0, 1.0], [1.0, 0.0]])), [[0.0, 2.0], [3.0, 0.0]])
    assert_array_equal(hadamard(a, np.ones((2, 2))), a)
    assert_array_equal(hadamard(a, np.zeros((2, 2))), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        hadamard(a, np.ones((2, 3)))


def test_activations():
    assert sigmoid(0.0) == 0.5
    assert tanh(0.0) == 0.0
    assert sigmoid_grad(0.0) == 0.25
    assert tanh_grad(0.0) == 1.0
    with np.errstate(all="raise"):
        low = sigmoid(np.array([-1000.0, -40.0]))
    assert np.all(np.isfinite(low))
    assert low[0] == 0.0
    assert low[1] == pytest.approx(4.248354255291589e-18, rel=1e-12)


def test_masked_linear_examples():
    identity = Parameter("W", np.ones((2, 2)), mask=np.eye(2))
    assert_array_equal(masked_linear_forward(identity, np.array([2.0, 5.0])), [2.0, 5.0])

    weight = Parameter("W", np.array([[1.0, 2.0], [3.0, 4.0]]), mask=np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert_array_equal(masked_linear_forward(weight, np.array([1.0, 1.0])), [1.0, 7.0])
    # Off-support values are zeroed on construction
    assert weight.value[0, 1] == 0.0


def test_masked_linear_backward_support_and_fd():
    rng = make_rng(4)
    mask = (rng.random((5, 5)) < 0.5).astype(float)
    weight = Parameter("W", rng.normal(size=(5, 5)), mask=mask)
    x = rng.normal(size=5)
    g = rng.normal(size=5)

    grad_w, grad_x = masked_linear_backward(weight, x, g)
    assert np.all(grad_w[mask == 0] == 0.0)
    assert_allclose(grad_x, (weight.value * mask).T @ g)

    weight.accumulate(grad_w)
    error = fd_gradient_check(lambda: float(g @ masked_linear_forward(weight, x)), [weight])
    assert error < 1e-6


def test_parameter_mask_shape_checked():
    with pytest.raises(ShapeError):
        Parameter("W", np.ones((2, 2)), mask=np.ones((3, 3)))


def test_fd_check_linear_function():
    rng = make_rng(0)
    weight = Parameter("W", rng.random((4, 4)))
    weight.grad = np.ones((4, 4))
    assert fd_gradient_check(lambda: float(np.sum(weight.value)), [weight]) < 1e-9


def test_fd_check_quadratic_and_fault_injection():
    rng = make_rng(3)
    weight = Parameter("W", rng.normal(size=(4, 4)))
    x = rng.normal(size=4)

    def f():
        y = weight.value @ x
        return float(y @ y)

    weight.grad = 2.0 * np.outer(weight.value @ x, x)
    assert fd_gradient_check(f, [weight]) < 1e-6

    weight.grad[1, 2] *= 2.0
    assert fd_gradient_check(f, [weight]) > 0.1


def test_fd_check_non_finite_objective():
    weight = Parameter("W", np.ones((1, 1)))
    with pytest.raises(NonFiniteError):
        fd_gradient_check(lambda: float("nan"), [weight])


def test_rmsprop_hand_step():
    param = Parameter("w", np.zeros((1, 1)))
    param.grad = np.ones((1, 1))
    rmsprop_step(param, OptimizerConfig(learning_rate=0.1, alpha=0.99, epsilon=0.0))
    assert param.rms_state[0, 0] == pytest.approx(0.01)
    assert param.value[0, 0] == pytest.approx(-1.0)
    assert_array_equal(param.grad, 0.0)


def test_rmsprop_zero_gradient():
    param = Parameter("w", np.array([[0.5, -2.0]]))
    param.rms_state = np.array([[1.0, 4.0]])
    rmsprop_step(param, OptimizerConfig(learning_rate=0.1, alpha=0.9))
    assert_array_equal(param.value, [[0.5, -2.0]])
    assert_allclose(param.rms_state, [[0.9, 3.6]])


def test_rmsprop_keeps_off_support_zero():
    rng = make_rng(8)
    mask = np.triu(np.ones((4, 4)))
    param = Parameter("w", rng.normal(size=(4, 4)), mask=mask)
    cfg = OptimizerConfig(learning_rate=0.05)
    for _ in range(50):
        # Raw gradients with off-support entries must not leak through
        param.grad = rng.normal(size=(4, 4))
        rmsprop_step(param, cfg)
        assert np.all(param.value[mask == 0] == 0.0)


def test_clip_grad_norm():
    a = Parameter("a", np.zeros(1))
    b = Parameter("b", np.zeros(1))
    a.grad[:] = 3.0
    b.grad[:] = 4.0
    assert clip_grad_norm([a, b], None) == 5.0
    assert a.grad[0] == 3.0

    assert clip_grad_norm([a, b], 1.0) == 5.0
    assert a.grad[0] == pytest.approx(0.6)
    assert b.grad[0] == pytest.approx(0.8)


def test_optimizer_config_validation():
    from trafficgc.errors import ConfigError
    with pytest.raises(ConfigError):
        OptimizerConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        OptimizerConfig(alpha=1.0)
