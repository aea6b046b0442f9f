import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasfilter import tensor as T
from biasfilter.errors import ContractError, NumericalError, ShapeError


def naive_conv(x, k):
    c_in, h, w = x.shape
    c_out = k.shape[0]
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for y in range(h):
            for xx in range(w):
                acc = 0.0
                for i in range(c_in):
                    for dy in range(3):
                        for dx in range(3):
                            yy, xc = y + dy - 1, xx + dx - 1
                            if 0 <= yy < h and 0 <= xc < w:
                                acc += x[i, yy, xc] * k[o, i, dy, dx]
                out[o, y, xx] = acc
    return out


def assert_grad_close(analytic, numeric, rel=1e-3, abs_=1e-5):
    analytic = np.asarray(analytic, dtype=np.float64)
    tol = np.maximum(rel * np.abs(numeric), abs_)
    assert np.all(np.abs(analytic - numeric) <= tol), np.max(np.abs(analytic - numeric))


# -- conv2d ---------------------------------------------------------------------

def test_identity_kernel_passes_input_through():
    x = np.arange(16, dtype=np.float32).reshape(1, 4, 4)
    k = np.zeros((1, 1, 3, 3), dtype=np.float32)
    k[0, 0, 1, 1] = 1
    np.testing.assert_array_equal(T.conv2d_forward(x, k), x)


def test_all_ones_counts_overlap():
    out = T.conv2d_forward(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))[0]
    assert out[1, 1] == 9
    assert out[0, 0] == out[0, 2] == out[2, 0] == out[2, 2] == 4
    assert out[0, 1] == out[1, 0] == out[1, 2] == out[2, 1] == 6


def test_conv_matches_naive_loops():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 5, 5)).astype(np.float32)
    k = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    expected = naive_conv(x.astype(np.float64), k.astype(np.float64))
    np.testing.assert_allclose(T.conv2d_forward(x, k), expected, rtol=1e-6, atol=1e-6)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        T.conv2d_forward(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ShapeError):
        T.conv2d_forward(np.zeros((2, 4, 4)), np.zeros((1, 2, 5, 5)))


def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(1)
    x, k = rng.standard_normal((2, 4, 4)), rng.standard_normal((3, 2, 3, 3))
    gx, gk = T.conv2d_backward(x, k, np.zeros((3, 4, 4)))
    assert not gx.any() and not gk.any()


def test_conv_backward_identity_kernel():
    rng = np.random.default_rng(2)
    x, g = rng.standard_normal((1, 4, 4)), rng.standard_normal((1, 4, 4))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1
    gx, _ = T.conv2d_backward(x, k, g)
    np.testing.assert_array_equal(gx, g)


def test_conv_backward_shape_mismatch():
    with pytest.raises(ShapeError):
        T.conv2d_backward(np.zeros((1, 4, 4)), np.zeros((2, 1, 3, 3)), np.zeros((1, 4, 4)))


@pytest.mark.parametrize("c_in,c_out,h,w", [(1, 1, 4, 4), (2, 3, 5, 4), (4, 2, 8, 8)])
def test_conv_backward_matches_finite_differences(c_in, c_out, h, w):
    rng = np.random.default_rng(c_in * 10 + c_out)
    x = rng.standard_normal((c_in, h, w))
    k = rng.standard_normal((c_out, c_in, 3, 3))
    g = rng.standard_normal((c_out, h, w))
    gx, gk = T.conv2d_backward(x, k, g)
    num_x = T.finite_diff_grad(lambda p: np.sum(T.conv2d_forward(p, k) * g), x)
    num_k = T.finite_diff_grad(lambda p: np.sum(T.conv2d_forward(x, p) * g), k)
    assert_grad_close(gx, num_x)
    assert_grad_close(gk, num_k)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_conv_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2, 5, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    lhs = T.conv2d_forward(a * x + b * y, k)
    rhs = a * T.conv2d_forward(x, k) + b * T.conv2d_forward(y, k)
    np.testing.assert_allclose(lhs, rhs, atol=1e-5)


# -- bias, activation, loss ------------------------------------------------

def test_bias_add():
    x = np.random.default_rng(3).standard_normal((2, 3, 3)).astype(np.float32)
    np.testing.assert_array_equal(T.bias_add_forward(x, np.zeros(2, np.float32)), x)
    out = T.bias_add_forward(np.zeros((2, 3, 3)), np.array([1.5, -2.0]))
    assert np.all(out[0] == 1.5) and np.all(out[1] == -2.0)
    with pytest.raises(ShapeError):
        T.bias_add_forward(x, np.zeros(3))


def test_bias_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    x, bias, g = rng.standard_normal((3, 4, 5)), rng.standard_normal(3), rng.standard_normal((3, 4, 5))
    gx, gb = T.bias_add_backward(g)
    np.testing.assert_array_equal(gx, g)
    num = T.finite_diff_grad(lambda p: np.sum(T.bias_add_forward(x, p) * g), bias)
    assert_grad_close(gb, num)


def test_leaky_relu_values():
    x = np.array([2.0, -1.0, 0.0])
    np.testing.assert_allclose(T.leaky_relu(x, 0.3), [2.0, -0.3, 0.0])
    g = T.leaky_relu_backward(np.array([-1.0, 2.0]), np.array([1.0, 1.0]), 0.3)
    np.testing.assert_allclose(g, [0.3, 1.0])


def test_leaky_relu_slope_one_is_identity():
    x = np.random.default_rng(5).standard_normal((3, 4, 4))
    np.testing.assert_array_equal(T.leaky_relu(x, 1.0), x)


def test_leaky_relu_grad_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 4, 4))
    x[np.abs(x) < 1e-2] = 0.5  # keep away from the kink
    g = rng.standard_normal(x.shape)
    num = T.finite_diff_grad(lambda p: np.sum(T.leaky_relu(p, 0.3) * g), x)
    assert_grad_close(T.leaky_relu_backward(x, g, 0.3), num)


def test_mse_loss():
    p = np.random.default_rng(7).standard_normal((3, 4, 4))
    loss, grad = T.mse_loss(p, p.copy())
    assert loss == 0 and not grad.any()
    loss, _ = T.mse_loss(p + 0.25, p)
    assert loss == pytest.approx(0.0625, rel=1e-12)
    with pytest.raises(ShapeError):
        T.mse_loss(p, p[:2])


def test_mse_grad_matches_finite_differences():
    rng = np.random.default_rng(8)
    p, t = rng.standard_normal((3, 4, 4)), rng.standard_normal((3, 4, 4))
    _, grad = T.mse_loss(p, t)
    num = T.finite_diff_grad(lambda q: T.mse_loss(q, t)[0], p)
    np.testing.assert_allclose(grad, num, rtol=1e-4, atol=1e-9)


def test_ops_preserve_float32():
    x = np.ones((2, 4, 4), np.float32)
    k = np.ones((3, 2, 3, 3), np.float32)
    assert T.conv2d_forward(x, k).dtype == np.float32
    assert T.leaky_relu(x).dtype == np.float32
    assert T.mse_loss(x, x)[1].dtype == np.float32


def test_ops_are_pure():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 6, 6)).astype(np.float32)
    k = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    x0, k0 = x.copy(), k.copy()
    a = T.conv2d_forward(x, k)
    b = T.conv2d_forward(x, k)
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(x, x0)
    np.testing.assert_array_equal(k, k0)


# -- Adam ---------------------------------------------------------------------

def reference_adam(p, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        p = p - lr * mh / (math.sqrt(vh) + eps)
        traj.append(p)
    return traj


def test_adam_zero_grad_keeps_params():
    p = np.array([1.0, -2.0, 3.0], np.float32)
    new, state = T.adam_step(p, np.zeros(3, np.float32), T.AdamState.zeros(3), 1e-3)
    np.testing.assert_array_equal(new, p)
    assert state.t == 1


def test_adam_first_step_is_minus_lr():
    new, _ = T.adam_step(np.zeros(1), np.ones(1), T.AdamState.zeros(1, dtype=np.float64), 1e-3)
    assert new[0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_matches_reference_trajectory():
    # f(p) = (p - 3)^2
    grad_fn = lambda p: 2 * (p - 3.0)
    expected = reference_adam(0.5, grad_fn, 5, lr=0.1)
    p = np.array([0.5])
    state = T.AdamState.zeros(1, dtype=np.float64)
    for want in expected:
        p, state = T.adam_step(p, grad_fn(p), state, 0.1)
        assert abs(p[0] - want) <= 1e-7
    assert state.t == 5


def test_adam_lr_zero_advances_moments_only():
    p = np.array([1.0, 2.0], np.float32)
    g = np.array([0.5, -1.0], np.float32)
    new, state = T.adam_step(p, g, T.AdamState.zeros(2), 0.0)
    np.testing.assert_array_equal(new, p)
    assert state.t == 1 and state.m.any() and state.v.any()


def test_adam_length_mismatch():
    with pytest.raises(ShapeError):
        T.adam_step(np.zeros(3), np.zeros(2), T.AdamState.zeros(3), 1e-3)


def test_adam_does_not_mutate_inputs():
    p, g = np.ones(4, np.float32), np.ones(4, np.float32)
    state = T.AdamState.zeros(4)
    T.adam_step(p, g, state, 1e-2)
    assert state.t == 0 and not state.m.any()
    np.testing.assert_array_equal(p, 1)


# -- finite differences ----------------------------------------------------

def test_finite_diff_square():
    g = T.finite_diff_grad(lambda p: float(p[0] ** 2), np.array([3.0]), 1e-4)
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_finite_diff_constant():
    assert not T.finite_diff_grad(lambda p: 4.2, np.ones(5)).any()


def test_finite_diff_rejects_bad_input():
    with pytest.raises(ContractError):
        T.finite_diff_grad(lambda p: 0.0, np.ones(2), eps=0)
    with pytest.raises(NumericalError):
        T.finite_diff_grad(lambda p: float("nan"), np.ones(2))
