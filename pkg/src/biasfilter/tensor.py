"""Dense tensor kernels for the post-filter network.

Tensors are plain ``numpy`` arrays laid out channel-first (``C x H x W``).
Every op preserves the dtype of its inputs, so the same code runs the
float32 training path and the float64 gradient checks.

Only the layer set the filter network needs is covered: 3x3 same-size
convolution without bias, per-channel bias addition, LeakyReLU and the
mean squared error loss. Reverse-mode derivatives are written by hand
for each op; there is no generic autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, NumericalError, ShapeError

DEFAULT_LEAKY_SLOPE = 0.3
KERNEL_SIZE = 3


def _check_conv_shapes(x: np.ndarray, kernels: np.ndarray) -> None:
    if x.ndim != 3:
        raise ShapeError(f"conv input must be C x H x W, got shape {x.shape}")
    if kernels.ndim != 4 or kernels.shape[2:] != (KERNEL_SIZE, KERNEL_SIZE):
        raise ShapeError(f"kernels must be C_out x C_in x 3 x 3, got shape {kernels.shape}")
    if kernels.shape[1] != x.shape[0]:
        raise ShapeError(
            f"kernel expects {kernels.shape[1]} input channels, input has {x.shape[0]}"
        )


def im2col(x: np.ndarray) -> np.ndarray:
    """Gather the zero-padded 3x3 neighbourhood of every pixel.

    Returns an array of shape ``(C * 9, H * W)`` whose row ``c * 9 + dy * 3 + dx``
    holds ``x[c, y + dy - 1, x + dx - 1]`` for every output position.
    """
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, KERNEL_SIZE, KERNEL_SIZE, h, w), dtype=x.dtype)
    for dy in range(KERNEL_SIZE):
        for dx in range(KERNEL_SIZE):
            cols[:, dy, dx] = xp[:, dy : dy + h, dx : dx + w]
    return cols.reshape(c * KERNEL_SIZE * KERNEL_SIZE, h * w)


def col2im(cols: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back onto the image."""
    c, h, w = shape
    cols = cols.reshape(c, KERNEL_SIZE, KERNEL_SIZE, h, w)
    out = np.zeros((c, h + 2, w + 2), dtype=cols.dtype)
    for dy in range(KERNEL_SIZE):
        for dx in range(KERNEL_SIZE):
            out[:, dy : dy + h, dx : dx + w] += cols[:, dy, dx]
    return out[:, 1:-1, 1:-1]


def conv2d_forward(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """3x3 convolution (cross-correlation), stride 1, zero padding 1, no bias.

    Args:
        x: input of shape ``(C_in, H, W)``.
        kernels: weights of shape ``(C_out, C_in, 3, 3)``.

    Returns:
        Output of shape ``(C_out, H, W)``.
    """
    _check_conv_shapes(x, kernels)
    return conv2d_forward_cols(im2col(x), kernels, x.shape[1:])


def conv2d_forward_cols(cols: np.ndarray, kernels: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    c_out = kernels.shape[0]
    return (kernels.reshape(c_out, -1) @ cols).reshape(c_out, *hw)


def conv2d_backward(
    x: np.ndarray, kernels: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`conv2d_forward` wrt its input and its kernels."""
    _check_conv_shapes(x, kernels)
    expected = (kernels.shape[0], *x.shape[1:])
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out must have shape {expected}, got {grad_out.shape}")
    return conv2d_backward_cols(im2col(x), x.shape, kernels, grad_out)


def conv2d_backward_cols(
    cols: np.ndarray,
    x_shape: tuple[int, int, int],
    kernels: np.ndarray,
    grad_out: np.ndarray,
    need_input_grad: bool = True,
    need_kernel_grad: bool = True,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    c_out = kernels.shape[0]
    g = grad_out.reshape(c_out, -1)
    grad_kernels = (g @ cols.T).reshape(kernels.shape) if need_kernel_grad else None
    grad_x = None
    if need_input_grad:
        grad_x = col2im(kernels.reshape(c_out, -1).T @ g, x_shape)
    return grad_x, grad_kernels


def _check_bias(x: np.ndarray, bias: np.ndarray) -> None:
    if x.ndim != 3:
        raise ShapeError(f"bias_add input must be C x H x W, got shape {x.shape}")
    if bias.ndim != 1 or bias.shape[0] != x.shape[0]:
        raise ShapeError(f"bias of shape {bias.shape} does not match {x.shape[0]} channels")


def bias_add_forward(x: np.ndarray, bias: np.ndarray) -> np.ndarray:
    _check_bias(x, bias)
    return x + bias[:, None, None]


def bias_add_backward(grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(grad_input, grad_bias)``; the bias gradient is the spatial sum."""
    return grad_out, grad_out.sum(axis=(1, 2))


def leaky_relu(x: np.ndarray, slope: float = DEFAULT_LEAKY_SLOPE) -> np.ndarray:
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def leaky_relu_backward(
    x: np.ndarray, grad_out: np.ndarray, slope: float = DEFAULT_LEAKY_SLOPE
) -> np.ndarray:
    """Gradient of :func:`leaky_relu`, evaluated at the forward input ``x``."""
    return np.where(x >= 0, grad_out, grad_out * grad_out.dtype.type(slope))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient wrt ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff), dtype=np.float64))
    grad = diff * diff.dtype.type(2.0 / diff.size)
    return loss, grad


@dataclass
class AdamState:
    """Moment estimates for :func:`adam_step`, one entry per tracked parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, dtype=np.float32, **hyper) -> AdamState:
        return cls(np.zeros(size, dtype=dtype), np.zeros(size, dtype=dtype), **hyper)

    @property
    def size(self) -> int:
        return self.m.size


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update.

    Pure: ``params`` and ``state`` are left untouched and new arrays are returned.
    """
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeError(
            f"adam length mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}/{state.v.shape}"
        )
    if lr < 0:
        raise ContractError(f"learning rate must be non-negative, got {lr}")
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * np.square(grads)
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, t, b1, b2, state.epsilon)
    return new_params.astype(params.dtype, copy=False), new_state


def finite_diff_grad(
    f: Callable[[np.ndarray], float], params: np.ndarray, eps: float = 1e-4
) -> np.ndarray:
    """Central-difference gradient of a scalar function, evaluated in float64."""
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    p = np.array(params, dtype=np.float64).ravel()
    grad = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + eps
        f_plus = float(f(p.reshape(np.shape(params))))
        p[i] = orig - eps
        f_minus = float(f(p.reshape(np.shape(params))))
        p[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"non-finite function value at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2 * eps)
    return grad.reshape(np.shape(params))
