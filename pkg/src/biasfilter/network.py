"""Residual post-processing filter network.

Topology for ``NetConfig(n_filters=F, n_blocks=B)``::

    x (4 ch: Y, U, V, QP)
    h0 = lrelu(conv(x) + b0)                         4 -> F
    hi = lrelu(conv(h{i-1}) + bi) + h{i-1}           F -> F, i = 1 .. B-1
    y  = conv(h{B-1}) + bB + x[:3]                   F -> 3, global skip

Convolution kernels and bias vectors are stored separately so that
finetuning can update the biases alone.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigMismatchError, ContractError, CorruptionError, FormatError, ShapeError, TruncationError

IN_CHANNELS = 4
OUT_CHANNELS = 3

CHECKPOINT_MAGIC = b"BAFN"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHIIf")


@dataclass(frozen=True)
class NetConfig:
    n_filters: int
    n_blocks: int
    leaky_slope: float = T.DEFAULT_LEAKY_SLOPE
    seed: int = 0

    def __post_init__(self):
        if int(self.n_filters) != self.n_filters or self.n_filters < 1:
            raise ContractError(f"n_filters must be a positive integer, got {self.n_filters}")
        if int(self.n_blocks) != self.n_blocks or self.n_blocks < 2:
            raise ContractError(f"n_blocks must be an integer >= 2, got {self.n_blocks}")
        if not 0 < self.leaky_slope < 1:
            raise ContractError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    @property
    def label(self) -> str:
        return f"{self.n_filters}x{self.n_blocks}"

    def same_architecture(self, other: NetConfig) -> bool:
        return (self.n_filters, self.n_blocks) == (other.n_filters, other.n_blocks)

    def layer_channels(self) -> list[tuple[int, int]]:
        """``(c_in, c_out)`` of every conv layer in network order."""
        f = self.n_filters
        return [(IN_CHANNELS, f)] + [(f, f)] * (self.n_blocks - 1) + [(f, OUT_CHANNELS)]


def count_params(config: NetConfig) -> tuple[int, int]:
    """Return ``(kernel_count, bias_count)`` for a configuration."""
    f, b = config.n_filters, config.n_blocks
    kernel_count = 9 * (IN_CHANNELS * f + (b - 1) * f * f + OUT_CHANNELS * f)
    bias_count = b * f + OUT_CHANNELS
    return kernel_count, bias_count


@dataclass
class FilterNet:
    config: NetConfig
    kernels: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        layers = self.config.layer_channels()
        if len(self.kernels) != len(layers) or len(self.biases) != len(layers):
            raise ShapeError(
                f"{self.config.label} needs {len(layers)} layers, got "
                f"{len(self.kernels)} kernels and {len(self.biases)} biases"
            )
        for i, ((c_in, c_out), k, b) in enumerate(zip(layers, self.kernels, self.biases)):
            if k.shape != (c_out, c_in, 3, 3) or b.shape != (c_out,):
                raise ShapeError(f"layer {i}: kernel {k.shape} / bias {b.shape} do not fit {c_in}->{c_out}")

    @property
    def dtype(self) -> np.dtype:
        return self.kernels[0].dtype

    def copy(self) -> FilterNet:
        return FilterNet(self.config, [k.copy() for k in self.kernels], [b.copy() for b in self.biases])

    def astype(self, dtype) -> FilterNet:
        return FilterNet(
            self.config,
            [k.astype(dtype) for k in self.kernels],
            [b.astype(dtype) for b in self.biases],
        )

    def kernel_bytes(self) -> bytes:
        return b"".join(k.astype("<f4").tobytes() for k in self.kernels)


def build_network(config: NetConfig, dtype=np.float32) -> FilterNet:
    """Create a network with fan-in scaled uniform kernels and zero biases.

    Each kernel entry is drawn from ``U(-a, a)`` with ``a = sqrt(3 / fan_in)``,
    which gives unit-variance pre-activations for unit-variance inputs.
    """
    rng = np.random.default_rng(config.seed)
    kernels, biases = [], []
    for c_in, c_out in config.layer_channels():
        bound = np.sqrt(3.0 / (9 * c_in))
        kernels.append(rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)).astype(dtype))
        biases.append(np.zeros(c_out, dtype=dtype))
    return FilterNet(config, kernels, biases)


def _check_input(x: np.ndarray) -> None:
    if x.ndim != 3 or x.shape[0] != IN_CHANNELS:
        raise ShapeError(f"network input must be 4 x H x W, got shape {x.shape}")
    if x.shape[1] < 3 or x.shape[2] < 3:
        raise ShapeError(f"network input must be at least 3x3 spatially, got {x.shape[1:]}")


@dataclass
class ForwardCache:
    x_shape: tuple[int, int, int]
    cols: list[np.ndarray] = field(default_factory=list)
    pre_act: list[np.ndarray] = field(default_factory=list)
    hidden_shape: tuple[int, int, int] | None = None


def forward_cached(net: FilterNet, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    _check_input(x)
    x = x.astype(net.dtype, copy=False)
    hw = x.shape[1:]
    slope = net.config.leaky_slope
    cache = ForwardCache(x.shape)
    h = x
    n_hidden = net.config.n_blocks
    for i in range(n_hidden):
        cols = T.im2col(h)
        z = T.conv2d_forward_cols(cols, net.kernels[i], hw)
        z += net.biases[i][:, None, None]
        a = T.leaky_relu(z, slope)
        h = a if i == 0 else a + h
        cache.cols.append(cols)
        cache.pre_act.append(z)
    cache.hidden_shape = h.shape
    cols = T.im2col(h)
    out = T.conv2d_forward_cols(cols, net.kernels[-1], hw)
    out += net.biases[-1][:, None, None]
    out += x[:OUT_CHANNELS]
    cache.cols.append(cols)
    return out, cache


def forward(net: FilterNet, x: np.ndarray) -> np.ndarray:
    """Filter one ``4 x H x W`` input into a ``3 x H x W`` output."""
    return forward_cached(net, x)[0]


def backward(
    net: FilterNet, cache: ForwardCache, grad_out: np.ndarray, kernel_grads: bool = True
) -> tuple[list[np.ndarray] | None, list[np.ndarray]]:
    """Back-propagate ``grad_out`` through the cached forward pass.

    Returns ``(kernel_grads, bias_grads)`` in network order. With
    ``kernel_grads=False`` the kernel gradients are skipped entirely and
    ``None`` is returned in their place.
    """
    slope = net.config.leaky_slope
    n_hidden = net.config.n_blocks
    k_grads: list[np.ndarray | None] = [None] * (n_hidden + 1)
    b_grads: list[np.ndarray | None] = [None] * (n_hidden + 1)

    _, b_grads[-1] = T.bias_add_backward(grad_out)
    g_h, k_grads[-1] = T.conv2d_backward_cols(
        cache.cols[-1], cache.hidden_shape, net.kernels[-1], grad_out, need_kernel_grad=kernel_grads
    )
    for i in range(n_hidden - 1, -1, -1):
        g_z = T.leaky_relu_backward(cache.pre_act[i], g_h, slope)
        _, b_grads[i] = T.bias_add_backward(g_z)
        in_shape = cache.x_shape if i == 0 else cache.hidden_shape
        g_in, k_grads[i] = T.conv2d_backward_cols(
            cache.cols[i], in_shape, net.kernels[i], g_z,
            need_input_grad=i > 0, need_kernel_grad=kernel_grads,
        )
        if i > 0:
            g_h = g_in + g_h
    return (k_grads if kernel_grads else None), b_grads


def extract_biases(net: FilterNet) -> np.ndarray:
    """All bias vectors concatenated in network order."""
    return np.concatenate(net.biases)


def set_biases(net: FilterNet, biases: np.ndarray) -> None:
    """Install a flat bias vector in place; kernels are not touched."""
    biases = np.asarray(biases)
    _, expected = count_params(net.config)
    if biases.ndim != 1 or biases.size != expected:
        raise ShapeError(
            f"bias vector for {net.config.label} must have length {expected}, got {biases.size}"
        )
    offset = 0
    for i, b in enumerate(net.biases):
        net.biases[i] = biases[offset : offset + b.size].astype(b.dtype)
        offset += b.size


def flatten_params(net: FilterNet, biases_only: bool = False) -> np.ndarray:
    parts = net.biases if biases_only else net.kernels + net.biases
    return np.concatenate([p.ravel() for p in parts])


def unflatten_params(net: FilterNet, flat: np.ndarray, biases_only: bool = False) -> None:
    """Inverse of :func:`flatten_params`; writes into ``net`` in place."""
    if biases_only:
        set_biases(net, flat)
        return
    offset = 0
    for group in (net.kernels, net.biases):
        for i, p in enumerate(group):
            group[i] = flat[offset : offset + p.size].reshape(p.shape).astype(p.dtype)
            offset += p.size
    if offset != flat.size:
        raise ShapeError(f"flat parameter vector has {flat.size} entries, network has {offset}")


def check_same_architecture(expected: NetConfig, actual: NetConfig) -> None:
    if not expected.same_architecture(actual):
        raise ConfigMismatchError(
            f"network config {actual.label} does not match expected {expected.label}"
        )


# -- checkpoint file ---------------------------------------------------------

def network_to_bytes(net: FilterNet) -> bytes:
    c = net.config
    body = bytearray(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, c.n_filters, c.n_blocks, c.leaky_slope))
    for k in net.kernels:
        body += k.astype("<f4").tobytes()
    for b in net.biases:
        body += b.astype("<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    return bytes(body)


def network_from_bytes(data: bytes) -> FilterNet:
    if len(data) < _CKPT_HEADER.size + 4:
        raise TruncationError(f"checkpoint of {len(data)} bytes is shorter than its header")
    magic, version, n_filters, n_blocks, slope = _CKPT_HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        config = NetConfig(n_filters, n_blocks, leaky_slope=float(slope))
    except ContractError as exc:
        raise FormatError(f"invalid checkpoint header: {exc}") from exc
    n_kernel, n_bias = count_params(config)
    expected = _CKPT_HEADER.size + 4 * (n_kernel + n_bias) + 4
    if len(data) < expected:
        raise TruncationError(f"checkpoint has {len(data)} bytes, {config.label} needs {expected}")
    if len(data) > expected:
        raise FormatError(f"checkpoint has {len(data) - expected} trailing bytes")
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[: expected - 4]) != crc:
        raise CorruptionError("checkpoint CRC-32 mismatch")

    values = np.frombuffer(data, dtype="<f4", count=n_kernel + n_bias, offset=_CKPT_HEADER.size)
    values = values.astype(np.float32)
    kernels, biases = [], []
    offset = 0
    for c_in, c_out in config.layer_channels():
        size = c_out * c_in * 9
        kernels.append(values[offset : offset + size].reshape(c_out, c_in, 3, 3))
        offset += size
    for _, c_out in config.layer_channels():
        biases.append(values[offset : offset + c_out])
        offset += c_out
    return FilterNet(config, kernels, biases)


def save_checkpoint(net: FilterNet, path) -> None:
    Path(path).write_bytes(network_to_bytes(net))


def load_checkpoint(path) -> FilterNet:
    return network_from_bytes(Path(path).read_bytes())
