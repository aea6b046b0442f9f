import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasfilter import network as N
from biasfilter import tensor as T
from biasfilter.errors import ConfigMismatchError, ContractError, CorruptionError, FormatError, ShapeError, TruncationError


def zero_net(f=4, b=2):
    net = N.build_network(N.NetConfig(f, b))
    net.kernels = [np.zeros_like(k) for k in net.kernels]
    return net


def full_gradient_check(config, hw=8, seed=0):
    rng = np.random.default_rng(seed)
    net = N.build_network(config).astype(np.float64)
    N.set_biases(net, rng.normal(0, 0.1, N.count_params(config)[1]))
    x = rng.uniform(0, 1, (4, hw, hw))
    target = rng.uniform(0, 1, (3, hw, hw))

    out, cache = N.forward_cached(net, x)
    _, grad_out = T.mse_loss(out, target)
    k_grads, b_grads = N.backward(net, cache, grad_out)
    analytic = np.concatenate([g.ravel() for g in k_grads + b_grads])

    def loss(flat):
        probe = net.copy()
        N.unflatten_params(probe, flat)
        return T.mse_loss(N.forward(probe, x), target)[0]

    numeric = T.finite_diff_grad(loss, N.flatten_params(net), eps=1e-4)
    tol = np.maximum(1e-3 * np.abs(numeric), 1e-5)
    return np.abs(analytic - numeric), tol


@pytest.mark.parametrize(
    "f,b,bias",
    [(512, 5, 2563), (512, 4, 2051), (256, 6, 1539), (256, 5, 1283), (16, 3, 51)],
)
def test_bias_counts(f, b, bias):
    assert N.count_params(N.NetConfig(f, b))[1] == bias


def test_bias_count_formula_not_table_for_small_rows():
    # (B - 1) * F + 3 would give 323 here; every block carries a bias vector.
    assert N.count_params(N.NetConfig(64, 6))[1] == 387


def test_partition_covers_all_parameters():
    config = N.NetConfig(8, 3)
    net = N.build_network(config)
    n_kernel, n_bias = N.count_params(config)
    assert sum(k.size for k in net.kernels) == n_kernel
    assert sum(b.size for b in net.biases) == n_bias
    assert N.flatten_params(net).size == n_kernel + n_bias
    assert len(net.kernels) == len(net.biases) == config.n_blocks + 1


def test_layer_channels():
    net = N.build_network(N.NetConfig(6, 4))
    shapes = [k.shape[:2] for k in net.kernels]
    assert shapes == [(6, 4), (6, 6), (6, 6), (6, 6), (3, 6)]


@pytest.mark.parametrize("kwargs", [dict(n_filters=0, n_blocks=3), dict(n_filters=4, n_blocks=1), dict(n_filters=4, n_blocks=2, leaky_slope=1.5)])
def test_invalid_config(kwargs):
    with pytest.raises(ContractError):
        N.NetConfig(**kwargs)


def test_zero_net_is_identity_on_yuv():
    net = zero_net()
    x = np.random.default_rng(0).uniform(0, 1, (4, 9, 7)).astype(np.float32)
    np.testing.assert_array_equal(N.forward(net, x), x[:3])


def test_output_shape_full_patch():
    net = N.build_network(N.NetConfig(4, 2, seed=3))
    assert N.forward(net, np.zeros((4, 128, 128), np.float32)).shape == (3, 128, 128)


@settings(max_examples=15, deadline=None)
@given(h=st.integers(3, 20), w=st.integers(3, 20))
def test_shape_preserved(h, w):
    net = N.build_network(N.NetConfig(3, 2))
    assert N.forward(net, np.ones((4, h, w), np.float32)).shape == (3, h, w)


def test_forward_rejects_wrong_channels():
    net = zero_net()
    with pytest.raises(ShapeError):
        N.forward(net, np.zeros((3, 8, 8)))


def test_build_is_deterministic():
    a = N.build_network(N.NetConfig(8, 3, seed=11))
    b = N.build_network(N.NetConfig(8, 3, seed=11))
    c = N.build_network(N.NetConfig(8, 3, seed=12))
    assert N.network_to_bytes(a) == N.network_to_bytes(b)
    assert N.network_to_bytes(a) != N.network_to_bytes(c)


def test_fresh_biases_are_zero():
    net = N.build_network(N.NetConfig(512, 5))
    v = N.extract_biases(net)
    assert v.shape == (2563,) and not v.any()


def test_set_and_extract_biases_round_trip():
    net = N.build_network(N.NetConfig(8, 3))
    kernels_before = net.kernel_bytes()
    v = np.random.default_rng(1).standard_normal(27).astype(np.float32)
    N.set_biases(net, v)
    np.testing.assert_array_equal(N.extract_biases(net), v)
    assert net.kernel_bytes() == kernels_before


def test_set_biases_wrong_length_names_both():
    net = N.build_network(N.NetConfig(8, 3))
    with pytest.raises(ShapeError, match="27.*26"):
        N.set_biases(net, np.zeros(26))


def test_zero_bias_vector_keeps_identity():
    net = zero_net()
    N.set_biases(net, np.zeros(N.count_params(net.config)[1]))
    x = np.random.default_rng(2).uniform(0, 1, (4, 8, 8)).astype(np.float32)
    np.testing.assert_array_equal(N.forward(net, x), x[:3])


def test_gradient_tiny_network():
    err, tol = full_gradient_check(N.NetConfig(4, 2, seed=5), hw=6)
    assert np.all(err <= tol)


def test_gradient_bias_only_backward_matches_full():
    net = N.build_network(N.NetConfig(4, 3, seed=1))
    x = np.random.default_rng(0).uniform(0, 1, (4, 8, 8)).astype(np.float32)
    out, cache = N.forward_cached(net, x)
    g = np.ones_like(out)
    _, full = N.backward(net, cache, g)
    none, only = N.backward(net, cache, g, kernel_grads=False)
    assert none is None
    for a, b in zip(full, only):
        np.testing.assert_array_equal(a, b)


def test_checkpoint_round_trip(tmp_path):
    net = N.build_network(N.NetConfig(8, 3, seed=2))
    N.set_biases(net, np.linspace(-1, 1, 27))
    path = tmp_path / "net.bafn"
    N.save_checkpoint(net, path)
    back = N.load_checkpoint(path)
    assert back.config.same_architecture(net.config)
    assert N.network_to_bytes(back) == N.network_to_bytes(net)


def test_checkpoint_layout():
    net = N.build_network(N.NetConfig(4, 2))
    data = N.network_to_bytes(net)
    assert data[:4] == b"BAFN"
    n_kernel, n_bias = N.count_params(net.config)
    assert len(data) == 18 + 4 * (n_kernel + n_bias) + 4


def test_checkpoint_errors():
    data = bytearray(N.network_to_bytes(N.build_network(N.NetConfig(4, 2))))
    with pytest.raises(TruncationError):
        N.network_from_bytes(bytes(data[:10]))
    with pytest.raises(TruncationError):
        N.network_from_bytes(bytes(data[:-8]))
    bad = bytearray(data)
    bad[0] ^= 0xFF
    with pytest.raises(FormatError):
        N.network_from_bytes(bytes(bad))
    bad = bytearray(data)
    bad[40] ^= 0x01
    with pytest.raises(CorruptionError):
        N.network_from_bytes(bytes(bad))


def test_check_same_architecture():
    with pytest.raises(ConfigMismatchError, match="512x5.*256x5"):
        N.check_same_architecture(N.NetConfig(256, 5), N.NetConfig(512, 5))
