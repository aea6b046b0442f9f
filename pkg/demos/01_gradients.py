"""
Checking hand-written gradients
===============================

Every layer of the filter has a hand-written backward pass. Here we compare
them against central finite differences on a tiny float64 network.
"""

import numpy as np

from biasfilter import network as N
from biasfilter import tensor as T

rng = np.random.default_rng(0)

# A 3x3 convolution, stride 1, zero padded so the output keeps its size
x = rng.standard_normal((2, 5, 5))
k = rng.standard_normal((3, 2, 3, 3))
print("conv output shape:", T.conv2d_forward(x, k).shape)

# Gradient of a random linear read-out of the conv, both ways
g = rng.standard_normal((3, 5, 5))
_, grad_k = T.conv2d_backward(x, k, g)
numeric = T.finite_diff_grad(lambda p: np.sum(T.conv2d_forward(x, p) * g), k)
print("conv kernel grad, max abs error:", np.max(np.abs(grad_k - numeric)))

# The full network: 4 input planes (Y, U, V, QP), 3 output planes
net = N.build_network(N.NetConfig(n_filters=8, n_blocks=3, seed=1)).astype(np.float64)
N.set_biases(net, rng.normal(0, 0.1, N.count_params(net.config)[1]))
inp = rng.uniform(0, 1, (4, 8, 8))
target = rng.uniform(0, 1, (3, 8, 8))

out, cache = N.forward_cached(net, inp)
_, grad_out = T.mse_loss(out, target)
k_grads, b_grads = N.backward(net, cache, grad_out)
analytic = np.concatenate([v.ravel() for v in k_grads + b_grads])


def loss(flat):
    probe = net.copy()
    N.unflatten_params(probe, flat)
    return T.mse_loss(N.forward(probe, inp), target)[0]


# a small step keeps the probe away from LeakyReLU kinks
numeric = T.finite_diff_grad(loss, N.flatten_params(net), eps=1e-6)
rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-2)
print(f"network: {analytic.size} parameters, worst scaled error {rel.max():.2e}")

# Adam is a pure function: it hands back new parameters and a new state
state = T.AdamState.zeros(3)
params, state = T.adam_step(np.zeros(3), np.array([1.0, -2.0, 0.5]), state, lr=1e-3)
print("first Adam step:", params, "t =", state.t)
