"""
The filter network and its parameter split
==========================================

Kernels carry almost all of the parameters. Biases are a tiny fraction,
which is what makes sending only the biases cheap.
"""

import numpy as np

from biasfilter import network as N

for f, b in [(512, 5), (512, 4), (256, 6), (256, 5), (128, 7), (64, 6), (16, 3)]:
    kernels, biases = N.count_params(N.NetConfig(f, b))
    share = 100 * biases / (kernels + biases)
    print(f"{f:>3}x{b}: {kernels:>9} kernel weights, {biases:>5} biases ({share:.3f}% of total)")

# With all kernels zeroed the residual design passes Y, U, V straight through
net = N.build_network(N.NetConfig(16, 3))
net.kernels = [np.zeros_like(k) for k in net.kernels]
x = np.random.default_rng(0).uniform(0, 1, (4, 32, 32)).astype(np.float32)
print("zero net is identity:", np.array_equal(N.forward(net, x), x[:3]))

# Biases come out as one flat vector and go back in the same order
net = N.build_network(N.NetConfig(16, 3, seed=4))
before = net.kernel_bytes()
N.set_biases(net, np.linspace(-1, 1, N.count_params(net.config)[1]))
print("bias vector length:", N.extract_biases(net).size, "| kernels untouched:", net.kernel_bytes() == before)

# Checkpoints are a small self-describing binary file
blob = N.network_to_bytes(net)
print("checkpoint bytes:", len(blob), "| round trip exact:", N.network_to_bytes(N.network_from_bytes(blob)) == blob)
