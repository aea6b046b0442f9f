"""
Packing a bias update
=====================

The adapted biases travel as 64-bit floats inside a small checksummed,
LZMA2-compressed container.
"""

import numpy as np

from biasfilter import codec
from biasfilter import network as N
from biasfilter.errors import PayloadError

config = N.NetConfig(512, 5)
count = N.count_params(config)[1]
biases = np.random.default_rng(0).normal(0, 0.02, count).astype(np.float32)

payload = codec.encode_payload(biases, config)
print(f"{count} biases -> {len(payload)} bytes on the wire ({8 * count} bytes before compression)")

decoded = codec.decode_payload(payload)
print("decoded config:", f"{decoded.n_filters}x{decoded.n_blocks}",
      "| bit exact:", decoded.biases.astype(np.float32).tobytes() == biases.tobytes())

# Any damaged byte is caught rather than silently producing a wrong filter
damaged = bytearray(payload)
damaged[40] ^= 0x20
try:
    codec.decode_payload(bytes(damaged))
except PayloadError as exc:
    print("damaged payload rejected:", type(exc).__name__, "-", exc)
