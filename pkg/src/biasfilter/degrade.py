"""Block-DCT quantization as a stand-in for a real video encoder.

Each plane is split into 8x8 blocks, transformed with an orthonormal
DCT-II, uniformly quantized with step ``2 ** ((qp - 4) / 6)`` (the step
doubles every 6 QP, as in block-based codecs), dequantized and inverse
transformed. No prediction, motion or entropy coding is modelled.

The count of nonzero quantized coefficients doubles as a crude bitrate
proxy so that rate-distortion curves can be produced end to end. It is
synthetic and only useful to exercise BD-rate plumbing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .errors import ContractError
from .yuv import QP_MAX, Frame420, Sequence, round_half_away, to_bytes

BLOCK_SIZE = 8
BITS_PER_COEFFICIENT = 6.0
FRAME_RATE = 30.0


@dataclass(frozen=True)
class DegradeConfig:
    qp: int
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not 0 <= self.qp <= QP_MAX:
            raise ContractError(f"qp must lie in 0..{QP_MAX}, got {self.qp}")
        if self.block_size != BLOCK_SIZE:
            raise ContractError(f"block_size is fixed at {BLOCK_SIZE}")

    @property
    def step(self) -> float:
        return quant_step(self.qp)


def quant_step(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


def degrade_plane(plane: np.ndarray, step: float) -> tuple[np.ndarray, int]:
    """Quantize one plane; returns the reconstructed bytes and the nonzero level count."""
    h, w = plane.shape
    b = BLOCK_SIZE
    ph, pw = -(-h // b) * b, -(-w // b) * b
    x = np.asarray(plane, dtype=np.float64)
    if (ph, pw) != (h, w):
        x = np.pad(x, ((0, ph - h), (0, pw - w)), mode="reflect")
    blocks = x.reshape(ph // b, b, pw // b, b).swapaxes(1, 2)
    coef = dctn(blocks, axes=(2, 3), norm="ortho")
    levels = round_half_away(coef / step)
    recon = idctn(levels * step, axes=(2, 3), norm="ortho")
    recon = recon.swapaxes(1, 2).reshape(ph, pw)[:h, :w]
    return to_bytes(recon), int(np.count_nonzero(levels))


def degrade_frame_stats(frame: Frame420, config: DegradeConfig) -> tuple[Frame420, int]:
    step = config.step
    planes, nonzero = [], 0
    for p in frame.planes:
        out, nz = degrade_plane(p, step)
        planes.append(out)
        nonzero += nz
    return Frame420(*planes), nonzero


def degrade_frame(frame: Frame420, config: DegradeConfig) -> Frame420:
    return degrade_frame_stats(frame, config)[0]


def degrade_sequence(seq: Sequence, qp: int) -> Sequence:
    return degrade_sequence_stats(seq, qp)[0]


def degrade_sequence_stats(seq: Sequence, qp: int) -> tuple[Sequence, float]:
    """Degrade every frame; also return the pseudo bitrate in kbit/s."""
    config = DegradeConfig(qp)
    frames, nonzero = [], 0
    for f in seq.frames:
        out, nz = degrade_frame_stats(f, config)
        frames.append(out)
        nonzero += nz
    return Sequence(frames, seq.width, seq.height, qp), pseudo_bitrate(nonzero, len(seq))


def pseudo_bitrate(nonzero: int, n_frames: int) -> float:
    if n_frames == 0:
        return 0.0
    return nonzero * BITS_PER_COEFFICIENT / n_frames * FRAME_RATE / 1000.0
