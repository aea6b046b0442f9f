"""Procedural test content standing in for camera footage.

Frames mix smooth gradients, hard-edged shapes, oriented sinusoidal texture
and a little sensor-like noise, so block quantization produces the usual
blocking and ringing. A sequence pans the same scene by a few pixels per
frame, which gives the temporal redundancy finetuning relies on.
"""

from __future__ import annotations

import numpy as np

from .yuv import Frame420, Sequence, to_bytes


def _scene(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 80 + 90 * (xx / w) * rng.uniform(0.3, 1.0) + 60 * (yy / h) * rng.uniform(-1, 1)
    for _ in range(rng.integers(6, 12)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.04, 0.25) * h, rng.uniform(0.04, 0.25) * w
        level = rng.uniform(-70, 70)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        img[mask] += level
    for _ in range(3):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.05, 0.35)
        amp = rng.uniform(4, 14)
        img += amp * np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta)) + rng.uniform(0, 6.3))
    return img


def make_frame_planes(rng: np.random.Generator, width: int, height: int, margin: int = 0):
    """Float luma and full-resolution chroma fields of size ``height+margin`` x ``width+margin``."""
    h, w = height + margin, width + margin
    y = _scene(rng, h, w)
    u = 128 + 0.35 * (_scene(rng, h, w) - 128)
    v = 128 + 0.35 * (_scene(rng, h, w) - 128)
    return y, u, v


def _to_frame(y, u, v, rng, noise: float) -> Frame420:
    h, w = y.shape
    y = y + rng.normal(0, noise, y.shape)
    cu = u.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    cv = v.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    return Frame420(to_bytes(y), to_bytes(cu), to_bytes(cv))


def make_sequence(
    width: int = 256,
    height: int = 256,
    n_frames: int = 10,
    seed: int = 0,
    pan: tuple[int, int] = (2, 4),
    noise: float = 1.5,
) -> Sequence:
    """A panning synthetic sequence; fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    dy, dx = pan
    margin = 2 * max(abs(dy), abs(dx)) * n_frames + 2
    y, u, v = make_frame_planes(rng, width, height, margin)
    frames = []
    for i in range(n_frames):
        # even offsets keep chroma siting identical across frames
        oy = (abs(dy) * i) // 2 * 2
        ox = (abs(dx) * i) // 2 * 2
        win = np.s_[oy : oy + height, ox : ox + width]
        frames.append(_to_frame(y[win], u[win], v[win], rng, noise))
    return Sequence(frames, width, height)


def make_image_set(n_images: int, width: int = 128, height: int = 128, seed: int = 0) -> list[Frame420]:
    """Independent still images, e.g. for pretraining."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_images):
        y, u, v = make_frame_planes(rng, width, height)
        out.append(_to_frame(y, u, v, rng, 1.5))
    return out


BUNDLED_SEQUENCE_SEED = 7
BUNDLED_IMAGE_SEED = 100


def bundled_sequence() -> Sequence:
    """The fixed 10-frame 256x256 sequence used for adaptation checks."""
    return make_sequence(256, 256, 10, seed=BUNDLED_SEQUENCE_SEED)


def bundled_images(n_images: int = 24) -> list[Frame420]:
    """The fixed 128x128 still-image set used for desk-scale pretraining."""
    return make_image_set(n_images, 128, 128, seed=BUNDLED_IMAGE_SEED)
