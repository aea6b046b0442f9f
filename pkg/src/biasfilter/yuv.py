"""Raw planar YUV 4:2:0 (I420) frames, chroma resampling and patching."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError

PATCH_SIZE = 128
QP_MAX = 63


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_bytes(x: np.ndarray) -> np.ndarray:
    """Round half away from zero and clamp into ``uint8``."""
    return np.clip(round_half_away(np.asarray(x, dtype=np.float64)), 0, 255).astype(np.uint8)


@dataclass
class Frame420:
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        h, w = self.y.shape
        if h % 2 or w % 2:
            raise ContractError(f"frame dimensions must be even, got {w}x{h}")
        for name, plane in (("u", self.u), ("v", self.v)):
            if plane.shape != (h // 2, w // 2):
                raise ContractError(f"{name} plane is {plane.shape}, expected {(h // 2, w // 2)}")
        for plane in (self.y, self.u, self.v):
            if plane.dtype != np.uint8:
                raise ContractError(f"planes must be uint8, got {plane.dtype}")

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.y, self.u, self.v

    def tobytes(self) -> bytes:
        return self.y.tobytes() + self.u.tobytes() + self.v.tobytes()

    def crop(self, top: int, left: int, height: int, width: int) -> Frame420:
        """Region with even-aligned origin and size."""
        if top % 2 or left % 2:
            raise ContractError(f"crop origin must be even, got ({top}, {left})")
        ct, cl, ch, cw = top // 2, left // 2, height // 2, width // 2
        return Frame420(
            self.y[top : top + height, left : left + width].copy(),
            self.u[ct : ct + ch, cl : cl + cw].copy(),
            self.v[ct : ct + ch, cl : cl + cw].copy(),
        )


@dataclass
class Sequence:
    frames: list[Frame420]
    width: int
    height: int
    qp: int | None = None

    def __post_init__(self):
        for i, f in enumerate(self.frames):
            if (f.width, f.height) != (self.width, self.height):
                raise ContractError(
                    f"frame {i} is {f.width}x{f.height}, sequence is {self.width}x{self.height}"
                )

    def __len__(self) -> int:
        return len(self.frames)


def frame_size(width: int, height: int) -> int:
    return width * height * 3 // 2


def _check_dims(width: int, height: int) -> None:
    if width <= 0 or height <= 0 or width % 2 or height % 2:
        raise ContractError(f"I420 dimensions must be positive and even, got {width}x{height}")


def frame_from_bytes(buf: bytes | np.ndarray, width: int, height: int) -> Frame420:
    data = np.frombuffer(buf, dtype=np.uint8)
    n_y = width * height
    n_c = n_y // 4
    return Frame420(
        data[:n_y].reshape(height, width).copy(),
        data[n_y : n_y + n_c].reshape(height // 2, width // 2).copy(),
        data[n_y + n_c : n_y + 2 * n_c].reshape(height // 2, width // 2).copy(),
    )


def read_yuv420(path, width: int, height: int, max_frames: int | None = None, qp: int | None = None) -> Sequence:
    """Read a headerless I420 file.

    Raises:
        ContractError: if the dimensions are odd or non-positive.
        FormatError: if the file size is not a whole number of frames.
    """
    _check_dims(width, height)
    data = Path(path).read_bytes()
    size = frame_size(width, height)
    if len(data) % size:
        raise FormatError(
            f"{path}: {len(data)} bytes is not a multiple of the {width}x{height} I420 frame size {size}"
        )
    n = len(data) // size
    if max_frames is not None:
        n = min(n, max_frames)
    frames = [frame_from_bytes(data[i * size : (i + 1) * size], width, height) for i in range(n)]
    return Sequence(frames, width, height, qp)


def write_yuv420(sequence: Sequence, path) -> None:
    with open(path, "wb") as fh:
        for frame in sequence.frames:
            fh.write(frame.tobytes())


def upsample_chroma(plane: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling: each sample fills a 2x2 block."""
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)


def downsample_chroma(plane: np.ndarray) -> np.ndarray:
    """2x2 block mean, rounded half away from zero and clamped to bytes."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    if h % 2 or w % 2:
        raise ContractError(f"downsample_chroma needs even dimensions, got {w}x{h}")
    mean = plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    return to_bytes(mean)


def make_input_tensor(region: Frame420, qp: int) -> np.ndarray:
    """Network input ``4 x H x W``: Y, upsampled U and V (all /255) and a QP/63 plane."""
    if not 0 <= qp <= QP_MAX:
        raise ContractError(f"qp must lie in 0..{QP_MAX}, got {qp}")
    out = np.empty((4, region.height, region.width), dtype=np.float32)
    out[0] = region.y / np.float32(255)
    out[1] = upsample_chroma(region.u) / np.float32(255)
    out[2] = upsample_chroma(region.v) / np.float32(255)
    out[3] = np.float32(qp / QP_MAX)
    return out


def make_target_tensor(region: Frame420) -> np.ndarray:
    """Ground-truth ``3 x H x W`` tensor in the network's output layout."""
    out = np.empty((3, region.height, region.width), dtype=np.float32)
    out[0] = region.y / np.float32(255)
    out[1] = upsample_chroma(region.u) / np.float32(255)
    out[2] = upsample_chroma(region.v) / np.float32(255)
    return out


def grid_shape(width: int, height: int, patch_size: int = PATCH_SIZE) -> tuple[int, int]:
    """``(rows, cols)`` of the patch grid covering a frame."""
    return math.ceil(height / patch_size), math.ceil(width / patch_size)


def _pad_plane(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = plane.shape
    return np.pad(plane, ((0, height - h), (0, width - w)), mode="reflect")


def pad_frame(frame: Frame420, patch_size: int = PATCH_SIZE) -> Frame420:
    """Reflect-pad a frame on the bottom/right to a multiple of ``patch_size``."""
    rows, cols = grid_shape(frame.width, frame.height, patch_size)
    ph, pw = rows * patch_size, cols * patch_size
    if (ph, pw) == (frame.height, frame.width):
        return frame
    return Frame420(
        _pad_plane(frame.y, ph, pw),
        _pad_plane(frame.u, ph // 2, pw // 2),
        _pad_plane(frame.v, ph // 2, pw // 2),
    )


def extract_patches(
    frame: Frame420,
    mode: str = "grid",
    rng: np.random.Generator | None = None,
    n: int | None = None,
    patch_size: int = PATCH_SIZE,
) -> list[Frame420]:
    """Cut a frame into ``patch_size`` square regions.

    ``mode="grid"`` tiles the reflect-padded frame in row-major order.
    ``mode="random"`` draws ``n`` crops fully inside the frame; crop origins
    are even so the chroma planes stay aligned.
    """
    if patch_size <= 0 or patch_size % 2:
        raise ContractError(f"patch_size must be a positive even number, got {patch_size}")
    if mode == "grid":
        padded = pad_frame(frame, patch_size)
        rows, cols = grid_shape(frame.width, frame.height, patch_size)
        return [
            padded.crop(r * patch_size, c * patch_size, patch_size, patch_size)
            for r in range(rows)
            for c in range(cols)
        ]
    if mode == "random":
        if rng is None or n is None:
            raise ContractError("random patch mode needs an rng and a patch count")
        if frame.width < patch_size or frame.height < patch_size:
            raise ContractError(
                f"frame {frame.width}x{frame.height} is smaller than the {patch_size} patch"
            )
        tops = 2 * rng.integers(0, (frame.height - patch_size) // 2 + 1, size=n)
        lefts = 2 * rng.integers(0, (frame.width - patch_size) // 2 + 1, size=n)
        return [frame.crop(int(t), int(l), patch_size, patch_size) for t, l in zip(tops, lefts)]
    raise ContractError(f"unknown patch mode {mode!r}")


def reassemble(patches: list[np.ndarray], width: int, height: int) -> Frame420:
    """Inverse of grid extraction for ``3 x P x P`` network outputs.

    Tiles are placed row-major, the padding is cropped, luma is rounded to
    bytes and the full-resolution chroma is brought back to 4:2:0 with
    :func:`downsample_chroma`.
    """
    _check_dims(width, height)
    if not patches:
        raise ContractError("no patches to reassemble")
    p = patches[0].shape[-1]
    rows, cols = grid_shape(width, height, p)
    if len(patches) != rows * cols:
        raise ContractError(
            f"{width}x{height} with patch {p} needs {rows * cols} patches, got {len(patches)}"
        )
    canvas = np.empty((3, rows * p, cols * p), dtype=np.float64)
    for i, patch in enumerate(patches):
        if patch.shape != (3, p, p):
            raise ContractError(f"patch {i} has shape {patch.shape}, expected {(3, p, p)}")
        r, c = divmod(i, cols)
        canvas[:, r * p : (r + 1) * p, c * p : (c + 1) * p] = patch
    canvas = np.clip(canvas[:, :height, :width] * 255.0, 0.0, 255.0)
    return Frame420(to_bytes(canvas[0]), downsample_chroma(canvas[1]), downsample_chroma(canvas[2]))
