"""Bias-update payload: the adaptation signal sent from encoder to decoder.

Wire layout (little-endian)::

    offset  size  field
    0       4     magic "BAUP"
    4       2     version (u16)
    6       4     n_filters (u32)
    10      4     n_blocks (u32)
    14      4     count (u32), must equal n_blocks * n_filters + 3
    18      4     CRC-32 of the uncompressed body (u32)
    22      ...   body: count float64 values, raw LZMA2 stream

The payload carries absolute bias values. The decoder installs them into
its copy of the pretrained network, replacing the pretrained biases.
"""

from __future__ import annotations

import lzma
import struct
import zlib
from typing import NamedTuple

import numpy as np

from .errors import ContractError, CorruptionError, FormatError, ShapeError, TruncationError
from .network import FilterNet, NetConfig, check_same_architecture, count_params, extract_biases, set_biases

MAGIC = b"BAUP"
VERSION = 1
HEADER = struct.Struct("<4sHIIII")
HEADER_SIZE = HEADER.size  # 22
LZMA_FILTERS = [{"id": lzma.FILTER_LZMA2, "preset": 9}]
# LZMA2 falls back to stored chunks of at most 64 KiB, 3 header bytes each, plus an end marker.
_STORED_CHUNK = 1 << 16


class DecodedPayload(NamedTuple):
    biases: np.ndarray
    n_filters: int
    n_blocks: int


def max_body_size(n_bytes: int) -> int:
    """Upper bound on the compressed size of an ``n_bytes`` body."""
    return n_bytes + 3 * (n_bytes // _STORED_CHUNK + 1) + 1


def compress(raw: bytes) -> bytes:
    return lzma.compress(raw, format=lzma.FORMAT_RAW, filters=LZMA_FILTERS)


def decompress(body: bytes) -> bytes:
    dec = lzma.LZMADecompressor(format=lzma.FORMAT_RAW, filters=LZMA_FILTERS)
    try:
        out = dec.decompress(body)
    except lzma.LZMAError as exc:
        raise CorruptionError(f"payload body is not a valid LZMA2 stream: {exc}") from exc
    if not dec.eof:
        raise TruncationError("payload body ends before the LZMA2 end marker")
    if dec.unused_data:
        raise CorruptionError(f"{len(dec.unused_data)} bytes after the LZMA2 end marker")
    return out


def _as_f32_exact(biases) -> np.ndarray:
    v = np.asarray(biases)
    if v.ndim != 1:
        raise ShapeError(f"bias vector must be one-dimensional, got shape {v.shape}")
    v32 = v.astype(np.float32)
    if v.dtype != np.float32 and not np.array_equal(v32.astype(v.dtype), v, equal_nan=True):
        raise ContractError("bias values are not exactly representable as float32")
    return v32


def encode_payload(biases, config: NetConfig) -> bytes:
    """Serialize a float32 bias vector for ``config`` into payload bytes."""
    v = _as_f32_exact(biases)
    _, expected = count_params(config)
    if v.size != expected:
        raise ShapeError(f"{config.label} has {expected} biases, vector has {v.size}")
    raw = v.astype("<f8").tobytes()
    header = HEADER.pack(MAGIC, VERSION, config.n_filters, config.n_blocks, v.size, zlib.crc32(raw))
    return header + compress(raw)


def decode_payload(data: bytes) -> DecodedPayload:
    """Parse and verify payload bytes.

    Raises:
        TruncationError: input shorter than the header or an unterminated body.
        FormatError: bad magic, unknown version or inconsistent header fields.
        CorruptionError: undecodable body, wrong body length or CRC mismatch.
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise TruncationError(f"payload of {len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
    magic, version, n_filters, n_blocks, count, crc = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad payload magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported payload version {version}")
    try:
        config = NetConfig(n_filters, n_blocks)
    except ContractError as exc:
        raise FormatError(f"invalid network shape in payload header: {exc}") from exc
    if count != count_params(config)[1]:
        raise FormatError(f"payload count {count} does not match {config.label}")

    raw = decompress(data[HEADER_SIZE:])
    if len(raw) != 8 * count:
        raise CorruptionError(f"body holds {len(raw)} bytes, expected {8 * count}")
    if zlib.crc32(raw) != crc:
        raise CorruptionError("payload CRC-32 mismatch")
    return DecodedPayload(np.frombuffer(raw, dtype="<f8").astype(np.float64), n_filters, n_blocks)


def apply_update(pretrained: FilterNet, payload_bytes: bytes) -> FilterNet:
    """Return a copy of ``pretrained`` with the payload's biases installed."""
    decoded = decode_payload(payload_bytes)
    check_same_architecture(pretrained.config, NetConfig(decoded.n_filters, decoded.n_blocks))
    net = pretrained.copy()
    set_biases(net, decoded.biases.astype(net.dtype))
    return net


def payload_for(net: FilterNet) -> bytes:
    """Encode the current biases of ``net``."""
    return encode_payload(extract_biases(net), net.config)
