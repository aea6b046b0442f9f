"""Frame-level filtering and the encoder/decoder adaptation round trip."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from . import network as N
from .codec import apply_update, encode_payload
from .synthetic import bundled_images
from .training import (
    DESK_PRETRAIN,
    DESK_PRETRAIN_PATCH,
    FINETUNE_DEFAULTS,
    TrainConfig,
    finetune,
    pairs_from_images,
    pairs_from_sequences,
    pretrain,
)
from .yuv import PATCH_SIZE, Frame420, Sequence, extract_patches, make_input_tensor, reassemble


def filter_frame(net: N.FilterNet, frame: Frame420, qp: int, patch_size: int = PATCH_SIZE,
                 pool: ThreadPoolExecutor | None = None) -> Frame420:
    patches = extract_patches(frame, "grid", patch_size=patch_size)
    job = lambda p: N.forward(net, make_input_tensor(p, qp))
    outputs = list(pool.map(job, patches) if pool is not None else map(job, patches))
    return reassemble(outputs, frame.width, frame.height)


def filter_sequence(net: N.FilterNet, seq: Sequence, qp: int | None = None,
                    patch_size: int = PATCH_SIZE, threads: int = 1) -> Sequence:
    """Run the filter over every frame of a decoded sequence."""
    qp = seq.qp if qp is None else qp
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        frames = [filter_frame(net, f, qp, patch_size, pool) for f in seq.frames]
    finally:
        if pool is not None:
            pool.shutdown()
    return Sequence(frames, seq.width, seq.height, qp)


def adapt(pretrained: N.FilterNet, degraded: Sequence, original: Sequence, qp: int | None = None,
          config: TrainConfig = FINETUNE_DEFAULTS, patch_size: int = PATCH_SIZE):
    """Encoder side: finetune biases on a sequence and emit the payload.

    Returns ``(finetuned_net, payload_bytes, reports)``.
    """
    pairs = pairs_from_sequences(degraded, original, qp, patch_size)
    tuned, reports = finetune(pretrained, pairs, config)
    return tuned, encode_payload(N.extract_biases(tuned), tuned.config), reports


def reconstruct(pretrained: N.FilterNet, payload: bytes) -> N.FilterNet:
    """Decoder side: rebuild the adapted filter from the embedded pretrained one."""
    return apply_update(pretrained, payload)


DESK_QPS = (22, 27, 32, 37)


def desk_pretrain(config: N.NetConfig = N.NetConfig(16, 3), seed: int = 0, qps=DESK_QPS,
                  patches_per_image: int = 2):
    """Pretrain a small filter on the bundled still images (about a minute on one core).

    Returns ``(network, reports)``.
    """
    pairs = pairs_from_images(bundled_images(), list(qps), patches_per_image, DESK_PRETRAIN_PATCH, seed)
    train_cfg = TrainConfig(DESK_PRETRAIN.mode, DESK_PRETRAIN.epochs, DESK_PRETRAIN.batch_size,
                            DESK_PRETRAIN.batches_per_epoch, DESK_PRETRAIN.initial_lr, seed)
    return pretrain(N.build_network(config), pairs, train_cfg)
