"""Pretraining and bias-only finetuning loops."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import network as N
from . import tensor as T
from .degrade import DegradeConfig, degrade_frame
from .errors import ContractError, ShapeError, TrainingDivergedError
from .yuv import PATCH_SIZE, Frame420, Sequence, extract_patches, make_input_tensor, make_target_tensor

logger = logging.getLogger(__name__)

PRETRAIN = "pretrain"
FINETUNE = "finetune"

LR_DECAY_PERIOD = 20
LR_DECAY_UNTIL = 110


@dataclass
class PatchPairSet:
    """Degraded network inputs paired with original targets.

    ``degraded`` is ``(N, 4, P, P)``, ``original`` is ``(N, 3, P, P)`` and
    ``source_ids`` tags every pair with the image or frame it came from.
    """

    degraded: np.ndarray
    original: np.ndarray
    source_ids: np.ndarray

    def __post_init__(self):
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64)
        if self.degraded.ndim != 4 or self.degraded.shape[1] != 4:
            raise ShapeError(f"degraded patches must be N x 4 x H x W, got {self.degraded.shape}")
        if self.original.ndim != 4 or self.original.shape[1] != 3:
            raise ShapeError(f"original patches must be N x 3 x H x W, got {self.original.shape}")
        n = self.degraded.shape[0]
        if self.original.shape[0] != n or self.source_ids.shape != (n,):
            raise ShapeError("degraded, original and source_ids disagree on the pair count")
        if self.degraded.shape[2:] != self.original.shape[2:]:
            raise ShapeError(
                f"spatial size mismatch: {self.degraded.shape[2:]} vs {self.original.shape[2:]}"
            )

    def __len__(self) -> int:
        return self.degraded.shape[0]

    def subset(self, indices) -> PatchPairSet:
        idx = np.asarray(indices)
        return PatchPairSet(self.degraded[idx], self.original[idx], self.source_ids[idx])

    @classmethod
    def concat(cls, sets: list[PatchPairSet]) -> PatchPairSet:
        return cls(
            np.concatenate([s.degraded for s in sets]),
            np.concatenate([s.original for s in sets]),
            np.concatenate([s.source_ids for s in sets]),
        )


def pairs_from_sequences(
    degraded: Sequence, original: Sequence, qp: int | None = None, patch_size: int = PATCH_SIZE
) -> PatchPairSet:
    """Grid-patch a degraded/original sequence pair; source id = frame index."""
    qp = degraded.qp if qp is None else qp
    if qp is None:
        raise ContractError("a QP is needed to build network inputs")
    if len(degraded) != len(original) or (degraded.width, degraded.height) != (original.width, original.height):
        raise ShapeError(
            f"degraded {len(degraded)}x{degraded.width}x{degraded.height} and original "
            f"{len(original)}x{original.width}x{original.height} sequences differ"
        )
    inputs, targets, ids = [], [], []
    for i, (fd, fo) in enumerate(zip(degraded.frames, original.frames)):
        for pd, po in zip(extract_patches(fd, "grid", patch_size=patch_size),
                          extract_patches(fo, "grid", patch_size=patch_size)):
            inputs.append(make_input_tensor(pd, qp))
            targets.append(make_target_tensor(po))
            ids.append(i)
    return PatchPairSet(np.stack(inputs), np.stack(targets), np.array(ids))


def pairs_from_images(
    images: list[Frame420],
    qps: list[int],
    patches_per_image: int,
    patch_size: int = PATCH_SIZE,
    seed: int = 0,
) -> PatchPairSet:
    """Degrade each image at every QP and crop co-located random patches."""
    inputs, targets, ids = [], [], []
    for i, img in enumerate(images):
        for j, qp in enumerate(qps):
            deg = degrade_frame(img, DegradeConfig(qp))
            crop_seed = [seed, i, j]
            pd = extract_patches(deg, "random", np.random.default_rng(crop_seed), patches_per_image, patch_size)
            po = extract_patches(img, "random", np.random.default_rng(crop_seed), patches_per_image, patch_size)
            for a, b in zip(pd, po):
                inputs.append(make_input_tensor(a, qp))
                targets.append(make_target_tensor(b))
                ids.append(i)
    return PatchPairSet(np.stack(inputs), np.stack(targets), np.array(ids))


@dataclass(frozen=True)
class TrainConfig:
    mode: str
    epochs: int
    batch_size: int = 64
    batches_per_epoch: int = 512
    initial_lr: float = 1e-3
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.mode not in (PRETRAIN, FINETUNE):
            raise ContractError(f"mode must be {PRETRAIN!r} or {FINETUNE!r}, got {self.mode!r}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1 or self.batches_per_epoch < 1 or self.threads < 1:
            raise ContractError("batch_size, batches_per_epoch and threads must be positive")
        if self.initial_lr < 0:
            raise ContractError(f"initial_lr must be >= 0, got {self.initial_lr}")

    @property
    def biases_only(self) -> bool:
        return self.mode == FINETUNE


# Full-scale settings.
PRETRAIN_DEFAULTS = TrainConfig(PRETRAIN, epochs=2000, batch_size=64, batches_per_epoch=512, initial_lr=1e-3)
FINETUNE_DEFAULTS = TrainConfig(FINETUNE, epochs=110, batch_size=64, initial_lr=1e-3)
# Laptop-sized settings for tests and demos. Pretraining also uses smaller
# crops (DESK_PRETRAIN_PATCH); finetuning keeps the full grid patch.
DESK_PRETRAIN = replace(PRETRAIN_DEFAULTS, epochs=100, batch_size=16, batches_per_epoch=8)
DESK_PRETRAIN_PATCH = 32
DESK_FINETUNE = replace(FINETUNE_DEFAULTS, epochs=10, batch_size=2)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    mean_loss: float
    lr_used: float
    wall_time_s: float


def lr_schedule(mode: str, initial_lr: float, epoch: int) -> float:
    """Learning rate for a 0-based epoch.

    Pretraining keeps the rate constant. Finetuning halves it every 20
    epochs and stops decaying at epoch 110.
    """
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    if mode == PRETRAIN:
        return initial_lr
    if mode == FINETUNE:
        return initial_lr * 2.0 ** -(min(epoch, LR_DECAY_UNTIL) // LR_DECAY_PERIOD)
    raise ContractError(f"unknown mode {mode!r}")


def sample_batch_indices(source_ids: np.ndarray, rng: np.random.Generator, batch_size: int) -> np.ndarray:
    """Pick pair indices from pairwise-distinct sources where possible.

    With at least ``batch_size`` distinct sources, sources are drawn without
    replacement and one pair is drawn uniformly from each. Otherwise pairs
    are drawn without replacement (or with replacement when the set is
    smaller than the batch).
    """
    n = len(source_ids)
    if n == 0:
        raise ContractError("cannot sample from an empty dataset")
    if batch_size < 1:
        raise ContractError(f"batch_size must be positive, got {batch_size}")
    sources = np.unique(source_ids)
    if len(sources) >= batch_size:
        chosen = rng.choice(sources, size=batch_size, replace=False)
        out = np.empty(batch_size, dtype=np.int64)
        for k, s in enumerate(chosen):
            members = np.flatnonzero(source_ids == s)
            out[k] = members[rng.integers(len(members))]
        return out
    return rng.choice(n, size=batch_size, replace=batch_size > n)


def sample_batch(dataset: PatchPairSet, rng: np.random.Generator, batch_size: int) -> PatchPairSet:
    return dataset.subset(sample_batch_indices(dataset.source_ids, rng, batch_size))


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch])


def _pair_gradient(net: N.FilterNet, x: np.ndarray, target: np.ndarray, scale: float, biases_only: bool):
    out, cache = N.forward_cached(net, x)
    loss, grad = T.mse_loss(out, target)
    grad *= grad.dtype.type(scale)
    k_grads, b_grads = N.backward(net, cache, grad, kernel_grads=not biases_only)
    parts = b_grads if biases_only else k_grads + b_grads
    return loss, np.concatenate([g.ravel() for g in parts])


def batch_gradient(
    net: N.FilterNet,
    dataset: PatchPairSet,
    indices: np.ndarray,
    biases_only: bool,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[float, np.ndarray]:
    """Mean loss and gradient of the mean loss over ``indices``.

    Per-pair gradients are summed in index order, so the result does not
    depend on whether a thread pool is used.
    """
    scale = 1.0 / len(indices)
    job = lambda i: _pair_gradient(net, dataset.degraded[i], dataset.original[i], scale, biases_only)
    results = pool.map(job, indices) if pool is not None else map(job, indices)
    total_loss, grad = 0.0, None
    for loss, g in results:
        total_loss += loss
        grad = g if grad is None else grad + g
    return total_loss / len(indices), grad


def _epoch_batches(dataset: PatchPairSet, config: TrainConfig, rng: np.random.Generator):
    if config.mode == PRETRAIN:
        for _ in range(config.batches_per_epoch):
            yield sample_batch_indices(dataset.source_ids, rng, config.batch_size)
    else:
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            yield order[start : start + config.batch_size]


def train_epoch(
    net: N.FilterNet,
    dataset: PatchPairSet,
    config: TrainConfig,
    opt_state: T.AdamState,
    epoch: int,
    pool: ThreadPoolExecutor | None = None,
) -> tuple[EpochReport, T.AdamState]:
    """Run one epoch, updating ``net`` in place.

    In finetune mode only the bias vectors are trainable and every pair is
    visited once; in pretrain mode all parameters are updated over
    ``batches_per_epoch`` sampled batches.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    biases_only = config.biases_only
    params = N.flatten_params(net, biases_only)
    if opt_state.size != params.size:
        raise ShapeError(f"optimizer tracks {opt_state.size} parameters, {config.mode} trains {params.size}")
    lr = lr_schedule(config.mode, config.initial_lr, epoch)
    start = time.perf_counter()
    weighted_loss, n_pairs = 0.0, 0
    for idx in _epoch_batches(dataset, config, _epoch_rng(config.seed, epoch)):
        loss, grad = batch_gradient(net, dataset, idx, biases_only, pool)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDivergedError(f"non-finite loss or gradient in epoch {epoch}")
        params, opt_state = T.adam_step(params, grad, opt_state, lr)
        N.unflatten_params(net, params, biases_only)
        weighted_loss += loss * len(idx)
        n_pairs += len(idx)
    mean_loss = weighted_loss / n_pairs
    report = EpochReport(epoch, mean_loss, lr, time.perf_counter() - start)
    logger.info("%s epoch %d: loss %.6g lr %.3g (%.1fs)", config.mode, epoch, mean_loss, lr, report.wall_time_s)
    return report, opt_state


def _run(net: N.FilterNet, dataset: PatchPairSet, config: TrainConfig, mode: str):
    if config.mode != mode:
        raise ContractError(f"{mode} needs a {mode!r} TrainConfig, got {config.mode!r}")
    net = net.copy()
    state = T.AdamState.zeros(N.flatten_params(net, config.biases_only).size, dtype=net.dtype)
    reports = []
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for epoch in range(config.epochs):
            report, state = train_epoch(net, dataset, config, state, epoch, pool)
            reports.append(report)
    finally:
        if pool is not None:
            pool.shutdown()
    return net, reports


def pretrain(net: N.FilterNet, dataset: PatchPairSet, config: TrainConfig) -> tuple[N.FilterNet, list[EpochReport]]:
    """Train all parameters; the input network is left untouched."""
    return _run(net, dataset, config, PRETRAIN)


def finetune(net: N.FilterNet, dataset: PatchPairSet, config: TrainConfig) -> tuple[N.FilterNet, list[EpochReport]]:
    """Train bias vectors only; kernels of the returned network are bit-identical to ``net``."""
    return _run(net, dataset, config, FINETUNE)


HISTORY_FIELDS = ("epoch", "mean_loss", "lr", "wall_time_s")


def write_history_csv(reports: list[EpochReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for r in reports:
            writer.writerow([r.epoch, repr(r.mean_loss), repr(r.lr_used), f"{r.wall_time_s:.3f}"])


def read_history_csv(path) -> list[EpochReport]:
    with open(path, newline="") as fh:
        return [
            EpochReport(int(r["epoch"]), float(r["mean_loss"]), float(r["lr"]), float(r["wall_time_s"]))
            for r in csv.DictReader(fh)
        ]
