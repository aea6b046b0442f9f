"""PSNR and Bjontegaard-delta metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .yuv import Sequence

PEAK = 255.0
YUV_WEIGHTS = (6.0, 1.0, 1.0)


class EmptyOverlapError(ContractError):
    """Two RD curves share no common quality (or rate) interval."""


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"plane shapes differ: {a.shape} vs {b.shape}")
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def psnr_from_mse(err: float, peak: float = PEAK) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def psnr(plane_a: np.ndarray, plane_b: np.ndarray, peak: float = PEAK) -> float:
    """PSNR in dB; ``math.inf`` for identical planes."""
    return psnr_from_mse(mse(plane_a, plane_b), peak)


def yuv_weighted_psnr(y_db: float, u_db: float, v_db: float) -> float:
    """Combine per-channel PSNR values with weights 6:1:1."""
    values = (y_db, u_db, v_db)
    if not all(math.isfinite(x) for x in values):
        raise ContractError(f"weighted PSNR needs finite inputs, got {values}")
    wy, wu, wv = YUV_WEIGHTS
    return (wy * y_db + wu * u_db + wv * v_db) / (wy + wu + wv)


@dataclass(frozen=True)
class SequencePSNR:
    y: float
    u: float
    v: float

    @property
    def weighted(self) -> float:
        """Raises :class:`ContractError` if any channel is lossless (infinite PSNR)."""
        return yuv_weighted_psnr(self.y, self.u, self.v)

    def __iter__(self):
        return iter((self.y, self.u, self.v, self.weighted))


def sequence_psnr(filtered: Sequence, original: Sequence) -> SequencePSNR:
    """Per-channel PSNR with the MSE pooled over all frames before conversion."""
    if len(filtered) != len(original):
        raise ContractError(f"frame counts differ: {len(filtered)} vs {len(original)}")
    if (filtered.width, filtered.height) != (original.width, original.height):
        raise ContractError(
            f"sizes differ: {filtered.width}x{filtered.height} vs {original.width}x{original.height}"
        )
    if not len(original):
        raise ContractError("cannot compute PSNR of empty sequences")
    sums = [0.0, 0.0, 0.0]
    for f, o in zip(filtered.frames, original.frames):
        for i, (pf, po) in enumerate(zip(f.planes, o.planes)):
            sums[i] += mse(pf, po)
    n = len(original)
    return SequencePSNR(*(psnr_from_mse(s / n) for s in sums))


# -- rate-distortion curves --------------------------------------------------

@dataclass(frozen=True)
class RDPoint:
    bitrate: float
    psnr: float
    qp: int | None = None

    def __post_init__(self):
        if not self.bitrate > 0:
            raise ContractError(f"bitrate must be positive, got {self.bitrate}")
        if not math.isfinite(self.psnr):
            raise ContractError(f"RD points need finite PSNR, got {self.psnr}")


@dataclass(frozen=True)
class RDCurve:
    points: tuple[RDPoint, ...]

    def __init__(self, points):
        points = tuple(sorted(points, key=lambda p: p.bitrate))
        if len(points) < 4:
            raise ContractError(f"an RD curve needs at least 4 points, got {len(points)}")
        rates = [p.bitrate for p in points]
        if len(set(rates)) != len(rates):
            raise ContractError(f"duplicate bitrates in RD curve: {rates}")
        object.__setattr__(self, "points", points)

    @classmethod
    def from_arrays(cls, bitrates, psnrs) -> RDCurve:
        if len(bitrates) != len(psnrs):
            raise ContractError("bitrate and PSNR arrays differ in length")
        return cls([RDPoint(float(r), float(q)) for r, q in zip(bitrates, psnrs)])

    @property
    def log_rates(self) -> np.ndarray:
        return np.log10([p.bitrate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def _mean_poly_difference(x_a, y_a, x_b, y_b) -> float:
    """Mean of ``fit_b - fit_a`` over the common ``x`` interval, cubic fits."""
    lo = max(x_a.min(), x_b.min())
    hi = min(x_a.max(), x_b.max())
    if not hi > lo:
        raise EmptyOverlapError(f"RD curves do not overlap: [{x_a.min()}, {x_a.max()}] vs [{x_b.min()}, {x_b.max()}]")
    int_a = np.polyint(np.polyfit(x_a, y_a, 3))
    int_b = np.polyint(np.polyfit(x_b, y_b, 3))
    area_a = np.polyval(int_a, hi) - np.polyval(int_a, lo)
    area_b = np.polyval(int_b, hi) - np.polyval(int_b, lo)
    return float((area_b - area_a) / (hi - lo))


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average bitrate difference of ``test`` vs ``anchor`` in percent at equal PSNR.

    Negative values mean the test curve needs less rate for the same quality.
    """
    diff = _mean_poly_difference(anchor.psnrs, anchor.log_rates, test.psnrs, test.log_rates)
    return (10.0**diff - 1.0) * 100.0


def bd_psnr(anchor: RDCurve, test: RDCurve) -> float:
    """Average PSNR difference in dB of ``test`` vs ``anchor`` at equal rate."""
    return _mean_poly_difference(anchor.log_rates, anchor.psnrs, test.log_rates, test.psnrs)


# -- CSV --------------------------------------------------------------------

RD_FIELDS = ("qp", "bitrate", "y_psnr", "u_psnr", "v_psnr")


@dataclass(frozen=True)
class RDRow:
    qp: int
    bitrate: float
    y_psnr: float
    u_psnr: float
    v_psnr: float

    @property
    def weighted_psnr(self) -> float:
        return yuv_weighted_psnr(self.y_psnr, self.u_psnr, self.v_psnr)


def read_rd_csv(path) -> list[RDRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RD_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ContractError(f"{path}: missing RD columns {sorted(missing)}")
        return [
            RDRow(int(r["qp"]), float(r["bitrate"]), float(r["y_psnr"]), float(r["u_psnr"]), float(r["v_psnr"]))
            for r in reader
        ]


def write_rd_csv(rows: list[RDRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RD_FIELDS)
        for r in rows:
            writer.writerow([r.qp, repr(r.bitrate), repr(r.y_psnr), repr(r.u_psnr), repr(r.v_psnr)])


def rd_curves(rows: list[RDRow]) -> dict[str, RDCurve]:
    """Split RD rows into Y, U, V and weighted-YUV curves."""
    rates = [r.bitrate for r in rows]
    return {
        "Y": RDCurve.from_arrays(rates, [r.y_psnr for r in rows]),
        "U": RDCurve.from_arrays(rates, [r.u_psnr for r in rows]),
        "V": RDCurve.from_arrays(rates, [r.v_psnr for r in rows]),
        "YUV": RDCurve.from_arrays(rates, [r.weighted_psnr for r in rows]),
    }
