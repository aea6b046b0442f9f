"""Command-line front end: degrade, pretrain, finetune, apply, eval, bdrate.

Exit codes are shared by every subcommand: 0 success, 1 numerical failure
(diverged training), 2 usage or contract violation, 3 I/O failure, 4 bad
data format or mismatched inputs.

Every file a subcommand writes gets a ``<file>.manifest`` sidecar holding the
resolved flags, inputs, outputs, seed and a hash of the configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import math
import sys
from pathlib import Path

from . import __version__
from . import network as N
from . import training as TR
from .codec import apply_update, encode_payload
from .degrade import degrade_sequence_stats
from .errors import (
    ConfigMismatchError,
    ContractError,
    NumericalError,
    PayloadError,
)
from .metrics import RDRow, bd_psnr, bd_rate, rd_curves, read_rd_csv, sequence_psnr, write_rd_csv, yuv_weighted_psnr
from .pipeline import filter_sequence
from .yuv import PATCH_SIZE, QP_MAX, Sequence, read_yuv420, write_yuv420

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4

DEFAULT_QPS = "22,27,32,37"
DEFAULT_CONFIG = "512x5"
DESK_CONFIG = "16x3"


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


# --- flag types -----------------------------------------------------------

def qp_value(text: str) -> int:
    try:
        qp = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"QP must be an integer in 0..{QP_MAX}, got {text!r}") from None
    if not 0 <= qp <= QP_MAX:
        raise argparse.ArgumentTypeError(f"QP must be in the valid range 0..{QP_MAX}, got {qp}")
    return qp


def qp_list(text: str) -> list[int]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("QP list is empty")
    return [qp_value(p.strip()) for p in parts]


def net_config(text: str) -> tuple[int, int]:
    try:
        f, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"config must look like FxB (e.g. 512x5), got {text!r}") from None
    if f < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"config needs F >= 1 and B >= 1, got {text!r}")
    return f, b


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {v}")
    return v


# --- manifests ------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def manifest_text(subcommand: str, flags: dict, inputs: dict, outputs: dict, seed: int | None) -> str:
    """Render a manifest; the config hash covers everything except output paths."""
    config_lines = [f"subcommand={subcommand}"]
    config_lines += [f"flag.{k}={_fmt(v)}" for k, v in sorted(flags.items())]
    config_lines += [f"input.{k}={_fmt(v)}" for k, v in sorted(inputs.items())]
    config_lines.append(f"seed={_fmt(seed)}")
    config_lines.append(f"version={__version__}")
    digest = hashlib.sha256("\n".join(config_lines).encode()).hexdigest()
    lines = config_lines + [f"output.{k}={_fmt(v)}" for k, v in sorted(outputs.items())]
    lines.append(f"config_hash={digest}")
    return "\n".join(lines) + "\n"


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_manifests(subcommand: str, flags: dict, inputs: dict, outputs: dict, seed: int | None = None) -> None:
    text = manifest_text(subcommand, flags, inputs, outputs, seed)
    for path in outputs.values():
        Path(str(path) + ".manifest").write_text(text)


def _resolve(args, name, full, desk):
    value = getattr(args, name)
    if value is None:
        value = desk if args.desk_scale else full
        setattr(args, name, value)
    return value


def _sibling(path, suffix: str) -> Path:
    p = Path(path)
    return p.with_name(p.name + suffix)


# --- subcommands ----------------------------------------------------------

def cmd_degrade(args) -> int:
    src = read_yuv420(args.input, args.w, args.h, max_frames=args.frames)
    out, kbps = degrade_sequence_stats(src, args.qp)
    write_yuv420(out, args.out)
    report = args.report or _sibling(args.out, ".rd.csv")
    res = sequence_psnr(out, src)
    write_rd_csv([RDRow(args.qp, kbps, res.y, res.u, res.v)], report)
    flags = {"w": args.w, "h": args.h, "frames": args.frames, "qp": args.qp}
    write_manifests("degrade", flags, {"in": args.input}, {"out": args.out, "report": report})
    print(f"degraded {len(out)} frames at QP {args.qp}: pseudo-bitrate {kbps:.3f} kbps")
    return EXIT_OK


def _load_originals(directory, w: int, h: int, max_frames: int | None):
    paths = sorted(Path(directory).glob("*.yuv"))
    if not paths:
        raise FileNotFoundError(f"no .yuv files in {directory}")
    frames = []
    for p in paths:
        frames.extend(read_yuv420(p, w, h, max_frames=max_frames).frames)
    return paths, frames


def cmd_pretrain(args) -> int:
    _resolve(args, "config", net_config(DEFAULT_CONFIG), net_config(DESK_CONFIG))
    _resolve(args, "epochs", TR.PRETRAIN_DEFAULTS.epochs, TR.DESK_PRETRAIN.epochs)
    _resolve(args, "batch_size", TR.PRETRAIN_DEFAULTS.batch_size, TR.DESK_PRETRAIN.batch_size)
    _resolve(args, "batches_per_epoch", TR.PRETRAIN_DEFAULTS.batches_per_epoch, TR.DESK_PRETRAIN.batches_per_epoch)
    _resolve(args, "patch", PATCH_SIZE, TR.DESK_PRETRAIN_PATCH)
    _resolve(args, "lr", TR.PRETRAIN_DEFAULTS.initial_lr, TR.DESK_PRETRAIN.initial_lr)
    paths, images = _load_originals(args.originals, args.w, args.h, args.max_frames)
    config = N.NetConfig(*args.config, seed=args.seed)
    train_cfg = TR.TrainConfig(TR.PRETRAIN, args.epochs, args.batch_size, args.batches_per_epoch,
                               args.lr, args.seed, args.threads)
    net = N.build_network(config)
    if args.epochs > 0:
        pairs = TR.pairs_from_images(images, args.qps, args.patches_per_image, args.patch, args.seed)
        net, reports = TR.pretrain(net, pairs, train_cfg)
    else:
        reports = []
    N.save_checkpoint(net, args.out)
    history = args.history or _sibling(args.out, ".history.csv")
    TR.write_history_csv(reports, history)
    flags = {
        "qps": args.qps, "config": config.label, "epochs": args.epochs, "batch_size": args.batch_size,
        "batches_per_epoch": args.batches_per_epoch, "patch": args.patch, "lr": args.lr,
        "patches_per_image": args.patches_per_image, "w": args.w, "h": args.h, "max_frames": args.max_frames,
        "threads": args.threads,
    }
    inputs = {"originals": args.originals, "files": [p.name for p in paths]}
    write_manifests("pretrain", flags, inputs, {"checkpoint": args.out, "history": history}, args.seed)
    if reports:
        print(f"pretrained {config.label} for {args.epochs} epochs: final loss {reports[-1].mean_loss:.6g}")
    else:
        print(f"wrote untrained {config.label} network")
    return EXIT_OK


def _segments(n_frames: int, segment_frames: int | None) -> list[tuple[int, int]]:
    if segment_frames is None or segment_frames >= n_frames:
        return [(0, n_frames)]
    return [(s, min(s + segment_frames, n_frames)) for s in range(0, n_frames, segment_frames)]


def _segment_path(path, index: int, count: int) -> Path:
    p = Path(path)
    if count == 1:
        return p
    return p.with_name(f"{p.stem}.seg{index:03d}{p.suffix}")


def _slice(seq: Sequence, start: int, stop: int) -> Sequence:
    return Sequence(seq.frames[start:stop], seq.width, seq.height, seq.qp)


def cmd_finetune(args) -> int:
    _resolve(args, "epochs", TR.FINETUNE_DEFAULTS.epochs, TR.DESK_FINETUNE.epochs)
    _resolve(args, "batch_size", TR.FINETUNE_DEFAULTS.batch_size, TR.DESK_FINETUNE.batch_size)
    _resolve(args, "lr", TR.FINETUNE_DEFAULTS.initial_lr, TR.DESK_FINETUNE.initial_lr)
    pretrained = N.load_checkpoint(args.pretrained)
    degraded = read_yuv420(args.degraded, args.w, args.h, qp=args.qp)
    original = read_yuv420(args.original, args.w, args.h)
    if len(degraded) != len(original):
        raise ConfigMismatchError(
            f"degraded has {len(degraded)} frames but original has {len(original)}"
        )
    if len(degraded) == 0:
        raise ContractError("no frames to finetune on")
    train_cfg = TR.TrainConfig(TR.FINETUNE, args.epochs, args.batch_size, initial_lr=args.lr,
                               seed=args.seed, threads=args.threads)
    segments = _segments(len(degraded), args.segment_frames)
    flags = {
        "w": args.w, "h": args.h, "qp": args.qp, "epochs": args.epochs, "batch_size": args.batch_size,
        "lr": args.lr, "patch": args.patch, "segment_frames": args.segment_frames, "threads": args.threads,
    }
    inputs = {"pretrained": args.pretrained, "degraded": args.degraded, "original": args.original}
    for i, (start, stop) in enumerate(segments):
        pairs = TR.pairs_from_sequences(_slice(degraded, start, stop), _slice(original, start, stop),
                                        args.qp, args.patch)
        tuned, reports = TR.finetune(pretrained, pairs, train_cfg)
        out = _segment_path(args.out, i, len(segments))
        out.write_bytes(encode_payload(N.extract_biases(tuned), tuned.config))
        history = _segment_path(args.history, i, len(segments)) if args.history else _sibling(out, ".history.csv")
        TR.write_history_csv(reports, history)
        seg_flags = dict(flags, frames=f"{start}:{stop}")
        write_manifests("finetune", seg_flags, inputs, {"payload": out, "history": history}, args.seed)
        if reports:
            print(f"frames {start}:{stop}: loss {reports[0].mean_loss:.6g} -> {reports[-1].mean_loss:.6g}, payload {out}")
        else:
            print(f"frames {start}:{stop}: no epochs, payload {out} holds the pretrained biases")
    return EXIT_OK


def cmd_apply(args) -> int:
    pretrained = N.load_checkpoint(args.pretrained)
    seq = read_yuv420(args.input, args.w, args.h, qp=args.qp)
    payloads = args.payload or []
    if len(payloads) > 1 and args.segment_frames is None:
        raise UsageError("several --payload files need --segment-frames")
    segments = _segments(len(seq), args.segment_frames) if payloads else [(0, len(seq))]
    if payloads and len(payloads) != len(segments):
        raise UsageError(f"{len(segments)} segments but {len(payloads)} payloads")
    frames = []
    for i, (start, stop) in enumerate(segments):
        net = apply_update(pretrained, Path(payloads[i]).read_bytes()) if payloads else pretrained
        frames.extend(filter_sequence(net, _slice(seq, start, stop), args.qp, args.patch, args.threads).frames)
    write_yuv420(Sequence(frames, seq.width, seq.height, args.qp), args.out)
    flags = {"w": args.w, "h": args.h, "qp": args.qp, "patch": args.patch,
             "segment_frames": args.segment_frames, "threads": args.threads}
    inputs = {"pretrained": args.pretrained, "payload": payloads, "in": args.input}
    write_manifests("apply", flags, inputs, {"out": args.out})
    print(f"filtered {len(frames)} frames -> {args.out}")
    return EXIT_OK


def _db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def cmd_eval(args) -> int:
    a = read_yuv420(args.a, args.w, args.h)
    b = read_yuv420(args.b, args.w, args.h)
    if len(a) != len(b):
        raise ConfigMismatchError(f"{args.a} has {len(a)} frames, {args.b} has {len(b)}")
    res = sequence_psnr(a, b)
    y, u, v = res.y, res.u, res.v
    weighted = math.inf if math.isinf(max(y, u, v)) else yuv_weighted_psnr(y, u, v)
    print(f"Y {_db(y)}")
    print(f"U {_db(u)}")
    print(f"V {_db(v)}")
    print(f"YUV {_db(weighted)}")
    return EXIT_OK


def _load_curves(path):
    try:
        rows = read_rd_csv(path)
    except ContractError:
        raise
    except (KeyError, ValueError) as exc:
        raise PayloadError(f"{path}: not an RD curve CSV ({exc})") from exc
    if len(rows) < 4:
        raise ContractError(f"{path}: BD metrics need at least 4 points, got {len(rows)}")
    return rd_curves(rows)


def cmd_bdrate(args) -> int:
    anchor = _load_curves(args.anchor)
    test = _load_curves(args.test)
    for channel in ("Y", "U", "V", "YUV"):
        rate = bd_rate(anchor[channel], test[channel])
        gain = bd_psnr(anchor[channel], test[channel])
        print(f"{channel:<3} BD-rate {rate:+.4f} %  BD-PSNR {gain:+.4f} dB")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biasfilter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def dims(p):
        p.add_argument("--w", type=positive_int, required=True, help="frame width")
        p.add_argument("--h", type=positive_int, required=True, help="frame height")

    p = sub.add_parser("degrade", help="block-DCT quantize an I420 file")
    p.add_argument("--in", dest="input", required=True)
    dims(p)
    p.add_argument("--frames", type=positive_int, help="read at most this many frames")
    p.add_argument("--qp", type=qp_value, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="pseudo-bitrate CSV (default <out>.rd.csv)")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("pretrain", help="train a network on degraded stills")
    p.add_argument("--originals", required=True, help="directory of .yuv files; every frame is one image")
    dims(p)
    p.add_argument("--max-frames", type=positive_int, help="frames read per file")
    p.add_argument("--qps", type=qp_list, default=qp_list(DEFAULT_QPS))
    p.add_argument("--config", type=net_config, help=f"FxB (default {DEFAULT_CONFIG})")
    p.add_argument("--epochs", type=non_negative_int)
    p.add_argument("--batch-size", type=positive_int)
    p.add_argument("--batches-per-epoch", type=positive_int)
    p.add_argument("--patches-per-image", type=positive_int, default=4)
    p.add_argument("--patch", type=positive_int, help="crop size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--desk-scale", action="store_true", help="small network and short run")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="history CSV (default <out>.history.csv)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="adapt biases to a sequence and write the payload")
    p.add_argument("--pretrained", required=True)
    p.add_argument("--degraded", required=True)
    p.add_argument("--original", required=True)
    dims(p)
    p.add_argument("--qp", type=qp_value, required=True)
    p.add_argument("--epochs", type=non_negative_int)
    p.add_argument("--batch-size", type=positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patch", type=positive_int, default=PATCH_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--segment-frames", type=positive_int, help="emit one payload per this many frames")
    p.add_argument("--desk-scale", action="store_true", help="short run for quick checks")
    p.add_argument("--out", required=True, help="payload path")
    p.add_argument("--history", help="history CSV (default <out>.history.csv)")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("apply", help="filter a decoded sequence")
    p.add_argument("--pretrained", required=True)
    p.add_argument("--payload", action="append", help="bias payload; repeat once per segment")
    p.add_argument("--in", dest="input", required=True)
    dims(p)
    p.add_argument("--qp", type=qp_value, required=True)
    p.add_argument("--patch", type=positive_int, default=PATCH_SIZE)
    p.add_argument("--segment-frames", type=positive_int)
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="print Y/U/V/weighted PSNR between two files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    dims(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate and BD-PSNR between two RD curve CSVs")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_bdrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (PayloadError, ConfigMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
