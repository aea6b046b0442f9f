"""
Degrading video and measuring quality
=====================================

A block DCT quantizer stands in for a real codec. It gives us decoded-like
frames at any QP, plus a pseudo bitrate for RD curves.
"""

from pathlib import Path
import tempfile

from biasfilter import metrics as M
from biasfilter import synthetic, yuv
from biasfilter.degrade import degrade_sequence_stats

seq = synthetic.bundled_sequence()
print(f"bundled sequence: {len(seq)} frames of {seq.width}x{seq.height}")

# Raw I420 files round trip byte for byte
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "seq.yuv"
    yuv.write_yuv420(seq, path)
    back = yuv.read_yuv420(path, seq.width, seq.height)
    print("file size:", path.stat().st_size, "| identical:",
          all(a.tobytes() == b.tobytes() for a, b in zip(seq.frames, back.frames)))

# Degrade at the four test QPs and collect an RD curve
rows = []
for qp in (22, 27, 32, 37):
    degraded, kbps = degrade_sequence_stats(seq, qp)
    y, u, v, w = M.sequence_psnr(degraded, seq)
    rows.append(M.RDRow(qp, kbps, y, u, v))
    print(f"QP {qp}: {kbps:8.1f} kbps  Y {y:.2f}  U {u:.2f}  V {v:.2f}  YUV {w:.2f} dB")

# BD-rate against a copy that needs 10% more bits for the same quality
anchor = M.rd_curves(rows)["YUV"]
costly = M.RDCurve.from_arrays(10 ** anchor.log_rates * 1.1, anchor.psnrs)
print(f"BD-rate of the costlier curve: {M.bd_rate(anchor, costly):+.3f}%")
print(f"BD-PSNR of the costlier curve: {M.bd_psnr(anchor, costly):+.3f} dB")
