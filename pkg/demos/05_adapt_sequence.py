"""
Adapting a pretrained filter to one sequence
============================================

The encoder pretrains once, then finetunes only the biases on the sequence
it is about to send. The decoder rebuilds the same filter from its own copy
of the pretrained network plus the payload. Takes a few minutes on one core.
"""

from biasfilter import metrics as M
from biasfilter import network as N
from biasfilter import pipeline as P
from biasfilter import synthetic
from biasfilter import training as TR
from biasfilter.degrade import degrade_sequence

# Desk-scale pretraining on synthetic stills (about a minute)
pretrained, history = P.desk_pretrain()
print(f"pretraining loss {history[0].mean_loss:.4g} -> {history[-1].mean_loss:.4g}")

seq = synthetic.bundled_sequence()
qp = 32
degraded = degrade_sequence(seq, qp)

# Encoder side: bias-only finetuning, then pack the biases
tuned, payload, reports = P.adapt(pretrained, degraded, seq, qp, TR.DESK_FINETUNE)
for r in reports:
    print(f"epoch {r.epoch:>2}: loss {r.mean_loss:.4g} at lr {r.lr_used:g}")
print(f"payload: {len(payload)} bytes, kernels unchanged: {tuned.kernel_bytes() == pretrained.kernel_bytes()}")

# Decoder side: pretrained network + payload -> the same filter
rebuilt = P.reconstruct(pretrained, payload)
print("decoder filter matches encoder:", N.network_to_bytes(rebuilt) == N.network_to_bytes(tuned))

for name, frames in [("decoded", degraded),
                     ("pretrained filter", P.filter_sequence(pretrained, degraded)),
                     ("adapted filter", P.filter_sequence(rebuilt, degraded))]:
    print(f"{name:>18}: {M.sequence_psnr(frames, seq).weighted:.2f} dB weighted YUV-PSNR")
