import numpy as np

from biasfilter import network as N
from biasfilter import pipeline as P
from biasfilter import synthetic
from biasfilter import training as TR
from biasfilter.degrade import degrade_sequence


def test_zero_net_filter_is_identity():
    net = N.build_network(N.NetConfig(4, 2))
    net.kernels = [np.zeros_like(k) for k in net.kernels]
    seq = synthetic.make_sequence(48, 40, 2, seed=2)
    out = P.filter_sequence(net, seq, qp=30, patch_size=32)
    for a, b in zip(out.frames, seq.frames):
        assert a.tobytes() == b.tobytes()


def test_threads_do_not_change_filtering():
    net = N.build_network(N.NetConfig(4, 2, seed=1))
    seq = synthetic.make_sequence(64, 64, 2, seed=3)
    a = P.filter_sequence(net, seq, qp=27, patch_size=32)
    b = P.filter_sequence(net, seq, qp=27, patch_size=32, threads=2)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.frames, b.frames))


def test_adapt_then_reconstruct_is_bit_exact():
    seq = synthetic.make_sequence(64, 64, 2, seed=4)
    deg = degrade_sequence(seq, 37)
    pre = N.build_network(N.NetConfig(4, 2, seed=2))
    config = TR.TrainConfig(TR.FINETUNE, 2, batch_size=2)
    tuned, payload, reports = P.adapt(pre, deg, seq, config=config, patch_size=32)
    rebuilt = P.reconstruct(pre, payload)
    assert N.network_to_bytes(rebuilt) == N.network_to_bytes(tuned)
    assert len(reports) == 2 and deg.qp == 37
