"""Finite-difference gradient checks for every differentiable op and block.

Each case builds a small float64 subgraph (inputs no larger than 1x4x8x8) and
hands it to :func:`biopsyseg.tensor.grad_check`.
"""

from __future__ import annotations

from typing import Callable, Dict, Optional

import numpy as np

from . import tensor as T
from .netgraph import blocks as B
from .netgraph.config import FusionSpec, preset
from .netgraph.layers import Registry
from .netgraph.model import build_model
from .tensor import BatchNormState, ConvParams, GradCheckReport, Tensor

TOLERANCE = 1e-4
SHAPE = (1, 4, 8, 8)


def _leaf(rng, shape, scale=0.5):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _conv(k, stride=1, dilation=1, groups=1, bias=True, cin=4, cout=4):
    def builder(rng):
        w = _leaf(rng, (cout, cin // groups, k, k))
        b = _leaf(rng, (1, cout, 1, 1)) if bias else None
        p = ConvParams(w, b, stride=stride, padding=dilation * (k - 1) // 2, dilation=dilation, groups=groups)
        return (lambda x: T.conv2d(x, p)), [w] + ([b] if b is not None else [])

    return builder


def _deconv(k, stride):
    def builder(rng):
        w = _leaf(rng, (4, 3, k, k))
        b = _leaf(rng, (1, 3, 1, 1))
        p = ConvParams(w, b, stride=stride, padding=(k - 1) // 2)
        return (lambda x: T.conv2d_transpose(x, p, stride - 1)), [w, b]

    return builder


def _batch_norm(training):
    def builder(rng):
        g = Tensor(1.0 + 0.3 * rng.standard_normal((1, 4, 1, 1)), requires_grad=True)
        b = _leaf(rng, (1, 4, 1, 1))
        st = BatchNormState(rng.standard_normal(4) * 0.1, 1.0 + rng.random(4))
        return (lambda x: T.batch_norm(x, g, b, st, training)), [g, b]

    return builder


def _simple(fn, n_params=0, shape=(1, 4, 1, 1)):
    def builder(rng):
        ps = [_leaf(rng, shape) for _ in range(n_params)]
        return (lambda *xs: fn(*xs, *ps)), ps

    return builder


def _cross_entropy(rng):
    target = rng.integers(0, 4, (1, 8, 8))
    target[0, 0, :3] = 255
    weights = np.array([0.5, 2.0, 1.0, 5.0])
    return (lambda x: T.weighted_softmax_cross_entropy(x, target, weights)), []


def _registry(rng):
    return Registry(rng, np.float64)


def _block(make):
    def builder(rng):
        reg = _registry(rng)
        fwd = make(reg)
        return fwd, list(reg.params.values())

    return builder


def _rcu(stride, cout=4):
    return _block(lambda reg: B.RCU(reg, "rcu", 4, cout, stride))


def _ia_rcu(reg):
    rcu = B.RCU(reg, "rcu", 4, 4)
    ia = B.InputAware(reg, "ia", 3, 4)
    return lambda x, image: rcu(x, inject=lambda z: B.ia_rcu_forward(z, image, ia))


def _dense_decode(reg):
    # decoder level 2 of a 3-level toy: encoder outputs at 8x8 (level 1) and 4x4 (level 2)
    links = [B.Link(reg, "link1", 1, 2, 2, 4), B.Link(reg, "link2", 2, 2, 3, 4)]
    block = B.DenseDecodeBlock(reg, "dec2", 2, 4, 4, 2, links)
    return lambda prev, e1, e2: B.dense_decode_block(prev, [e1, e2], block)


def _sparse_decode(reg):
    dec = B.SparseDecoder(reg, "sparse", (2, 3, 4), 4)
    return lambda e1, e2, e3: B.sparse_decode([e1, e2, e3], dec)


def _fusion(kind):
    def make(reg):
        fusion = B.Fusion(reg, "fusion", FusionSpec.of(kind), 4)
        return lambda a, b: B.fuse_multires([a, b], fusion)

    return _block(make)


def _model(multi):
    def builder(rng):
        cfg = preset("full", multi=multi, num_levels=3, channel_scale="1/8", num_classes=4)
        graph = build_model(cfg, seed=int(rng.integers(1 << 31)), dtype=np.float64)
        if multi:
            return (lambda a, b: graph([a, b])), list(graph.params.values())
        return (lambda x: graph(x)), list(graph.params.values())

    return builder


# name -> (builder, input shapes, coordinates sampled per tensor)
CASES: Dict[str, tuple] = {
    "conv2d_3x3": (_conv(3), [SHAPE], None),
    "conv2d_3x3_stride2_dilation2": (_conv(3, 2, 2), [SHAPE], None),
    "conv2d_1x1": (_conv(1, bias=False), [SHAPE], None),
    "conv2d_depthwise": (_conv(3, groups=4, bias=False), [SHAPE], None),
    "conv2d_transpose_3x3_stride2": (_deconv(3, 2), [(1, 4, 4, 4)], None),
    "conv2d_transpose_1x1_stride2": (_deconv(1, 2), [(1, 4, 4, 4)], None),
    "avg_pool_stride2": (_simple(lambda x: T.avg_pool(x, 3, 2)), [SHAPE], None),
    "avg_pool_stride1": (_simple(lambda x: T.avg_pool(x, 3, 1)), [SHAPE], None),
    "batch_norm_train": (_batch_norm(True), [SHAPE], None),
    "batch_norm_eval": (_batch_norm(False), [SHAPE], None),
    "relu": (_simple(T.relu), [SHAPE], None),
    "add": (_simple(T.add), [SHAPE, SHAPE], None),
    "mul": (_simple(T.mul), [SHAPE, SHAPE], None),
    "add_channel_bias": (_simple(T.add_channel_bias, 1), [SHAPE], None),
    "central_crop": (_simple(lambda x: T.central_crop(x, 4)), [SHAPE], None),
    "softmax_cross_entropy": (_cross_entropy, [SHAPE], None),
    "rcu_identity": (_rcu(1), [SHAPE], None),
    "rcu_stride2_projection": (_rcu(2, 3), [SHAPE], None),
    "ia_rcu": (_block(_ia_rcu), [SHAPE, (1, 3, 8, 8)], None),
    "dense_decode": (_block(_dense_decode), [(1, 4, 2, 2), (1, 2, 8, 8), (1, 3, 4, 4)], None),
    "sparse_decode": (_block(_sparse_decode), [(1, 2, 8, 8), (1, 3, 4, 4), (1, 4, 2, 2)], None),
    "fusion_ours": (_fusion("ours"), [SHAPE, SHAPE], None),
    "fusion_a": (_fusion("fusion_a"), [SHAPE, SHAPE], None),
    "fusion_b": (_fusion("fusion_b"), [SHAPE, SHAPE], None),
    "model_single": (_model(False), [(1, 3, 8, 8)], 16),
}


def run_case(name: str, seed: int = 0, tolerance: float = TOLERANCE) -> GradCheckReport:
    builder, shapes, entries = CASES[name]
    return T.grad_check(builder, shapes, tolerance, seed=seed, max_entries=entries)


def run_suite(
    seed: int = 0, tolerance: float = TOLERANCE, names=None, progress: Optional[Callable] = None
) -> Dict[str, GradCheckReport]:
    out = {}
    for name in names or CASES:
        out[name] = run_case(name, seed, tolerance)
        if progress:
            progress(name, out[name])
    return out
