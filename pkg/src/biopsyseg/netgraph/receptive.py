"""Receptive-field analysis.

For layer sequences the standard recurrence is used::

    rf' = rf + (k - 1) * dilation * jump,   jump' = jump * stride

Identity links never enlarge the field, so a densely linked stack has the field
of its longest path; parallel branches take the maximum over branches. For a
built network the field is measured instead, from the support of the input
gradient of one center output pixel.
"""

from __future__ import annotations

from typing import Iterable, Tuple

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from .config import FusionSpec


def sequence_rf(layers: Iterable[Tuple[int, int, int]]) -> int:
    """Field of stacked ``(kernel, dilation, stride)`` layers."""
    rf, jump = 1, 1
    for k, d, s in layers:
        rf += (k - 1) * d * jump
        jump *= s
    return rf


def fusion_rf(spec: FusionSpec) -> Tuple[int, int]:
    if spec.parallel:
        side = max(sequence_rf([(k, d, 1)]) for k, d in spec.layers)
    else:
        side = sequence_rf((k, d, 1) for k, d in spec.layers)
    return side, side


def receptive_field(obj, input_size: int = 0) -> Tuple[int, int]:
    """Receptive field of a fusion spec/kind name, or the measured field of a network."""
    if isinstance(obj, str):
        obj = FusionSpec.of(obj)
    if isinstance(obj, FusionSpec):
        return fusion_rf(obj)
    return measured_rf(obj, input_size)


def measured_rf(graph, input_size: int = 0) -> Tuple[int, int]:
    """Support of d(center output)/d(input) for the finest-resolution instance.

    Weights are made positive and batch norm runs in inference mode so no path
    cancels or is switched off by a ReLU.
    """
    from .model import build_model  # local: model imports this module's package

    cfg = graph.config.replace(resolutions=1, fusion="none")
    probe = build_model(cfg, seed=graph.seed, dtype=np.float64)
    for name, p in probe.params.items():
        if name.endswith(".weight"):
            p.data[...] = np.abs(p.data) + 1e-3
    probe.eval()
    size = input_size or max(cfg.patch_size, 2 ** (cfg.num_levels + 3))
    x = Tensor(np.ones((1, 3, size, size)), requires_grad=True)
    y = probe(x)
    mask = np.zeros(y.shape)
    mask[0, :, size // 2, size // 2] = 1.0
    T.total(T.mul(y, Tensor(mask))).backward()
    support = np.abs(x.grad[0]).sum(axis=0) > 0
    rows, cols = np.nonzero(support)
    return int(rows.max() - rows.min() + 1), int(cols.max() - cols.min() + 1)
