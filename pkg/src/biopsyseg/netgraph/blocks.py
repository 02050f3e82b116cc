"""Encoder, decoder and fusion building blocks."""

from __future__ import annotations

from typing import Optional, Sequence

from .. import tensor as T
from ..errors import ConfigError
from ..tensor import Tensor
from .config import FusionSpec
from .layers import Conv, ConvBN, Deconv, DeconvBN, Registry


def pool_steps(src: int, dst: int) -> int:
    """Number of stride-2 poolings taking spatial size ``src`` to ``dst``."""
    if dst < 1 or src % dst:
        raise ConfigError(f"size {src} is not an integer multiple of {dst}")
    ratio = src // dst
    if ratio & (ratio - 1):
        raise ConfigError(f"size ratio {src}/{dst} is not a power of two")
    return ratio.bit_length() - 1


def downsample(x: Tensor, steps: int) -> Tensor:
    for _ in range(steps):
        x = T.avg_pool(x, 3, 2)
    return x


class RCU:
    """Residual unit: ReLU(conv-BN-ReLU-conv-BN(x) + shortcut(x)).

    A strided or channel-changing unit uses a 1x1 projection shortcut.
    ``inject`` lets an input-aware path add to the sum before the final ReLU.
    """

    def __init__(self, reg: Registry, name, cin, cout, stride=1):
        self.body1 = ConvBN(reg, f"{name}.c1", cin, cout, 3, stride)
        self.body2 = ConvBN(reg, f"{name}.c2", cout, cout, 3, 1, act=False)
        self.project = None
        if stride != 1 or cin != cout:
            self.project = ConvBN(reg, f"{name}.proj", cin, cout, 1, stride, act=False)

    def preactivation(self, x: Tensor) -> Tensor:
        shortcut = self.project(x) if self.project else x
        return T.add(self.body2(self.body1(x)), shortcut)

    def __call__(self, x: Tensor, inject=None) -> Tensor:
        z = self.preactivation(x)
        if inject is not None:
            z = inject(z)
        return T.relu(z)


class InputAware:
    """Pooled copy of the input image projected into a block's feature space.

    avg-pool (stride 2, repeated) -> 1x1 conv -> BN -> ReLU -> depthwise 3x3 -> BN
    """

    def __init__(self, reg: Registry, name, in_channels, channels):
        self.proj = ConvBN(reg, f"{name}.proj", in_channels, channels, 1)
        self.mix = ConvBN(reg, f"{name}.mix", channels, channels, 3, groups=channels, act=False)

    def __call__(self, image: Tensor, size: tuple) -> Tensor:
        h, w = image.shape[2:]
        steps = pool_steps(h, size[0])
        if pool_steps(w, size[1]) != steps:
            raise ConfigError(f"image {h}x{w} and block {size} have different aspect ratios")
        return self.mix(self.proj(downsample(image, steps)))

    def zero_(self) -> None:
        self.proj.conv.zero_()
        self.mix.conv.zero_()


def ia_rcu_forward(x_block: Tensor, image: Tensor, ia: InputAware) -> Tensor:
    """``x_block + F_IA(image)``; output shape equals ``x_block``'s."""
    return T.add(x_block, ia(image, x_block.shape[2:]))


class Link:
    """Encoder level ``src`` projected onto decoder level ``dst``."""

    def __init__(self, reg: Registry, name, src, dst, cin, cout, identity=False):
        self.src, self.dst = src, dst
        self.steps = dst - src
        self.proj = None if identity else ConvBN(reg, name, cin, cout, 1, act=False)

    def __call__(self, x: Tensor) -> Tensor:
        x = downsample(x, self.steps)
        return self.proj(x) if self.proj else x

    def zero_(self) -> None:
        if self.proj:
            self.proj.conv.zero_()


class DenseDecodeBlock:
    """Decoder level ``l``: F_d(prev) + sum of projected encoder outputs."""

    def __init__(self, reg: Registry, name, level, cin, cout, stride, links: Sequence[Link]):
        self.level = level
        self.up = DeconvBN(reg, f"{name}.up", cin, cout, 3, stride)
        self.links = list(links)

    def __call__(self, prev: Tensor, encoder_outputs: Sequence[Tensor]) -> Tensor:
        terms = [self.up(prev)]
        for link in self.links:
            terms.append(link(encoder_outputs[link.src - 1]))
        return T.add_n(terms)


def dense_decode_block(prev: Tensor, encoder_outputs: Sequence[Tensor], block: DenseDecodeBlock) -> Tensor:
    return block(prev, encoder_outputs)


class SparseDecoder:
    """C-channel bottom-up path of 1x1 projections and 1x1 stride-2 deconvolutions."""

    def __init__(self, reg: Registry, name, encoder_widths, num_classes):
        self.proj = [
            ConvBN(reg, f"{name}.proj{i + 1}", c, num_classes, 1, act=False) for i, c in enumerate(encoder_widths)
        ]
        n = len(encoder_widths)
        self.up = [Deconv(reg, f"{name}.up{i + 1}", num_classes, num_classes, 1, 2) for i in range(n)]
        self.stages: list = []

    def __call__(self, encoder_outputs: Sequence[Tensor]) -> Tensor:
        n = len(self.proj)
        s = self.proj[n - 1](encoder_outputs[n - 1])
        self.stages = [s]
        for lvl in range(n - 2, -1, -1):
            s = T.add(self.proj[lvl](encoder_outputs[lvl]), self.up[lvl + 1](s))
            self.stages.append(s)
        return self.up[0](s)

    def zero_(self) -> None:
        for p in self.proj:
            p.conv.zero_()


def sparse_decode(encoder_outputs: Sequence[Tensor], decoder: SparseDecoder) -> Tensor:
    return decoder(encoder_outputs)


class Fusion:
    """Multi-resolution fusion over the element-wise sum of aligned outputs."""

    def __init__(self, reg: Registry, name, spec: FusionSpec, channels):
        self.spec = spec
        last = len(spec.layers) - 1
        self.layers = []
        for i, (k, r) in enumerate(spec.layers):
            lname = f"{name}.l{i + 1}"
            if spec.parallel or i == last:
                self.layers.append(Conv(reg, lname, channels, channels, k, dilation=r, bias=True))
            else:
                self.layers.append(ConvBN(reg, lname, channels, channels, k, dilation=r))

    def __call__(self, outputs: Sequence[Tensor]) -> Tensor:
        shape = outputs[0].shape
        for o in outputs[1:]:
            if o.shape != shape:
                raise ConfigError(f"fusion inputs misaligned: {shape} vs {o.shape}")
        z = T.add_n(outputs)
        if self.spec.parallel:
            return T.add_n([layer(z) for layer in self.layers])
        if self.spec.identity_links:
            for layer in self.layers:
                z = T.add(z, layer(z))
            return z
        for layer in self.layers:
            z = layer(z)
        return z

    def zero_(self) -> None:
        for layer in self.layers:
            conv = layer if isinstance(layer, Conv) else layer.conv
            conv.zero_()


def fuse_multires(outputs: Sequence[Tensor], fusion: Optional[Fusion]) -> Tensor:
    if len(outputs) < 2:
        raise ConfigError("fusion needs at least two resolution outputs")
    return fusion(outputs)
