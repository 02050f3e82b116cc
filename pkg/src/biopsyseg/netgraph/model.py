"""Encoder-decoder instances, the multi-resolution composition, and model utilities."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .. import tensor as T
from ..archive import load_archive, save_archive
from ..errors import ConfigError, DataError
from ..tensor import Tensor, no_grad
from .blocks import RCU, DenseDecodeBlock, Fusion, InputAware, Link, SparseDecoder
from .config import FusionSpec, ModelConfig
from .layers import ConvBN, Deconv, Registry

IMAGE_CHANNELS = 3


class EncoderDecoder:
    """One resolution instance mapping ``(N, 3, s, s)`` to ``(N, C, s, s)``."""

    def __init__(self, reg: Registry, name: str, cfg: ModelConfig):
        self.cfg = cfg
        enc, dec = cfg.encoder_widths, cfg.decoder_widths
        L, C = cfg.num_levels, cfg.num_classes
        self.stem = ConvBN(reg, f"{name}.enc1.stem", IMAGE_CHANNELS, enc[0], 3, stride=2)
        self.levels = []
        self.inject = []
        for lvl in range(2, L + 1):
            cin, cout = enc[lvl - 2], enc[lvl - 1]
            first = RCU(reg, f"{name}.enc{lvl}.rcu1", cin, cout, stride=2)
            second = RCU(reg, f"{name}.enc{lvl}.rcu2", cout, cout)
            self.levels.append((first, second))
            ia = InputAware(reg, f"{name}.enc{lvl}.ia", IMAGE_CHANNELS, cout) if cfg.ia_rcu else None
            self.inject.append(ia)

        self.wiring = []
        self.decoder = []
        for lvl in range(L, 0, -1):
            # schedule runs bottleneck-first: level L uses dec[0], level 1 uses dec[-1] == C
            cin = enc[L - 1] if lvl == L else dec[L - lvl - 1]
            cout = dec[L - lvl]
            links = []
            if cfg.connectivity == "dense":
                sources = range(1, lvl + 1)
            elif cfg.connectivity == "residual":
                sources = [lvl]
            else:
                sources = []
            for src in sources:
                identity = cfg.connectivity == "residual" and enc[src - 1] == cout
                links.append(Link(reg, f"{name}.dec{lvl}.link{src}", src, lvl, enc[src - 1], cout, identity))
                self.wiring.append((src, lvl))
            stride = 1 if lvl == L else 2
            self.decoder.append(DenseDecodeBlock(reg, f"{name}.dec{lvl}", lvl, cin, cout, stride, links))
        self.head = Deconv(reg, f"{name}.head", C, C, 3, 2, bias=True)
        self.sparse = SparseDecoder(reg, f"{name}.sparse", enc, C) if cfg.dual_decoder else None

    def encode(self, x: Tensor) -> list:
        outs = [self.stem(x)]
        for (first, second), ia in zip(self.levels, self.inject):
            h = first(outs[-1])
            if ia is None:
                h = second(h)
            else:
                h = second(h, inject=lambda z, ia=ia: T.add(z, ia(x, z.shape[2:])))
            outs.append(h)
        return outs

    def decode_dense(self, encoded: Sequence[Tensor]) -> Tensor:
        h = encoded[-1]
        for block in self.decoder:
            h = block(h, encoded)
        return self.head(h)

    def __call__(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        div = 2**self.cfg.num_levels
        if c != IMAGE_CHANNELS:
            raise ConfigError(f"expected {IMAGE_CHANNELS}-channel input, got {c}")
        if h % div or w % div:
            raise ConfigError(f"input {h}x{w} not divisible by {div}; pad the patch to a multiple of {div}")
        encoded = self.encode(x)
        y = self.decode_dense(encoded)
        if self.sparse is not None:
            y = T.add(y, self.sparse(encoded))
        return y


class NetworkGraph:
    """A built network: P encoder-decoder instances plus optional fusion."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = cfg
        self.seed = seed
        self.registry = Registry(np.random.default_rng(seed), dtype)
        self.instances = [
            EncoderDecoder(self.registry, f"inst{p + 1}", cfg) for p in range(cfg.resolutions)
        ]
        self.fusion = None
        if cfg.resolutions >= 2:
            spec = FusionSpec.of(cfg.fusion)
            self.fusion = Fusion(self.registry, "fusion", spec, cfg.num_classes)

    # -- parameters --------------------------------------------------------

    @property
    def params(self):
        return self.registry.params

    @property
    def dtype(self):
        return self.registry.dtype

    @property
    def wiring(self) -> list:
        return list(self.instances[0].wiring)

    def train(self) -> "NetworkGraph":
        self.registry.training = True
        return self

    def eval(self) -> "NetworkGraph":
        self.registry.training = False
        return self

    @property
    def training(self) -> bool:
        return self.registry.training

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        out = {name: p.data for name, p in self.params.items()}
        for name, st in self.registry.bn_states.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def load_state_dict(self, state: dict) -> None:
        expected = self.state_dict()
        missing = sorted(set(expected) - set(state))
        if missing:
            raise DataError(f"checkpoint is missing {len(missing)} tensors, e.g. {missing[0]}")
        for name, p in self.params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DataError(f"checkpoint tensor {name} has shape {arr.shape}, expected {p.shape}")
            p.data[...] = arr
        for name, st in self.registry.bn_states.items():
            st.running_mean[...] = state[f"{name}.running_mean"]
            st.running_var[...] = state[f"{name}.running_var"]

    def save(self, path) -> None:
        save_archive(path, self.state_dict())

    def load(self, path) -> None:
        self.load_state_dict(load_archive(path))

    # -- forward -----------------------------------------------------------

    def instance_forward(self, x: Tensor, p: int = -1) -> Tensor:
        return self.instances[p](x)

    def __call__(self, inputs) -> Tensor:
        """``inputs`` is one tensor (single resolution) or P tensors, context-most first."""
        if isinstance(inputs, Tensor):
            inputs = [inputs]
        if len(inputs) != len(self.instances):
            raise ConfigError(f"expected {len(self.instances)} inputs, got {len(inputs)}")
        outs = [inst(x) for inst, x in zip(self.instances, inputs)]
        if self.fusion is None:
            return outs[0]
        size = outs[-1].shape[2]
        aligned = [T.central_crop(y, size) for y in outs[:-1]] + [outs[-1]]
        return self.fusion(aligned)

    def predict(self, inputs) -> np.ndarray:
        was = self.training
        self.eval()
        try:
            with no_grad():
                return self(inputs).data
        finally:
            self.registry.training = was

    def summary(self, input_size: Optional[int] = None) -> str:
        """One line per layer: name, geometry, output shape, parameter count."""
        cfg = self.config
        size = input_size or cfg.patch_size
        sizes = [size + 2 * (cfg.resolutions - i) * cfg.context_border for i in range(1, cfg.resolutions + 1)]
        dummy = [Tensor(np.zeros((1, IMAGE_CHANNELS, s, s), dtype=self.dtype)) for s in sizes]
        self.predict(dummy)
        rows = [f"{'layer':48s} {'kind':6s} {'k':>2s} {'s':>2s} {'d':>3s} {'output':>20s} {'params':>10s}"]
        for layer in self.registry.layers:
            kind, k, s, d = layer.geometry
            n = layer.params.weight.data.size + (layer.params.bias.data.size if layer.params.bias else 0)
            shape = "x".join(str(v) for v in layer.out_shape[1:]) if layer.out_shape else "-"
            rows.append(f"{layer.name:48s} {kind:6s} {k:2d} {s:2d} {d:3d} {shape:>20s} {n:10d}")
        rows.append(f"total trainable parameters: {count_params(self)}")
        return "\n".join(rows)


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> NetworkGraph:
    """Instantiate a network with He-initialized convolutions, BN gamma=1 beta=0."""
    config.validate()
    return NetworkGraph(config, seed, dtype)


def count_params(graph: NetworkGraph, prefix: str = "") -> int:
    return int(sum(p.data.size for name, p in graph.params.items() if name.startswith(prefix)))


def image_to_tensor(images: np.ndarray, dtype=np.float32) -> Tensor:
    """``(N, H, W, 3)`` uint8 RGB to a normalized ``(N, 3, H, W)`` tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    x = (arr.astype(dtype) / 255.0 - 0.5) / 0.25
    return Tensor(np.ascontiguousarray(x.transpose(0, 3, 1, 2)), dtype=dtype)
