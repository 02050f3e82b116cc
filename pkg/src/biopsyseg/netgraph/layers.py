"""Parameterized layers that register their tensors on a shared registry."""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from .. import tensor as T
from ..tensor import BatchNormState, ConvParams, Tensor


class Registry:
    """Owns every trainable tensor and batch-norm state of one network."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.rng = rng
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.bn_states: "OrderedDict[str, BatchNormState]" = OrderedDict()
        self.layers: list = []
        self.training = True

    def param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def he_normal(self, shape, fan_in: float) -> np.ndarray:
        return self.rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)


class Conv:
    """Same-padded 3x3 or 1x1 convolution."""

    def __init__(self, reg: Registry, name, cin, cout, k=3, stride=1, dilation=1, groups=1, bias=False):
        self.name, self.reg = name, reg
        fan_in = cin // groups * k * k
        w = reg.param(f"{name}.weight", reg.he_normal((cout, cin // groups, k, k), fan_in))
        b = reg.param(f"{name}.bias", np.zeros((1, cout, 1, 1))) if bias else None
        self.params = ConvParams(w, b, stride=stride, padding=dilation * (k - 1) // 2, dilation=dilation, groups=groups)
        self.geometry = ("conv", k, stride, dilation)
        self.out_shape = None
        reg.layers.append(self)

    def __call__(self, x: Tensor) -> Tensor:
        y = T.conv2d(x, self.params)
        self.out_shape = y.shape
        return y

    def zero_(self) -> None:
        self.params.weight.data[...] = 0


class Deconv:
    """3x3 or 1x1 transposed convolution that multiplies spatial size by ``stride``."""

    def __init__(self, reg: Registry, name, cin, cout, k=3, stride=2, bias=False):
        self.name, self.reg = name, reg
        fan_in = cin * k * k / (stride * stride)
        w = reg.param(f"{name}.weight", reg.he_normal((cin, cout, k, k), fan_in))
        b = reg.param(f"{name}.bias", np.zeros((1, cout, 1, 1))) if bias else None
        self.params = ConvParams(w, b, stride=stride, padding=(k - 1) // 2)
        self.output_padding = stride - 1
        self.geometry = ("deconv", k, stride, 1)
        self.out_shape = None
        reg.layers.append(self)

    def __call__(self, x: Tensor) -> Tensor:
        y = T.conv2d_transpose(x, self.params, self.output_padding)
        self.out_shape = y.shape
        return y

    def zero_(self) -> None:
        self.params.weight.data[...] = 0


class BatchNorm:
    def __init__(self, reg: Registry, name, channels):
        self.name, self.reg = name, reg
        self.gamma = reg.param(f"{name}.gamma", np.ones((1, channels, 1, 1)))
        self.beta = reg.param(f"{name}.beta", np.zeros((1, channels, 1, 1)))
        self.state = BatchNormState.fresh(channels, reg.dtype)
        reg.bn_states[name] = self.state

    def __call__(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.state, self.reg.training)


class ConvBN:
    """Convolution followed by batch norm and, optionally, ReLU."""

    def __init__(self, reg, name, cin, cout, k=3, stride=1, dilation=1, groups=1, act=True):
        self.conv = Conv(reg, f"{name}.conv", cin, cout, k, stride, dilation, groups)
        self.bn = BatchNorm(reg, f"{name}.bn", cout)
        self.act = act

    def __call__(self, x: Tensor) -> Tensor:
        y = self.bn(self.conv(x))
        return T.relu(y) if self.act else y


class DeconvBN:
    def __init__(self, reg, name, cin, cout, k=3, stride=2, act=True):
        self.deconv = Deconv(reg, f"{name}.deconv", cin, cout, k, stride)
        self.bn = BatchNorm(reg, f"{name}.bn", cout)
        self.act = act

    def __call__(self, x: Tensor) -> Tensor:
        y = self.bn(self.deconv(x))
        return T.relu(y) if self.act else y
