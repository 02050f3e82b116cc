"""Minimal reverse-mode automatic differentiation over rank-4 arrays.

Every value is a :class:`Tensor` holding an ``(N, C, H, W)`` numpy array.
Operations record a backward closure on their output; :meth:`Tensor.backward`
walks the recorded graph in reverse topological order. Only the operations
needed by the segmentation networks are provided.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigError, DataError

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, checkpoint IO)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """Dense ``(N, C, H, W)`` array with optional gradient storage."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if arr.ndim != 4:
            raise ConfigError(f"tensor must be rank 4 (N, C, H, W), got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ConfigError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if self.data.size != 1:
            raise ConfigError(f"backward() requires a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


# ---------------------------------------------------------------------------
# element-wise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of several same-shape tensors, recorded as one node."""
    tensors = list(tensors)
    if not tensors:
        raise ConfigError("add_n: empty input")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ConfigError(f"add: shape mismatch {shape} vs {t.shape}")
    if len(tensors) == 1:
        return tensors[0]
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total += t.data
    return _result(total, tensors, lambda g: tuple(g for _ in tensors))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ConfigError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Broadcast a ``(1, C, 1, 1)`` bias over ``x``."""
    if bias.shape != (1, x.shape[1], 1, 1):
        raise ConfigError(f"bias shape {bias.shape} does not match {x.shape[1]} channels")

    def backward(g):
        return g, g.sum(axis=(0, 2, 3), keepdims=True)

    return _result(x.data + bias.data, (x, bias), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * mask,))


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a ``(1, 1, 1, 1)`` tensor."""
    out = np.asarray(x.data.sum(), dtype=x.dtype).reshape(1, 1, 1, 1)
    return _result(out, (x,), lambda g: (np.broadcast_to(g.reshape(()), x.shape).astype(x.dtype),))


def central_crop(x: Tensor, size: int) -> Tensor:
    """Centered ``size x size`` window of the spatial dimensions."""
    h, w = x.shape[2:]
    if size > h or size > w or (h - size) % 2 or (w - size) % 2:
        raise ConfigError(f"central_crop: cannot center {size}x{size} inside {h}x{w} (needs even margins)")
    top, left = (h - size) // 2, (w - size) // 2
    if top == 0 and left == 0:
        return x
    window = (slice(None), slice(None), slice(top, top + size), slice(left, left + size))

    def backward(g):
        full = np.zeros_like(x.data)
        full[window] = g
        return (full,)

    return _result(x.data[window].copy(), (x,), backward)


# ---------------------------------------------------------------------------
# convolution


@dataclass
class ConvParams:
    """Kernel and geometry of one convolution.

    ``weight`` is ``(out, in // groups, k, k)`` for a forward convolution and
    ``(in, out, k, k)`` for a transposed one, so that a transposed convolution
    is the adjoint of the forward convolution sharing the same array.
    """

    weight: Tensor
    bias: Optional[Tensor] = None
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    groups: int = 1

    def __post_init__(self):
        o, i, kh, kw = self.weight.shape
        if kh != kw or kh not in (1, 3):
            raise ConfigError(f"kernel must be 1x1 or 3x3, got {kh}x{kw}")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0 or self.groups < 1:
            raise ConfigError(
                f"invalid geometry stride={self.stride} padding={self.padding} dilation={self.dilation}"
            )
        if o % self.groups:
            raise ConfigError(f"out channels {o} not divisible by groups {self.groups}")

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]


def conv_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def transpose_output_size(size: int, k: int, stride: int, padding: int, dilation: int, output_padding: int) -> int:
    return (size - 1) * stride - 2 * padding + dilation * (k - 1) + 1 + output_padding


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _windows(xp: np.ndarray, k: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    """Read-only view ``(N, C, k, k, ho, wo)`` of every kernel tap."""
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp,
        shape=(n, c, k, k, ho, wo),
        strides=(sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )


def _tap(k_i: int, k_j: int, dilation: int, stride: int, ho: int, wo: int):
    r0, c0 = k_i * dilation, k_j * dilation
    return (
        slice(None),
        slice(None),
        slice(r0, r0 + stride * (ho - 1) + 1, stride),
        slice(c0, c0 + stride * (wo - 1) + 1, stride),
    )


def _col2im(cols: np.ndarray, padded_shape, k, stride, dilation, ho, wo) -> np.ndarray:
    """Scatter-add ``(N, C, k, k, ho, wo)`` taps back onto a padded canvas."""
    canvas = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            canvas[_tap(i, j, dilation, stride, ho, wo)] += cols[:, :, i, j]
    return canvas


def _conv_forward(xp, w, groups, stride, dilation, ho, wo, algorithm):
    n, c = xp.shape[:2]
    o, cg, k, _ = w.shape
    og = o // groups
    wg = w.reshape(groups, og, cg * k * k) if algorithm == "im2col" else None
    if algorithm == "im2col":
        cols = _windows(xp, k, stride, dilation, ho, wo).reshape(n, groups, cg * k * k, ho * wo)
        out = np.matmul(wg, cols)
        return out.reshape(n, o, ho, wo), cols
    out = np.zeros((n, groups, og, ho * wo), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            xs = xp[_tap(i, j, dilation, stride, ho, wo)].reshape(n, groups, cg, ho * wo)
            out += np.matmul(w[:, :, i, j].reshape(groups, og, cg), xs)
    return out.reshape(n, o, ho, wo), None


def _conv_grads(xp, w, g, groups, stride, dilation, cols, need_x, need_w):
    """Gradients w.r.t. the padded input and the kernel of a forward conv."""
    n, c = xp.shape[:2]
    o, cg, k, _ = w.shape
    og = o // groups
    ho, wo = g.shape[2:]
    gg = g.reshape(n, groups, og, ho * wo)
    dxp = dw = None
    if cols is not None:
        if need_w:
            dw = np.matmul(gg, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(w.shape)
        if need_x:
            dcols = np.matmul(w.reshape(groups, og, cg * k * k).transpose(0, 2, 1), gg)
            dxp = _col2im(dcols.reshape(n, c, k, k, ho, wo), xp.shape, k, stride, dilation, ho, wo)
        return dxp, dw
    if need_w:
        dw = np.zeros_like(w)
    if need_x:
        dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            tap = _tap(i, j, dilation, stride, ho, wo)
            wt = w[:, :, i, j].reshape(groups, og, cg)
            if need_w:
                xs = xp[tap].reshape(n, groups, cg, ho * wo)
                dw[:, :, i, j] = np.matmul(gg, xs.transpose(0, 1, 3, 2)).sum(axis=0).reshape(o, cg)
            if need_x:
                dxp[tap] += np.matmul(wt.transpose(0, 2, 1), gg).reshape(n, c, ho, wo)
    return dxp, dw


def _pick_algorithm(k: int, algorithm: str) -> str:
    if algorithm == "auto":
        return "direct" if k == 1 else "im2col"
    if algorithm not in ("direct", "im2col"):
        raise ConfigError(f"unknown convolution algorithm {algorithm!r}")
    return algorithm


def conv2d(x: Tensor, params: ConvParams, algorithm: str = "auto") -> Tensor:
    """Cross-correlation with zero padding, stride, dilation and channel groups."""
    w = params.weight
    o, cg, k, _ = w.shape
    n, c, h, wdt = x.shape
    if c != cg * params.groups:
        raise ConfigError(f"conv2d: input has {c} channels, kernel expects {cg * params.groups}")
    s, p, d = params.stride, params.padding, params.dilation
    ho, wo = conv_output_size(h, k, s, p, d), conv_output_size(wdt, k, s, p, d)
    if ho < 1 or wo < 1:
        raise ConfigError(f"conv2d: output height/width {ho}x{wo} < 1 for input {h}x{wdt}")
    algo = _pick_algorithm(k, algorithm)
    xp = _pad(x.data, p)
    out, cols = _conv_forward(xp, w.data, params.groups, s, d, ho, wo, algo)
    parents = [x, w]
    if params.bias is not None:
        out = out + params.bias.data
        parents.append(params.bias)

    def backward(g):
        dxp, dw = _conv_grads(xp, w.data, g, params.groups, s, d, cols, x.requires_grad, w.requires_grad)
        dx = None
        if dxp is not None:
            dx = dxp[:, :, p : p + h, p : p + wdt] if p else dxp
        grads = [dx, dw]
        if params.bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), keepdims=True))
        return grads

    return _result(out, parents, backward)


def conv2d_transpose(x: Tensor, params: ConvParams, output_padding: int = 0) -> Tensor:
    """Transposed convolution; the adjoint of :func:`conv2d` with the same kernel."""
    w = params.weight
    cin, cout, k, _ = w.shape
    n, c, h, wdt = x.shape
    s, p, d = params.stride, params.padding, params.dilation
    if params.groups != 1:
        raise ConfigError("conv2d_transpose supports groups=1 only")
    if c != cin:
        raise ConfigError(f"conv2d_transpose: input has {c} channels, kernel expects {cin}")
    if not 0 <= output_padding < max(s, d):
        raise ConfigError(f"output_padding {output_padding} must be < stride {s}")
    ho = transpose_output_size(h, k, s, p, d, output_padding)
    wo = transpose_output_size(wdt, k, s, p, d, output_padding)
    if ho < 1 or wo < 1:
        raise ConfigError(f"conv2d_transpose: output height/width {ho}x{wo} < 1")
    w2 = w.data.reshape(cin, cout * k * k)
    xs = x.data.reshape(n, cin, h * wdt)
    dcols = np.matmul(w2.T, xs).reshape(n, cout, k, k, h, wdt)
    canvas = _col2im(dcols, (n, cout, ho + 2 * p, wo + 2 * p), k, s, d, h, wdt)
    out = canvas[:, :, p : p + ho, p : p + wo]
    if p:
        out = out.copy()
    parents = [x, w]
    if params.bias is not None:
        out = out + params.bias.data
        parents.append(params.bias)

    def backward(g):
        gp = _pad(g, p)
        cols = _windows(gp, k, s, d, h, wdt).reshape(n, cout * k * k, h * wdt)
        dx = np.matmul(w2, cols).reshape(x.shape) if x.requires_grad else None
        dw = None
        if w.requires_grad:
            dw = np.matmul(xs, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        grads = [dx, dw]
        if params.bias is not None:
            grads.append(g.sum(axis=(0, 2, 3), keepdims=True))
        return grads

    return _result(out, parents, backward)


def avg_pool(x: Tensor, k: int = 3, stride: int = 2) -> Tensor:
    """3x3 average pooling, padding 1, divisor counts only in-image pixels."""
    if k != 3:
        raise ConfigError("avg_pool supports k=3 only")
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, 3, stride, 1, 1), conv_output_size(w, 3, stride, 1, 1)
    if ho < 1 or wo < 1:
        raise ConfigError(f"avg_pool: output {ho}x{wo} < 1 for input {h}x{w}")
    xp = _pad(x.data, 1)
    ones = _pad(np.ones((1, 1, h, w), dtype=x.dtype), 1)
    acc = np.zeros((n, c, ho, wo), dtype=x.dtype)
    counts = np.zeros((1, 1, ho, wo), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            tap = _tap(i, j, 1, stride, ho, wo)
            acc += xp[tap]
            counts += ones[tap]
    out = acc / counts

    def backward(g):
        gs = g / counts
        dxp = np.zeros_like(xp)
        for i in range(3):
            for j in range(3):
                dxp[_tap(i, j, 1, stride, ho, wo)] += gs
        return (dxp[:, :, 1 : 1 + h, 1 : 1 + w],)

    return _result(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization; ``gamma``/``beta`` are ``(1, C, 1, 1)``."""
    c = x.shape[1]
    if gamma.shape != (1, c, 1, 1) or beta.shape != (1, c, 1, 1):
        raise ConfigError(f"batch_norm: gamma/beta shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    axes = (0, 2, 3)
    if training:
        mean = x.data.mean(axis=axes, keepdims=True)
        centered = x.data - mean
        var = (centered * centered).mean(axis=axes, keepdims=True)
        count = x.data.size // c
        unbiased = var * (count / (count - 1)) if count > 1 else var
        m = state.momentum
        state.running_mean[...] = (1 - m) * state.running_mean + m * mean.reshape(-1)
        state.running_var[...] = (1 - m) * state.running_var + m * unbiased.reshape(-1)
    else:
        mean = state.running_mean.reshape(1, c, 1, 1).astype(x.dtype)
        var = state.running_var.reshape(1, c, 1, 1).astype(x.dtype)
        centered = x.data - mean
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = centered * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes, keepdims=True)
        dbeta = g.sum(axis=axes, keepdims=True)
        dxhat = g * gamma.data
        if training:
            count = x.data.size // c
            dx = inv_std / count * (
                count * dxhat - dxhat.sum(axis=axes, keepdims=True) - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# loss


def weighted_softmax_cross_entropy(
    logits: Tensor, target: np.ndarray, class_weights, ignore_index: Optional[int] = 255
) -> Tensor:
    """Mean over scored pixels of ``w[t] * -log softmax(logits)[t]``."""
    n, c, h, w = logits.shape
    target = np.asarray(target)
    if target.shape != (n, h, w):
        raise ConfigError(f"target shape {target.shape} does not match logits {(n, h, w)}")
    weights = np.asarray(class_weights, dtype=logits.dtype)
    if weights.shape != (c,):
        raise ConfigError(f"expected {c} class weights, got {weights.shape}")
    valid = np.ones(target.shape, bool) if ignore_index is None else target != ignore_index
    bad = valid & ((target < 0) | (target >= c))
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        raise DataError(f"label {int(target[idx])} out of range 0..{c - 1} at (batch, row, col) {idx}")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise DataError("no scored pixels in target (all ignored)")
    safe = np.where(valid, target, 0)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    pix_w = weights[safe] * valid
    loss = float((pix_w * -picked).sum() / n_valid)
    out = np.full((1, 1, 1, 1), loss, dtype=logits.dtype)

    def backward(g):
        probs = np.exp(logp)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
        coef = (pix_w / n_valid)[:, None] * g.reshape(())
        return ((probs - onehot) * coef.astype(logits.dtype),)

    return _result(out, (logits,), backward)


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: Optional[tuple]
    checked: int
    kinks_skipped: int
    tolerance: float
    per_tensor: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max_rel_err={self.max_rel_error:.3e} (tol {self.tolerance:g}) "
            f"checked={self.checked} kinks_skipped={self.kinks_skipped} worst={self.worst}"
        )


def grad_check(
    builder: Callable,
    input_shapes: Sequence[tuple],
    tolerance: float = 1e-4,
    *,
    seed: int = 0,
    step: float = 1e-5,
    max_entries: Optional[int] = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    ``builder(rng)`` returns ``(forward, params)``: ``forward(*inputs)`` maps
    float64 input tensors of ``input_shapes`` to an output tensor, and
    ``params`` is a list of leaf tensors to check alongside the inputs. The
    output is reduced to a scalar by a fixed random projection. Coordinates
    whose one-sided slopes disagree (a ReLU kink inside the step) are skipped
    and counted. At most ``max_entries`` coordinates are sampled per tensor.
    """
    rng = np.random.default_rng(seed)
    forward, params = builder(rng)
    inputs = [
        Tensor(rng.standard_normal(s), requires_grad=True, name=f"input{i}") for i, s in enumerate(input_shapes)
    ]
    leaves = inputs + [p for p in params if p.requires_grad]
    for leaf in leaves:
        leaf.grad = None
    probe = forward(*inputs)
    projection = rng.standard_normal(probe.shape)

    def loss_value() -> float:
        with no_grad():
            return float((forward(*inputs).data * projection).sum())

    out = forward(*inputs)
    total(mul(out, Tensor(projection))).backward()
    f0 = loss_value()

    worst_err, worst_at, checked, kinks = 0.0, None, 0, 0
    per_tensor = {}
    for ti, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        tensor_err = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + step
            fp = loss_value()
            flat[j] = orig - step
            fm = loss_value()
            flat[j] = orig
            numeric = (fp - fm) / (2 * step)
            slope_gap = abs((fp - f0) - (f0 - fm)) / step
            if slope_gap > 1e-2 * max(abs(numeric), 1e-3):
                kinks += 1
                continue
            a = float(analytic.reshape(-1)[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            checked += 1
            tensor_err = max(tensor_err, err)
            if err > worst_err:
                worst_err = err
                coord = tuple(int(v) for v in np.unravel_index(j, leaf.shape))
                worst_at = (leaf.name or f"leaf{ti}", coord, a, numeric)
        per_tensor[leaf.name or f"leaf{ti}"] = tensor_err
    return GradCheckReport(worst_err, worst_at, checked, kinks, tolerance, per_tensor)
