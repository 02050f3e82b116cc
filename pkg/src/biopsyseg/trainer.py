"""SGD training with inverse-class-frequency weighting and augmentation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, NumericalError
from .labels import IGNORE
from .metrics import ConfusionMatrix
from .netgraph.model import NetworkGraph, image_to_tensor
from .tiling import read_window

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 10
    max_steps: int = 1000
    seed: int = 0
    validation_fraction: float = 0.1
    eval_every: int = 100

    def __post_init__(self):
        if self.learning_rate < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate, momentum and weight_decay must be non-negative")
        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigError("batch_size must be >= 1 and max_steps >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")


@dataclass
class AugmentationSpec:
    rotations: bool = True
    hflip: bool = True
    crop: bool = True
    crop_size: int = 224
    multiplicity: int = 5


# ---------------------------------------------------------------------------


def class_weights(masks: Iterable[np.ndarray], num_classes: int, ignore_index: int = IGNORE) -> np.ndarray:
    """``w_c = N / (C * n_c)`` over scored pixels; absent classes get 0."""
    counts = np.zeros(num_classes, np.int64)
    for m in masks:
        m = np.asarray(m).reshape(-1)
        m = m[m != ignore_index].astype(np.int64)
        if m.size and (m.min() < 0 or m.max() >= num_classes):
            raise DataError(f"mask label outside 0..{num_classes - 1}")
        counts += np.bincount(m, minlength=num_classes)
    total = counts.sum()
    if total == 0:
        raise DataError("every pixel is ignored; cannot compute class weights")
    with np.errstate(divide="ignore"):
        w = np.where(counts > 0, total / (num_classes * counts.astype(np.float64)), 0.0)
    return w


def _crop_pad(arr: np.ndarray, r: int, c: int, crop: int, size: int) -> np.ndarray:
    lo = (size - crop) // 2
    piece = arr[r : r + crop, c : c + crop]
    return read_window(piece, -lo, -lo, size, size)


def augment(image: np.ndarray, mask: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator):
    """Apply one random geometric transform identically to image and mask."""
    size = image.shape[0]
    if image.shape[1] != size or mask.shape[:2] != image.shape[:2]:
        raise DataError("augment expects square, congruent image and mask")
    k = int(rng.integers(4)) if spec.rotations else 0
    flip = bool(rng.integers(2)) if spec.hflip else False
    do_crop = bool(rng.integers(2)) if spec.crop and spec.crop_size < size else False
    if do_crop:
        r, c = (int(v) for v in rng.integers(0, size - spec.crop_size + 1, 2))
        image = _crop_pad(image, r, c, spec.crop_size, size)
        mask = _crop_pad(mask, r, c, spec.crop_size, size)
    return transform(image, mask, k, flip)


def transform(image, mask, quarter_turns: int = 0, flip: bool = False):
    image, mask = np.rot90(image, quarter_turns), np.rot90(mask, quarter_turns)
    if flip:
        image, mask = image[:, ::-1], mask[:, ::-1]
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def augment_dataset(samples: Sequence, spec: AugmentationSpec, seed: int = 0) -> list:
    """``multiplicity`` transformed copies of every ``(image, mask)`` pair."""
    rng = np.random.default_rng(seed)
    out = []
    for img, m in samples:
        for _ in range(spec.multiplicity):
            out.append(augment(img, m, spec, rng))
    return out


def split_train_val(n: int, fraction: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(n * fraction)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


# ---------------------------------------------------------------------------


def no_decay(name: str) -> bool:
    return name.endswith((".bias", ".gamma", ".beta"))


def sgd_step(params: dict, velocity: dict, config: TrainConfig) -> None:
    """``v = m*v + g + wd*p ; p -= lr*v`` (no decay on biases and BN affine)."""
    lr, mom, wd = config.learning_rate, config.momentum, config.weight_decay
    for name, p in params.items():
        if p.grad is None:
            continue
        if p.grad.shape != p.data.shape:
            raise AssertionError(f"gradient shape {p.grad.shape} != parameter shape {p.data.shape} for {name}")
        g = p.grad if (wd == 0 or no_decay(name)) else p.grad + wd * p.data
        v = velocity.get(name)
        v = g.astype(p.data.dtype, copy=True) if v is None else mom * v + g
        velocity[name] = v
        if lr:
            p.data -= (lr * v).astype(p.data.dtype, copy=False)


# ---------------------------------------------------------------------------


@dataclass
class Sample:
    """Network inputs (context-most first) and the inner-patch label mask."""

    inputs: list
    mask: np.ndarray


def make_samples(pairs: Sequence, resolutions: int = 1, border: int = 64) -> list:
    """Wrap ``(image, mask)`` pairs; multi-resolution adds mirror-bordered context inputs."""
    out = []
    for img, m in pairs:
        size = img.shape[0]
        inputs = []
        for p in range(1, resolutions + 1):
            b = (resolutions - p) * border
            inputs.append(img if b == 0 else read_window(img, -b, -b, size + 2 * b, size + 2 * b))
        out.append(Sample(inputs, m))
    return out


def batch_inputs(samples: Sequence[Sample], dtype) -> list:
    n_inputs = len(samples[0].inputs)
    return [image_to_tensor(np.stack([s.inputs[i] for s in samples]), dtype) for i in range(n_inputs)]


def evaluate(graph: NetworkGraph, samples: Sequence[Sample], batch_size: int = 8) -> ConfusionMatrix:
    cm = ConfusionMatrix(graph.config.num_classes)
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        scores = graph.predict(batch_inputs(chunk, graph.dtype))
        pred = scores.argmax(axis=1)
        for p, s in zip(pred, chunk):
            cm.accumulate(p, s.mask)
    return cm


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    validations: list = field(default_factory=list)  # (step, pa, miou, f1)
    best_miou: float = -1.0
    best_step: int = -1


def _check_finite(step, batch_idx, loss, params):
    batch_idx = [int(i) for i in batch_idx]
    if not math.isfinite(loss):
        raise NumericalError(f"loss became {loss} at step {step}; offending batch sample indices {batch_idx}")
    for name, p in params.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericalError(
                f"non-finite gradient in {name} at step {step}; offending batch sample indices {batch_idx}"
            )


def train(
    graph: NetworkGraph,
    train_samples: Sequence[Sample],
    config: TrainConfig,
    val_samples: Sequence[Sample] = (),
    weights: Optional[np.ndarray] = None,
    log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Run ``config.max_steps`` SGD steps over shuffled mini-batches."""
    if not train_samples:
        raise DataError("training set is empty")
    expected = graph.config.input_sizes()
    got = [x.shape[0] for x in train_samples[0].inputs]
    if got != expected:
        raise ConfigError(f"sample input sizes {got} do not match model geometry {expected}")
    C = graph.config.num_classes
    if weights is None:
        weights = class_weights((s.mask for s in train_samples), C)
    rng = np.random.default_rng(config.seed)
    velocity: dict = {}
    result = TrainResult()
    log_file = open(log_path, "a") if log_path else None
    if log_file:
        log_file.write(f"# seed={config.seed} lr={config.learning_rate} batch={config.batch_size}\n")
        log_file.write("step\tloss\tlr\tval_pa\tval_miou\tval_f1\n")
    order = np.array([], dtype=np.int64)
    graph.train()
    # overflow is caught by the per-step finiteness check, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            for step in range(1, config.max_steps + 1):
                if order.size < config.batch_size:
                    order = np.concatenate([order, rng.permutation(len(train_samples))])
                idx, order = order[: config.batch_size], order[config.batch_size :]
                batch = [train_samples[i] for i in idx]
                xs = batch_inputs(batch, graph.dtype)
                target = np.stack([s.mask for s in batch])
                graph.zero_grad()
                logits = graph(xs)
                loss = T.weighted_softmax_cross_entropy(logits, target, weights)
                loss.backward()
                value = loss.item()
                _check_finite(step, idx, value, graph.params)
                sgd_step(graph.params, velocity, config)
                result.losses.append(value)
                val = "-\t-\t-"
                if val_samples and (step % config.eval_every == 0 or step == config.max_steps):
                    s = evaluate(graph, val_samples).scores()
                    graph.train()
                    result.validations.append((step, s.pa, s.miou, s.f1_macro))
                    val = f"{s.pa:.4f}\t{s.miou:.4f}\t{s.f1_macro:.4f}"
                    log.info("step %d loss %.4f val PA %.3f mIOU %.3f", step, value, s.pa, s.miou)
                    if s.miou > result.best_miou:
                        result.best_miou, result.best_step = s.miou, step
                        if checkpoint_path:
                            graph.save(checkpoint_path)
                if log_file:
                    log_file.write(f"{step}\t{value:.6f}\t{config.learning_rate:g}\t{val}\n")
        finally:
            if log_file:
                log_file.close()
            graph.eval()
    if checkpoint_path and not val_samples:
        graph.save(checkpoint_path)
    return result


def roi_samples(pairs: Sequence, resolutions: int, patch: int = 256, border: int = 64, augmentation=None, seed=0):
    """Tile ROIs into training samples with true (mirror-completed) context.

    With ``augmentation``, each context-sized window is transformed
    ``multiplicity`` times before the per-resolution inputs are cut from it.
    """
    from .tiling import PatchGrid

    rng = np.random.default_rng(seed)
    b_max = (resolutions - 1) * border
    size = patch + 2 * b_max
    out = []
    for img, m in pairs:
        if img.shape[:2] != m.shape[:2]:
            raise DataError(f"image {img.shape[:2]} and mask {m.shape[:2]} differ in size")
        grid = PatchGrid(img.shape[0], img.shape[1], patch=patch, border=border)
        for r, c in grid.origins:
            win = read_window(img, r - b_max, c - b_max, size, size)
            wmask = read_window(m, r - b_max, c - b_max, size, size)
            if augmentation is None:
                windows = [(win, wmask)]
            else:
                spec = AugmentationSpec(**{**augmentation.__dict__, "crop_size": augmentation.crop_size + size - patch})
                windows = [augment(win, wmask, spec, rng) for _ in range(augmentation.multiplicity)]
            for wi, wm in windows:
                inputs = []
                for p in range(1, resolutions + 1):
                    lo = b_max - (resolutions - p) * border
                    inputs.append(wi[lo : size - lo, lo : size - lo])
                out.append(Sample(inputs, wm[b_max : size - b_max, b_max : size - b_max]))
    return out
