"""SP-SVM baseline: superpixels, neighborhood features, linear SVM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..labels import IGNORE, NUM_CLASSES
from .color import color_deconvolution, rgb_to_lab
from .features import default_radii, neighborhood_features
from .superpixels import SuperpixelMap, majority_labels, slic
from .svm import LinearSVM, balanced_subsample, linear_svm_train


@dataclass
class BaselineConfig:
    target_area: int = 3000
    compactness: float = 10.0
    max_iters: int = 10
    per_label_limit: int = 2000
    c_reg: float = 1e4
    epochs: float = 20
    seed: int = 0

    @property
    def radii(self) -> tuple:
        return default_radii(self.target_area)


def superpixel_features(image: np.ndarray, config: BaselineConfig) -> tuple:
    lab = rgb_to_lab(image)
    sp = slic(image, config.target_area, config.compactness, config.max_iters, lab=lab)
    feats = neighborhood_features(image, sp, config.radii, lab=lab, stains=color_deconvolution(image))
    return sp, feats


def train_baseline(pairs: Sequence, config: BaselineConfig, num_classes: int = NUM_CLASSES) -> LinearSVM:
    """Fit the SVM on superpixels labeled by their majority ground-truth label."""
    xs, ys, groups = [], [], []
    for g, (image, mask) in enumerate(pairs):
        sp, feats = superpixel_features(image, config)
        labels = majority_labels(mask, sp, num_classes)
        keep = labels != IGNORE
        xs.append(feats[keep])
        ys.append(labels[keep])
        groups.append(np.full(int(keep.sum()), g))
    x, y, groups = np.concatenate(xs), np.concatenate(ys), np.concatenate(groups)
    idx = balanced_subsample(y, groups, config.per_label_limit, config.seed)
    return linear_svm_train(x[idx], y[idx], config.c_reg, config.epochs, config.seed)


def predict_baseline(image: np.ndarray, model: LinearSVM, config: BaselineConfig) -> tuple:
    """Pixel mask painted from per-superpixel predictions, plus the superpixel map and labels."""
    sp, feats = superpixel_features(image, config)
    sp_pred = model.predict(feats)
    return sp_pred[sp.labels].astype(np.uint8), sp, sp_pred


def superpixel_accuracy(pairs: Sequence, model: LinearSVM, config: BaselineConfig, num_classes: int = NUM_CLASSES):
    """Fraction of superpixels whose prediction equals their majority label."""
    correct = total = 0
    for image, mask in pairs:
        _, sp, pred = predict_baseline(image, model, config)
        truth = majority_labels(mask, sp, num_classes)
        keep = truth != IGNORE
        correct += int((pred[keep] == truth[keep]).sum())
        total += int(keep.sum())
    return correct / max(total, 1)
