"""One-vs-rest linear SVM trained by mini-batch stochastic subgradient descent.

The objective per class is ``lam/2 |w|^2 + mean hinge(y * w.x)`` with
``lam = 1 / c_reg`` and a constant feature appended for the bias. Steps follow
the Pegasos schedule ``eta_t = 1 / (lam * t)`` with projection onto the ball of
radius ``1 / sqrt(lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..archive import load_archive, save_archive
from ..errors import ConfigError, DataError


@dataclass
class LinearSVM:
    weights: np.ndarray  # (K, D + 1), last column is the bias
    classes: np.ndarray

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, np.float64)
        if x.ndim != 2 or x.shape[1] + 1 != self.weights.shape[1]:
            raise DataError(f"features of shape {x.shape} do not match a {self.weights.shape[1] - 1}-dim model")
        return x @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.classes[self.decision_function(features).argmax(axis=1)]

    def save(self, path) -> None:
        save_archive(path, {"weights": self.weights, "classes": self.classes.astype(np.float64)})

    @classmethod
    def load(cls, path) -> "LinearSVM":
        a = load_archive(path)
        try:
            return cls(a["weights"].astype(np.float64), a["classes"].astype(np.int64))
        except KeyError as exc:
            raise DataError(f"{path}: not an SVM archive (missing {exc})") from exc


def linear_svm_train(
    features: np.ndarray,
    labels: np.ndarray,
    c_reg: float = 1e4,
    epochs: float = 20,
    seed: int = 0,
    batch_size: int = 8,
) -> LinearSVM:
    """Train ``K`` one-vs-rest hinge classifiers sharing one sample sequence.

    Sample ``t`` of a step is ``floor(u * n)`` for a uniform ``u``, so the
    number of steps ``ceil(epochs * n / batch_size)`` and the drawn points
    depend only on ``epochs * n`` and the seed.
    """
    x = np.asarray(features, np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise DataError(f"features {x.shape} and labels {y.shape} are not congruent")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ConfigError(f"SVM training needs at least 2 classes, got {classes.tolist()}")
    if c_reg <= 0 or epochs < 0 or batch_size < 1:
        raise ConfigError("c_reg must be positive, epochs non-negative and batch_size >= 1")
    n, d = x.shape
    xb = np.concatenate([x, np.ones((n, 1))], axis=1)
    signs = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    lam = 1.0 / c_reg
    radius = 1.0 / math.sqrt(lam)
    w = np.zeros((len(classes), d + 1))
    steps = int(math.ceil(epochs * n / batch_size))
    u = np.random.default_rng(seed).random((steps, batch_size))
    picks = np.minimum((u * n).astype(np.int64), n - 1)
    for t in range(1, steps + 1):
        idx = picks[t - 1]
        xs, ys = xb[idx], signs[idx]
        viol = (ys * (xs @ w.T) < 1.0) * ys
        eta = 1.0 / (lam * t)
        w *= 1.0 - eta * lam
        w += (eta / batch_size) * (viol.T @ xs)
        norms = np.linalg.norm(w, axis=1, keepdims=True)
        np.multiply(w, np.minimum(1.0, radius / np.maximum(norms, 1e-300)), out=w)
    return LinearSVM(w, classes)


def linear_svm_predict(features: np.ndarray, model: LinearSVM) -> np.ndarray:
    return model.predict(features)


def balanced_subsample(labels: np.ndarray, groups: np.ndarray, limit: int = 2000, seed: int = 0) -> np.ndarray:
    """Indices keeping at most ``limit`` samples of each label within each group."""
    labels, groups = np.asarray(labels), np.asarray(groups)
    rng = np.random.default_rng(seed)
    keep = []
    for g in np.unique(groups):
        for c in np.unique(labels[groups == g]):
            idx = np.flatnonzero((groups == g) & (labels == c))
            if len(idx) > limit:
                idx = np.sort(rng.choice(idx, limit, replace=False))
            keep.append(idx)
    return np.sort(np.concatenate(keep)) if keep else np.zeros(0, np.int64)
