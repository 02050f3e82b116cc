"""Diagnostic features from tissue-label maps and repeated cross-validation.

A case is summarized by the frequency of superpixel tissue labels and by the
co-occurrence of labels across adjacent superpixels; the stroma-free variants
drop the two stroma labels before normalizing.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .classicseg.superpixels import SuperpixelMap, majority_labels
from .classicseg.svm import linear_svm_train
from .errors import ConfigError, DataError, NumericalError
from .labels import IGNORE, NUM_CLASSES, STROMA_LABELS
from .trainer import TrainConfig, sgd_step

DIAGNOSES = ("benign", "atypia", "dcis", "invasive")
PAIR_INDEX = {(i, j): k for k, (i, j) in enumerate((i, j) for i in range(NUM_CLASSES) for j in range(i, NUM_CLASSES))}
NUM_PAIRS = len(PAIR_INDEX)


def superpixel_labels(mask: np.ndarray, sp: SuperpixelMap, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Modal pixel label of every superpixel; ties go to the smallest label."""
    return majority_labels(mask, sp, num_classes)


@dataclass
class CaseFeatures:
    case_id: str
    frequency: np.ndarray
    cooccurrence: np.ndarray
    frequency_no_stroma: np.ndarray
    cooccurrence_no_stroma: np.ndarray
    flags: tuple = ()

    def vector(self, variant: str = "all") -> np.ndarray:
        if variant == "all":
            return np.concatenate([self.frequency, self.cooccurrence])
        if variant == "no_stroma":
            return np.concatenate([self.frequency_no_stroma, self.cooccurrence_no_stroma])
        raise ConfigError(f"unknown feature variant {variant!r}; expected 'all' or 'no_stroma'")


def _histograms(labels: np.ndarray, edges: np.ndarray, drop: tuple, c: int):
    valid = labels != IGNORE
    for d in drop:
        valid &= labels != d
    freq = np.bincount(labels[valid].astype(np.int64), minlength=c).astype(np.float64)
    if freq.sum() > 0:
        freq /= freq.sum()
    co = np.zeros(c * (c + 1) // 2)
    if len(edges):
        a, b = labels[edges[:, 0]], labels[edges[:, 1]]
        ok = valid[edges[:, 0]] & valid[edges[:, 1]]
        lo, hi = np.minimum(a[ok], b[ok]).astype(np.int64), np.maximum(a[ok], b[ok]).astype(np.int64)
        # upper-triangle index of (lo, hi) in row-major order
        idx = lo * c - lo * (lo - 1) // 2 + (hi - lo)
        co = np.bincount(idx, minlength=len(co)).astype(np.float64)
    if co.sum() > 0:
        co /= co.sum()
    return freq, co


def case_features(
    sp_labels: np.ndarray, edges: np.ndarray, case_id: str = "", num_classes: int = NUM_CLASSES
) -> CaseFeatures:
    """Frequency (C) and co-occurrence (C(C+1)/2) histograms of superpixel labels."""
    sp_labels = np.asarray(sp_labels)
    edges = np.asarray(edges, np.int64).reshape(-1, 2)
    if sp_labels.size == 0:
        raise DataError(f"case {case_id!r} has no superpixels")
    freq, co = _histograms(sp_labels, edges, (), num_classes)
    freq_ns, co_ns = _histograms(sp_labels, edges, STROMA_LABELS, num_classes)
    flags = []
    if co.sum() == 0:
        flags.append("no_adjacent_pairs")
    if freq_ns.sum() == 0:
        flags.append("stroma_only")
    return CaseFeatures(case_id, freq, co, freq_ns, co_ns, tuple(flags))


# label mixtures per diagnosis for synthetic cases (rows follow DIAGNOSES)
SYNTH_PROFILES = np.array(
    [
        [0.05, 0.50, 0.00, 0.35, 0.00, 0.05, 0.00, 0.05],
        [0.05, 0.25, 0.25, 0.35, 0.00, 0.05, 0.00, 0.05],
        [0.05, 0.00, 0.50, 0.20, 0.10, 0.10, 0.05, 0.00],
        [0.05, 0.00, 0.40, 0.00, 0.45, 0.00, 0.05, 0.05],
    ]
)


def synthetic_cases(n_per_diagnosis: int = 40, grid: int = 10, seed: int = 0) -> tuple:
    """Cases whose superpixel labels are drawn from a per-diagnosis mixture.

    Each case is a ``grid x grid`` lattice of superpixels. Returns
    ``(features list, diagnoses list)`` in interleaved diagnosis order.
    """
    rng = np.random.default_rng(seed)
    sp = SuperpixelMap.from_labels(np.arange(grid * grid).reshape(grid, grid))
    feats, diags = [], []
    for i in range(n_per_diagnosis * len(DIAGNOSES)):
        d = i % len(DIAGNOSES)
        labels = rng.choice(NUM_CLASSES, size=sp.num_superpixels, p=SYNTH_PROFILES[d])
        feats.append(case_features(labels, sp.edges, f"case{i:04d}"))
        diags.append(DIAGNOSES[d])
    return feats, diags


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosisTask:
    name: str
    mapping: dict  # diagnosis -> class index; diagnoses not listed are excluded
    classes: tuple

    def encode(self, diagnoses: Sequence[str]) -> np.ndarray:
        """Class index per case, -1 for cases the task excludes."""
        out = np.full(len(diagnoses), -1, np.int64)
        for i, d in enumerate(diagnoses):
            if d not in DIAGNOSES:
                raise DataError(f"unknown diagnosis {d!r}; expected one of {', '.join(DIAGNOSES)}")
            out[i] = self.mapping.get(d, -1)
        return out


TASKS = {
    "four_class": DiagnosisTask(
        "four_class", {"benign": 0, "atypia": 1, "dcis": 2, "invasive": 3}, ("benign", "atypia", "dcis", "invasive")
    ),
    "invasive_vs_rest": DiagnosisTask(
        "invasive_vs_rest", {"benign": 0, "atypia": 0, "dcis": 0, "invasive": 1}, ("non-invasive", "invasive")
    ),
    "benign_vs_rest": DiagnosisTask("benign_vs_rest", {"benign": 0, "atypia": 1, "dcis": 1}, ("benign", "atypia+dcis")),
    "atypia_vs_dcis": DiagnosisTask("atypia_vs_dcis", {"atypia": 0, "dcis": 1}, ("atypia", "dcis")),
}


def get_task(name: str) -> DiagnosisTask:
    try:
        return TASKS[name]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; choose from {', '.join(TASKS)}") from None


# ---------------------------------------------------------------------------


@dataclass
class MLP:
    """One hidden ReLU layer and a softmax output, as 1x1 convolutions on (N, D, 1, 1)."""

    layers: list
    classes: np.ndarray

    def scores(self, features: np.ndarray) -> np.ndarray:
        x = T.Tensor(np.asarray(features, np.float64)[:, :, None, None])
        with T.no_grad():
            return _mlp_forward(x, self.layers).data[:, :, 0, 0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.classes[self.scores(features).argmax(axis=1)]


def _mlp_forward(x, layers):
    h = T.relu(T.conv2d(x, layers[0]))
    return T.conv2d(h, layers[1])


def mlp_train(
    features: np.ndarray,
    labels: np.ndarray,
    hidden: int = 64,
    epochs: int = 300,
    seed: int = 0,
    learning_rate: float = 0.05,
    momentum: float = 0.9,
) -> MLP:
    """Full-batch SGD with momentum on softmax cross-entropy."""
    x = np.asarray(features, np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise ConfigError(f"MLP training needs at least 2 classes, got {classes.tolist()}")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    k = len(classes)

    def param(shape, fan_in, name):
        return T.Tensor(rng.normal(0, math.sqrt(2.0 / fan_in), shape), requires_grad=True, name=name)

    def zeros(c, name):
        return T.Tensor(np.zeros((1, c, 1, 1)), requires_grad=True, name=name)

    w1, b1 = param((hidden, d, 1, 1), d, "fc1.weight"), zeros(hidden, "fc1.bias")
    w2, b2 = param((k, hidden, 1, 1), hidden, "fc2.weight"), zeros(k, "fc2.bias")
    layers = [T.ConvParams(w1, b1), T.ConvParams(w2, b2)]
    params = {"fc1.weight": w1, "fc1.bias": b1, "fc2.weight": w2, "fc2.bias": b2}
    xt = T.Tensor(x[:, :, None, None])
    target = np.searchsorted(classes, y).reshape(n, 1, 1)
    config = TrainConfig(learning_rate=learning_rate, momentum=momentum, weight_decay=0.0, max_steps=epochs)
    velocity: dict = {}
    ones = np.ones(k)
    for epoch in range(epochs):
        for p in params.values():
            p.zero_grad()
        loss = T.weighted_softmax_cross_entropy(_mlp_forward(xt, layers), target, ones)
        if not math.isfinite(loss.item()):
            raise NumericalError(f"MLP loss became {loss.item()} at epoch {epoch}")
        loss.backward()
        sgd_step(params, velocity, config)
    return MLP(layers, classes)


def mlp_predict(features: np.ndarray, model: MLP) -> np.ndarray:
    return model.predict(features)


# ---------------------------------------------------------------------------


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per case; each class is dealt round-robin after a shuffle."""
    fold = np.empty(len(y), np.int64)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = (np.arange(len(idx)) + int(rng.integers(folds))) % folds
    return fold


def balance(train_idx: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Subsample every class in ``train_idx`` down to the minority count."""
    classes = np.unique(y[train_idx])
    m = min(int((y[train_idx] == c).sum()) for c in classes)
    keep = [np.sort(rng.choice(train_idx[y[train_idx] == c], m, replace=False)) for c in classes]
    return np.sort(np.concatenate(keep))


def _standardize(train: np.ndarray, test: np.ndarray):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return (train - mu) / sd, (test - mu) / sd


def fit_predict(classifier: str, x_train, y_train, x_test, seed: int) -> np.ndarray:
    x_train, x_test = _standardize(x_train, x_test)
    if classifier == "svm":
        return linear_svm_train(x_train, y_train, c_reg=100.0, epochs=50, seed=seed).predict(x_test)
    if classifier == "mlp":
        return mlp_train(x_train, y_train, seed=seed).predict(x_test)
    raise ConfigError(f"unknown classifier {classifier!r}; expected 'svm' or 'mlp'")


@dataclass
class CVResult:
    task: str
    classifier: str
    variant: str
    mean_accuracy: float
    per_repeat: list
    rows: list = field(default_factory=list)  # (repeat, fold, accuracy)

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["task", "classifier", "feature_variant", "repeat", "fold", "accuracy"])
        for r, f, acc in self.rows:
            w.writerow([self.task, self.classifier, self.variant, r, f, f"{acc:.6f}"])
        return buf.getvalue()


def cross_validate(
    features: np.ndarray,
    diagnoses: Sequence[str],
    task: str | DiagnosisTask,
    classifier: str = "svm",
    folds: int = 10,
    repeats: int = 10,
    seed: int = 0,
    variant: str = "all",
) -> CVResult:
    """Stratified ``repeats`` x ``folds`` cross-validation with balanced training folds.

    Accuracy per repeat is the fraction of all task cases classified correctly
    when held out; the reported mean averages the repeats.
    """
    task = get_task(task) if isinstance(task, str) else task
    y_all = task.encode(diagnoses)
    keep = y_all >= 0
    x, y = np.asarray(features, np.float64)[keep], y_all[keep]
    for c in range(len(task.classes)):
        n_c = int((y == c).sum())
        if n_c < folds:
            raise ConfigError(f"class {task.classes[c]!r} has {n_c} cases, fewer than {folds} folds")
    rng = np.random.default_rng(seed)
    per_repeat, rows = [], []
    for r in range(repeats):
        fold = stratified_folds(y, folds, rng)
        correct = 0
        for f in range(folds):
            test = np.flatnonzero(fold == f)
            train = balance(np.flatnonzero(fold != f), y, rng)
            pred = fit_predict(classifier, x[train], y[train], x[test], seed + 1000 * r + f)
            hits = int((pred == y[test]).sum())
            correct += hits
            rows.append((r, f, hits / len(test)))
        per_repeat.append(correct / len(y))
    return CVResult(task.name, classifier, variant, float(np.mean(per_repeat)), per_repeat, rows)


# ---------------------------------------------------------------------------


@dataclass
class Case:
    case_id: str
    mask_path: str
    superpixel_path: str
    diagnosis: str


def read_manifest(path) -> list:
    """Case manifest rows: ``case_id,mask_path,superpixel_path,diagnosis``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"case manifest not found: {path}")
    cases = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), 1):
            if not row or row[0].startswith("#") or (lineno == 1 and row[0] == "case_id"):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            cid, mask, spp, diag = (v.strip() for v in row)
            if diag not in DIAGNOSES:
                raise DataError(f"{path}:{lineno}: unknown diagnosis {diag!r}")
            base = path.parent
            cases.append(Case(cid, str(base / mask), str(base / spp), diag))
    if not cases:
        raise DataError(f"{path}: no cases listed")
    return cases


def features_for_case(case: Case, load_mask, load_superpixels) -> CaseFeatures:
    mask = load_mask(case.mask_path)
    sp = SuperpixelMap.from_labels(load_superpixels(case.superpixel_path))
    return case_features(superpixel_labels(mask, sp), sp.edges, case.case_id)
