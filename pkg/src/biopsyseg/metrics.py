"""Confusion-matrix segmentation scores: pixel accuracy, mean IoU, macro F1."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError
from .labels import IGNORE, LABEL_NAMES


class ConfusionMatrix:
    """``counts[g, p]`` = pixels with ground truth ``g`` predicted as ``p``."""

    def __init__(self, num_classes: int, counts: Optional[np.ndarray] = None):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), np.int64) if counts is None else np.asarray(counts, np.int64)

    def accumulate(self, pred, gt, ignore_index: int = IGNORE) -> "ConfusionMatrix":
        pred, gt = np.asarray(pred), np.asarray(gt)
        if pred.shape != gt.shape:
            raise DataError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
        keep = gt != ignore_index
        c = self.num_classes
        for name, arr, mask in (("ground truth", gt, keep), ("prediction", pred, keep)):
            bad = mask & ((arr < 0) | (arr >= c))
            if bad.any():
                where = tuple(int(v) for v in np.argwhere(bad)[0])
                raise DataError(f"{name} label {int(arr[where])} >= {c} at {where}")
        g = gt[keep].astype(np.int64)
        p = pred[keep].astype(np.int64)
        self.counts += np.bincount(g * c + p, minlength=c * c).reshape(c, c)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def scores(self) -> "Scores":
        return scores(self)


def accumulate(cm: ConfusionMatrix, pred, gt) -> ConfusionMatrix:
    return cm.accumulate(pred, gt)


@dataclass
class Scores:
    pa: float
    miou: float
    f1_macro: float
    per_class_iou: np.ndarray
    per_class_f1: np.ndarray
    per_class_accuracy: np.ndarray
    present: np.ndarray

    def as_dict(self) -> dict:
        return {"pa": self.pa, "miou": self.miou, "f1": self.f1_macro}


def scores(cm: ConfusionMatrix) -> Scores:
    m = cm.counts.astype(np.float64)
    total = m.sum()
    if total <= 0:
        raise DataError("confusion matrix is empty")
    tp = np.diag(m)
    gt_count = m.sum(axis=1)
    pred_count = m.sum(axis=0)
    fp, fn = pred_count - tp, gt_count - tp
    present = gt_count > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(present, tp / (tp + fp + fn), np.nan)
        f1 = np.where(present, 2 * tp / (2 * tp + fp + fn), np.nan)
        acc = np.where(present, tp / gt_count, np.nan)
    return Scores(
        pa=float(tp.sum() / total),
        miou=float(np.mean(iou[present])),
        f1_macro=float(np.mean(f1[present])),
        per_class_iou=iou,
        per_class_f1=f1,
        per_class_accuracy=acc,
        present=present,
    )


def score_masks(preds: Iterable, gts: Iterable, num_classes: int) -> Scores:
    cm = ConfusionMatrix(num_classes)
    for p, g in zip(preds, gts):
        cm.accumulate(p, g)
    return cm.scores()


def format_table(s: Scores, names: Sequence[str] = LABEL_NAMES) -> str:
    lines = [f"{'class':24s} {'IoU':>7s} {'F1':>7s} {'acc':>7s}"]
    for c in range(len(s.per_class_iou)):
        name = names[c] if c < len(names) else f"class {c}"
        if not s.present[c]:
            lines.append(f"{name:24s} {'-':>7s} {'-':>7s} {'-':>7s}")
            continue
        lines.append(
            f"{name:24s} {s.per_class_iou[c]:7.4f} {s.per_class_f1[c]:7.4f} {s.per_class_accuracy[c]:7.4f}"
        )
    lines.append(f"PA {s.pa:.3f}  mIOU {s.miou:.3f}  F1 {s.f1_macro:.3f}")
    return "\n".join(lines)


def to_csv(s: Scores, names: Sequence[str] = LABEL_NAMES, header: str = "") -> str:
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "iou", "f1", "accuracy"])
    for c in range(len(s.per_class_iou)):
        name = names[c] if c < len(names) else f"class {c}"
        vals = [s.per_class_iou[c], s.per_class_f1[c], s.per_class_accuracy[c]]
        w.writerow([name] + ["" if np.isnan(v) else f"{v:.6f}" for v in vals])
    w.writerow(["summary", f"{s.miou:.6f}", f"{s.f1_macro:.6f}", f"{s.pa:.6f}"])
    return buf.getvalue()
