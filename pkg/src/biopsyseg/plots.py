"""Report figures written next to the delimited outputs (PNG, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

from .labels import LABEL_NAMES, PALETTE, colorize  # noqa: E402

# no software/date stamps, so repeated runs give identical files
PNG_METADATA = {"Software": None}

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path) -> None:
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def loss_curve(losses, validations, path, title: str = "training") -> None:
    """Per-step loss with validation mIOU/PA on a twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        steps = np.arange(1, len(losses) + 1)
        ax.plot(steps, losses, lw=0.8, color="0.35", label="loss")
        ax.set_xlabel("step")
        ax.set_ylabel("weighted cross-entropy")
        if validations:
            v = np.array(validations, dtype=np.float64)
            ax2 = ax.twinx()
            ax2.plot(v[:, 0], v[:, 1], "o-", ms=3, color="tab:blue", label="val PA")
            ax2.plot(v[:, 0], v[:, 2], "s-", ms=3, color="tab:orange", label="val mIOU")
            ax2.set_ylim(0, 1)
            ax2.set_ylabel("validation score")
            ax2.grid(False)
            ax2.legend(loc="center right", frameon=False)
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def per_class_bars(scores, path, names=LABEL_NAMES) -> None:
    """Grouped bars of per-class IoU and F1; absent classes are left blank."""
    iou = np.nan_to_num(scores.per_class_iou, nan=0.0)
    f1 = np.nan_to_num(scores.per_class_f1, nan=0.0)
    n = len(iou)
    labels = [names[c] if c < len(names) else f"class {c}" for c in range(n)]
    x = np.arange(n)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.2, 3.8))
        ax.bar(x - 0.2, iou, 0.4, label="IoU", color="tab:blue")
        ax.bar(x + 0.2, f1, 0.4, label="F1", color="tab:green")
        ax.set_xticks(x, labels, rotation=30, ha="right")
        ax.set_ylim(0, 1)
        ax.set_title(f"PA {scores.pa:.3f}   mIOU {scores.miou:.3f}   F1 {scores.f1_macro:.3f}")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def overlay(image: np.ndarray, mask: np.ndarray, path, alpha: float = 0.45) -> None:
    """Image blended with the label palette, with the fixed 8-label legend."""
    blend = (1 - alpha) * np.asarray(image, np.float64) + alpha * colorize(mask).astype(np.float64)
    h, w = mask.shape
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(6.4, 6.4 * h / w + 0.8))
        ax.imshow(np.clip(blend, 0, 255).astype(np.uint8), interpolation="nearest")
        ax.set_axis_off()
        handles = [Patch(color=PALETTE[c] / 255.0, label=name) for c, name in enumerate(LABEL_NAMES)]
        ax.legend(handles=handles, loc="upper center", bbox_to_anchor=(0.5, 0.0), ncol=4, frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def cv_accuracy(results, path) -> None:
    """Per-repeat accuracy of each (classifier, variant) run as a strip plot with means."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.2))
        for i, r in enumerate(results):
            acc = np.asarray(r.per_repeat, dtype=np.float64)
            ax.plot(np.full(acc.shape, i), acc, "o", ms=4, alpha=0.6, color="tab:blue")
            ax.plot([i - 0.25, i + 0.25], [r.mean_accuracy] * 2, color="k", lw=1.5)
        ax.set_xticks(range(len(results)), [f"{r.classifier}\n{r.variant}" for r in results])
        ax.set_xlim(-0.6, len(results) - 0.4)
        ax.set_ylim(0, 1.02)
        ax.set_ylabel("accuracy per repeat")
        if results:
            ax.set_title(results[0].task)
        fig.tight_layout()
        _save(fig, path)
