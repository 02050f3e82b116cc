"""ROI inference: tile, run every resolution instance, fuse, stitch."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .netgraph.model import NetworkGraph, image_to_tensor
from .tiling import PatchGrid, read_window, stitch


def softmax(scores: np.ndarray, axis: int = 1) -> np.ndarray:
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def segment_roi(graph: NetworkGraph, image: np.ndarray, batch_size: int = 4) -> tuple:
    """Label mask (H, W) and averaged class probabilities (C, H, W) for an RGB ROI."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"expected an HxWx3 RGB image, got shape {image.shape}")
    cfg = graph.config
    P = cfg.resolutions
    grid = PatchGrid(image.shape[0], image.shape[1], patch=cfg.patch_size, border=cfg.context_border)

    def blocks():
        for start in range(0, len(grid), batch_size):
            idx = range(start, min(start + batch_size, len(grid)))
            inputs = []
            for p in range(1, P + 1):
                b = (P - p) * cfg.context_border
                size = cfg.patch_size + 2 * b
                windows = [read_window(image, grid.origins[i][0] - b, grid.origins[i][1] - b, size, size) for i in idx]
                inputs.append(image_to_tensor(np.stack(windows), graph.dtype))
            probs = softmax(graph.predict(inputs).astype(np.float64))
            for i, block in zip(idx, probs):
                yield i, block

    return stitch(blocks(), grid)
