"""SLIC superpixels: local k-means in (L, a, b, x, y) plus a connectivity pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import DataError
from .color import rgb_to_lab

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass
class SuperpixelMap:
    """Partition of an image into connected superpixels.

    ``labels`` holds ids 0..S-1; ``edges`` lists each adjacent pair once as
    ``(i, j)`` with ``i < j`` (4-neighborhood).
    """

    labels: np.ndarray
    centroids: np.ndarray
    counts: np.ndarray
    edges: np.ndarray

    @property
    def num_superpixels(self) -> int:
        return len(self.counts)

    def neighbors(self, i: int) -> np.ndarray:
        e = self.edges
        return np.sort(np.concatenate([e[e[:, 0] == i, 1], e[e[:, 1] == i, 0]]))

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "SuperpixelMap":
        """Renumber ``labels`` to 0..S-1 (raster order of first appearance) and derive geometry."""
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.size == 0:
            raise DataError(f"superpixel labels must be a non-empty 2-D array, got {labels.shape}")
        _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
        rank = np.empty(len(first), np.int64)
        rank[np.argsort(first)] = np.arange(len(first))
        ids = rank[inverse].reshape(labels.shape).astype(np.int32)
        counts = np.bincount(ids.ravel())
        rows, cols = np.indices(ids.shape)
        centroids = np.stack(
            [np.bincount(ids.ravel(), rows.ravel()) / counts, np.bincount(ids.ravel(), cols.ravel()) / counts], axis=1
        )
        return cls(ids, centroids, counts, adjacency(ids))

    def validate(self) -> None:
        """Raise DataError unless ids form a partition of 4-connected regions."""
        ids = self.labels
        s = self.num_superpixels
        if ids.min() < 0 or ids.max() != s - 1 or (np.bincount(ids.ravel(), minlength=s) != self.counts).any():
            raise DataError("superpixel ids do not form a partition")
        for i, sl in enumerate(ndimage.find_objects(ids + 1)):
            _, n = ndimage.label(ids[sl] == i, FOUR_CONNECTED)
            if n != 1:
                raise DataError(f"superpixel {i} has {n} disconnected parts")


def adjacency(ids: np.ndarray) -> np.ndarray:
    pairs = [
        np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], 1),
        np.stack([ids[:-1].ravel(), ids[1:].ravel()], 1),
    ]
    p = np.concatenate(pairs)
    p = p[p[:, 0] != p[:, 1]]
    p = np.sort(p, axis=1)
    if len(p) == 0:
        return np.zeros((0, 2), np.int64)
    return np.unique(p, axis=0).astype(np.int64)


def grid_seeds(height: int, width: int, step: float) -> np.ndarray:
    ny = max(1, int(round(height / step)))
    nx = max(1, int(round(width / step)))
    # cell centers in pixel-index coordinates
    ys = (np.arange(ny) + 0.5) * height / ny - 0.5
    xs = (np.arange(nx) + 0.5) * width / nx - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], 1)


def slic(
    image: np.ndarray,
    target_area: int = 3000,
    compactness: float = 10.0,
    max_iters: int = 10,
    lab: np.ndarray | None = None,
) -> SuperpixelMap:
    """Segment an RGB image into superpixels of roughly ``target_area`` pixels."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    if h * w < 2:
        raise DataError(f"cannot segment a degenerate {h}x{w} image")
    if h * w < target_area:
        raise DataError(f"image of {h * w} pixels is smaller than the target area {target_area}")
    lab = rgb_to_lab(image) if lab is None else lab
    step = float(np.sqrt(target_area))
    seeds = grid_seeds(h, w, step)
    centers = np.concatenate([lab[seeds[:, 0].astype(int), seeds[:, 1].astype(int)], seeds], axis=1)
    weight = (compactness / step) ** 2
    rows, cols = np.indices((h, w), dtype=np.float64)
    feats = np.concatenate([lab, rows[..., None], cols[..., None]], axis=2)
    win = int(np.ceil(step))
    assign = np.zeros((h, w), np.int64)
    for _ in range(max_iters):
        best = np.full((h, w), np.inf)
        for k, c in enumerate(centers):
            r0, r1 = max(0, int(c[3]) - win), min(h, int(c[3]) + win + 1)
            c0, c1 = max(0, int(c[4]) - win), min(w, int(c[4]) + win + 1)
            f = feats[r0:r1, c0:c1]
            d = ((f[..., :3] - c[:3]) ** 2).sum(-1) + weight * ((f[..., 3:] - c[3:]) ** 2).sum(-1)
            region = best[r0:r1, c0:c1]
            closer = d < region
            region[closer] = d[closer]
            assign[r0:r1, c0:c1][closer] = k
        counts = np.bincount(assign.ravel(), minlength=len(centers))
        sums = np.stack([np.bincount(assign.ravel(), feats[..., j].ravel(), len(centers)) for j in range(5)], 1)
        keep = counts > 0
        centers[keep] = sums[keep] / counts[keep, None]
    return SuperpixelMap.from_labels(enforce_connectivity(assign))


def enforce_connectivity(assign: np.ndarray) -> np.ndarray:
    """Split every label into 4-connected parts and merge each non-largest part
    (an orphan) into the largest adjacent region, smallest orphans first."""
    comp = np.zeros(assign.shape, np.int64)
    owner, size, largest = [], [], {}
    offset = 0
    for lab in np.unique(assign):
        parts, n = ndimage.label(assign == lab, FOUR_CONNECTED)
        sel = parts > 0
        comp[sel] = parts[sel] + offset - 1
        sizes = np.bincount(parts[sel] - 1, minlength=n)
        owner.extend([lab] * n)
        size.extend(sizes.tolist())
        largest[int(lab)] = offset + int(np.argmax(sizes))
        offset += n
    size = np.array(size)
    parent = np.arange(offset)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    edges = adjacency(comp)
    nbrs = [[] for _ in range(offset)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    orphans = [i for i in range(offset) if largest[int(owner[i])] != i]
    orphans.sort(key=lambda i: (size[i], i))
    for i in orphans:
        root = find(i)
        cands = {find(j) for j in nbrs[i]} - {root}
        if not cands:
            continue
        target = max(cands, key=lambda r: (size[r], -r))
        parent[root] = target
        size[target] += size[root]
    roots = np.array([find(i) for i in range(offset)])
    return roots[comp]


def majority_labels(mask: np.ndarray, sp: SuperpixelMap, num_classes: int, ignore_index: int = 255) -> np.ndarray:
    """Modal pixel label per superpixel (ties to the smallest label).

    Pixels equal to ``ignore_index`` do not vote; a superpixel with no voting
    pixel gets ``ignore_index``.
    """
    mask = np.asarray(mask)
    if mask.shape != sp.labels.shape:
        raise DataError(f"mask shape {mask.shape} does not match superpixel map {sp.labels.shape}")
    keep = mask != ignore_index
    m = mask[keep].astype(np.int64)
    if m.size and (m.min() < 0 or m.max() >= num_classes):
        bad = tuple(int(v) for v in np.argwhere(keep & ((mask < 0) | (mask >= num_classes)))[0])
        raise DataError(f"mask label {int(mask[bad])} outside 0..{num_classes - 1} at {bad}")
    votes = np.bincount(sp.labels[keep].astype(np.int64) * num_classes + m, minlength=sp.num_superpixels * num_classes)
    votes = votes.reshape(sp.num_superpixels, num_classes)
    out = votes.argmax(axis=1)
    out[votes.sum(axis=1) == 0] = ignore_index
    return out
