"""Color and texture histograms over a superpixel and two circular rings around it."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .color import StainImages, color_deconvolution, rgb_to_lab
from .superpixels import SuperpixelMap
from .texture import lbp_map

COLOR_BINS = 32
LAB_RANGES = ((0.0, 100.0), (-128.0, 127.0), (-128.0, 127.0))
LBP_BINS = 256
# (name, bins) for one region; every block is L1-normalized on its own
BLOCKS = (("L", COLOR_BINS), ("a", COLOR_BINS), ("b", COLOR_BINS), ("lbp_H", LBP_BINS), ("lbp_E", LBP_BINS))
REGION_DIM = sum(n for _, n in BLOCKS)
REGIONS = ("superpixel", "ring1", "ring2")
FEATURE_DIM = len(REGIONS) * REGION_DIM


def default_radii(target_area: float = 3000) -> tuple:
    r1 = 2.0 * math.sqrt(target_area / math.pi)
    return r1, 2.0 * r1


def bin_codes(lab: np.ndarray, stains: StainImages) -> np.ndarray:
    """Per-pixel bin index for each block, already offset into one region vector."""
    cols = []
    offset = 0
    for ch, (lo, hi) in enumerate(LAB_RANGES):
        b = np.floor((lab[..., ch] - lo) / (hi - lo) * COLOR_BINS).astype(np.int64)
        cols.append(np.clip(b, 0, COLOR_BINS - 1) + offset)
        offset += COLOR_BINS
    for conc in (stains.hematoxylin, stains.eosin):
        cols.append(lbp_map(conc).astype(np.int64) + offset)
        offset += LBP_BINS
    return np.stack(cols, axis=-1)


def normalize_blocks(counts: np.ndarray) -> np.ndarray:
    out = np.zeros(counts.shape, np.float64)
    start = 0
    for _, n in BLOCKS:
        block = counts[..., start : start + n].astype(np.float64)
        total = block.sum(axis=-1, keepdims=True)
        np.divide(block, total, out=out[..., start : start + n], where=total > 0)
        start += n
    return out


def neighborhood_features(
    image: np.ndarray,
    sp: SuperpixelMap,
    radii: tuple = None,
    lab: np.ndarray = None,
    stains: StainImages = None,
) -> np.ndarray:
    """``(S, 1824)`` matrix of ``[superpixel | ring 1 | ring 2]`` histograms.

    Ring 1 holds pixels within ``r1`` of the centroid that lie outside the
    superpixel; ring 2 is the annulus ``r1 < d <= r2``.
    """
    r1, r2 = radii or default_radii()
    if not 0 < r1 < r2:
        raise DataError(f"radii must satisfy 0 < r1 < r2, got {r1}, {r2}")
    lab = rgb_to_lab(image) if lab is None else lab
    stains = color_deconvolution(image) if stains is None else stains
    codes = bin_codes(lab, stains)
    h, w = sp.labels.shape
    counts = np.zeros((sp.num_superpixels, len(REGIONS), REGION_DIM), np.int64)
    reach = int(math.ceil(r2))
    for i, (cy, cx) in enumerate(sp.centroids):
        r0, rr = max(0, int(cy) - reach), min(h, int(cy) + reach + 2)
        c0, cc = max(0, int(cx) - reach), min(w, int(cx) + reach + 2)
        yy, xx = np.ogrid[r0:rr, c0:cc]
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        inside = sp.labels[r0:rr, c0:cc] == i
        box = codes[r0:rr, c0:cc]
        regions = (inside, (d2 <= r1 * r1) & ~inside, (d2 > r1 * r1) & (d2 <= r2 * r2))
        for j, sel in enumerate(regions):
            counts[i, j] = np.bincount(box[sel].ravel(), minlength=REGION_DIM)
        # the superpixel may extend past the box only if it is larger than 2*r2
        spill = sp.counts[i] - int(inside.sum())
        if spill:
            counts[i, 0] = np.bincount(codes[sp.labels == i].ravel(), minlength=REGION_DIM)
    return normalize_blocks(counts).reshape(sp.num_superpixels, FEATURE_DIM)


def layout_header(radii: tuple) -> str:
    lines = [f"dim\t{FEATURE_DIM}", f"radii\t{radii[0]:.6f}\t{radii[1]:.6f}", "region\tblock\tstart\tbins"]
    start = 0
    for region in REGIONS:
        for name, n in BLOCKS:
            lines.append(f"{region}\t{name}\t{start}\t{n}")
            start += n
    return "\n".join(lines) + "\n"


def save_features(path, ids: np.ndarray, features: np.ndarray, radii: tuple) -> None:
    """Binary records ``u32 id | u32 dim | dim x f32`` plus a ``.txt`` layout header."""
    features = np.asarray(features, "<f4")
    with open(path, "wb") as f:
        for i, row in zip(ids, features):
            f.write(struct.pack("<II", int(i), row.size))
            f.write(row.tobytes())
    Path(str(path) + ".txt").write_text(layout_header(radii))


def load_features(path) -> tuple:
    buf = Path(path).read_bytes()
    ids, rows, pos = [], [], 0
    while pos < len(buf):
        if pos + 8 > len(buf):
            raise DataError(f"{path}: truncated feature record at byte {pos}")
        i, dim = struct.unpack_from("<II", buf, pos)
        pos += 8
        if pos + 4 * dim > len(buf):
            raise DataError(f"{path}: truncated feature record for id {i}")
        rows.append(np.frombuffer(buf, "<f4", dim, pos))
        ids.append(i)
        pos += 4 * dim
    return np.array(ids, np.int64), np.array(rows, np.float32).reshape(len(rows), -1)
