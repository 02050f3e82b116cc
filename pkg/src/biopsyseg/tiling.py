"""Overlapping patch grids over ROI rasters, context twins, and stitching.

Windows that run past the ROI edge are completed by symmetric (mirror)
extension, evaluated per coordinate so that any window at any origin agrees
with every other window on shared pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import ConfigError, DataError

PATCH = 256
OVERLAP = 56
BORDER = 64


def default_stride(patch: int) -> int:
    """Stride keeping the 56/256 overlap fraction for any patch size."""
    return patch - (OVERLAP * patch) // PATCH


def mirror_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Map integer coordinates onto ``0..n-1`` by half-sample symmetric reflection."""
    m = np.mod(idx, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def read_window(image: np.ndarray, row0: int, col0: int, height: int, width: int) -> np.ndarray:
    """``image[row0:row0+height, col0:col0+width]`` with mirror extension outside."""
    h, w = image.shape[:2]
    if row0 >= 0 and col0 >= 0 and row0 + height <= h and col0 + width <= w:
        return image[row0 : row0 + height, col0 : col0 + width].copy()
    rows = mirror_index(np.arange(row0, row0 + height), h)
    cols = mirror_index(np.arange(col0, col0 + width), w)
    return image[np.ix_(rows, cols)]


def grid_origins(length: int, patch: int = PATCH, stride: int = PATCH - OVERLAP) -> list:
    if length <= patch:
        return [0]
    n = -(-(length - patch) // stride) + 1
    return [i * stride for i in range(n)]


@dataclass
class PatchGrid:
    height: int
    width: int
    patch: int = PATCH
    stride: Optional[int] = None
    border: int = BORDER
    origins: list = field(default_factory=list)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DataError(f"empty ROI {self.height}x{self.width}")
        if self.stride is None:
            self.stride = default_stride(self.patch)
        if not 1 <= self.stride <= self.patch:
            raise ConfigError(f"stride must lie in 1..{self.patch} (patch size), got {self.stride}")
        if not self.origins:
            rows = grid_origins(self.height, self.patch, self.stride)
            cols = grid_origins(self.width, self.patch, self.stride)
            self.origins = [(r, c) for r in rows for c in cols]

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def shape(self) -> tuple:
        rows = len({r for r, _ in self.origins})
        return rows, len(self.origins) // rows

    def padding(self, index: int) -> tuple:
        """Mirror-padded amounts (top, left, bottom, right) of an inner patch."""
        r, c = self.origins[index]
        return 0, 0, max(0, r + self.patch - self.height), max(0, c + self.patch - self.width)

    @property
    def context_size(self) -> int:
        return self.patch + 2 * self.border

    def manifest(self) -> str:
        lines = ["index\trow0\tcol0\tpad_top,pad_left,pad_bottom,pad_right"]
        for i, (r, c) in enumerate(self.origins):
            lines.append(f"{i}\t{r}\t{c}\t{','.join(str(v) for v in self.padding(i))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str, height: int, width: int, **kw) -> "PatchGrid":
        origins = []
        for line in text.splitlines()[1:]:
            if line.strip():
                _, r, c, _ = line.split("\t")
                origins.append((int(r), int(c)))
        return cls(height, width, origins=origins, **kw)


@dataclass
class PatchPair:
    inner: np.ndarray
    context: np.ndarray
    index: int


def extract_patches(image: np.ndarray, mask: Optional[np.ndarray] = None, grid: Optional[PatchGrid] = None):
    """Build the grid for ``image`` and return it with a lazy patch stream.

    The stream yields ``(index, image_patch, mask_patch_or_None)``.
    """
    image = np.asarray(image)
    if image.size == 0 or image.ndim < 2:
        raise DataError(f"cannot tile an empty image of shape {image.shape}")
    if mask is not None and np.asarray(mask).shape[:2] != image.shape[:2]:
        raise DataError(f"mask shape {np.asarray(mask).shape} does not match image {image.shape[:2]}")
    grid = grid or PatchGrid(image.shape[0], image.shape[1])

    def stream() -> Iterator:
        for i, (r, c) in enumerate(grid.origins):
            ip = read_window(image, r, c, grid.patch, grid.patch)
            mp = None if mask is None else read_window(mask, r, c, grid.patch, grid.patch)
            yield i, ip, mp

    return grid, stream()


def make_context(image: np.ndarray, grid: PatchGrid, index: int) -> PatchPair:
    r, c = grid.origins[index]
    b = grid.border
    inner = read_window(image, r, c, grid.patch, grid.patch)
    context = read_window(image, r - b, c - b, grid.context_size, grid.context_size)
    return PatchPair(inner, context, index)


def stitch(blocks: Iterable, grid: PatchGrid) -> tuple:
    """Average overlapping ``(C, patch, patch)`` score blocks; return (mask, scores).

    ``blocks`` yields either arrays in grid order or ``(index, array)`` pairs.
    """
    acc = None
    count = np.zeros((grid.height, grid.width), np.int32)
    seen = np.zeros(len(grid), bool)
    for pos, item in enumerate(blocks):
        idx, block = item if isinstance(item, tuple) else (pos, item)
        if not 0 <= idx < len(grid):
            raise DataError(f"score block index {idx} outside grid of {len(grid)}")
        block = np.asarray(block)
        if acc is None:
            acc = np.zeros((block.shape[0], grid.height, grid.width), np.float64)
        r, c = grid.origins[idx]
        h = min(grid.patch, grid.height - r)
        w = min(grid.patch, grid.width - c)
        acc[:, r : r + h, c : c + w] += block[:, :h, :w]
        count[r : r + h, c : c + w] += 1
        seen[idx] = True
    if acc is None or not seen.all():
        missing = int(np.flatnonzero(~seen)[0]) if acc is not None else 0
        raise DataError(f"missing score block for patch index {missing}")
    avg = acc / count
    return avg.argmax(axis=0).astype(np.uint8), avg


def coverage(grid: PatchGrid) -> np.ndarray:
    count = np.zeros((grid.height, grid.width), np.int32)
    for r, c in grid.origins:
        count[r : r + grid.patch, c : c + grid.patch] += 1
    return count


def downscale(image: np.ndarray, factor: int) -> np.ndarray:
    """Box-filter reduction by an integer factor (trailing rows/cols dropped)."""
    if factor < 1:
        raise DataError(f"downscale factor must be >= 1, got {factor}")
    if factor == 1:
        return np.asarray(image).copy()
    img = np.asarray(image)
    h, w = (img.shape[0] // factor) * factor, (img.shape[1] // factor) * factor
    if h == 0 or w == 0:
        raise DataError(f"image {img.shape[:2]} smaller than factor {factor}")
    blocks = img[:h, :w].reshape(h // factor, factor, w // factor, factor, *img.shape[2:])
    out = blocks.astype(np.float64).mean(axis=(1, 3))
    if np.issubdtype(img.dtype, np.integer):
        out = np.rint(out).astype(img.dtype)
    return out
