"""PNG input/output for RGB images and label masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError


def _open(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        return Image.open(path)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def read_rgb(path) -> np.ndarray:
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def read_mask(path) -> np.ndarray:
    img = _open(path)
    if img.mode not in ("L", "P", "I", "I;16"):
        raise DataError(f"{path}: label mask must be single-channel, got mode {img.mode}")
    return np.asarray(img if img.mode in ("L", "P") else img.convert("I")).astype(np.uint8)


def write_png(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        raise DataError(f"PNG output needs uint8 data, got {arr.dtype}")
    Image.fromarray(arr).save(path, format="PNG")


def write_labels(path, labels: np.ndarray) -> None:
    """Integer raster (e.g. superpixel ids) as 16-bit grayscale PNG."""
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise DataError("label raster does not fit into 16 bits")
    Image.fromarray(arr.astype(np.uint16)).save(path, format="PNG")


def read_labels(path) -> np.ndarray:
    return np.asarray(_open(path)).astype(np.int64)


def list_pairs(directory) -> list:
    """``(image_path, mask_path)`` for every ``image_*.png`` with a matching ``mask_*.png``."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"data directory not found: {d}")
    pairs = []
    for img in sorted(d.glob("image_*.png")):
        mask = d / img.name.replace("image_", "mask_", 1)
        if not mask.is_file():
            raise DataError(f"{img} has no matching mask {mask.name}")
        pairs.append((img, mask))
    if not pairs:
        raise DataError(f"no image_*.png files in {d}")
    return pairs


def load_pairs(directory) -> list:
    return [(read_rgb(i), read_mask(m)) for i, m in list_pairs(directory)]
