"""Raw 8-neighbor local binary patterns."""

from __future__ import annotations

import numpy as np

from ..errors import DataError

# clockwise from top-left; bit i belongs to OFFSETS[i]
OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_map(channel: np.ndarray) -> np.ndarray:
    """Codes 0..255; bit i is set when neighbor i >= center (mirror-padded border)."""
    x = np.asarray(channel)
    if x.ndim != 2:
        raise DataError(f"lbp_map expects a single-channel raster, got shape {x.shape}")
    h, w = x.shape
    p = np.pad(x, 1, mode="symmetric")
    codes = np.zeros((h, w), np.uint8)
    for bit, (dy, dx) in enumerate(OFFSETS):
        nb = p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        codes |= (nb >= x).astype(np.uint8) << bit
    return codes


def lbp_histogram(codes: np.ndarray) -> np.ndarray:
    return np.bincount(np.asarray(codes).ravel(), minlength=256)
