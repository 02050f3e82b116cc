"""Color spaces for the baseline: CIE L*a*b* and H&E stain separation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.color import rgb2lab

from ..errors import ConfigError, DataError

HEMATOXYLIN = (0.650, 0.704, 0.286)
EOSIN = (0.072, 0.990, 0.105)


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """8-bit RGB to L*a*b* (D65, 2 degree observer)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"expected an HxWx3 RGB image, got shape {image.shape}")
    return rgb2lab(image.astype(np.float64) / 255.0, illuminant="D65", observer="2")


def stain_matrix(first=HEMATOXYLIN, second=EOSIN) -> np.ndarray:
    """Rows: unit OD vectors of the two stains and their normalized cross product."""
    a = np.asarray(first, np.float64)
    b = np.asarray(second, np.float64)
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    c = np.cross(a, b)
    norm = np.linalg.norm(c)
    if norm < 1e-12:
        raise ConfigError("stain vectors are parallel; the stain matrix is singular")
    return np.stack([a, b, c / norm])


DEFAULT_STAINS = stain_matrix()


@dataclass
class StainImages:
    hematoxylin: np.ndarray
    eosin: np.ndarray
    residual: np.ndarray
    matrix: np.ndarray

    @property
    def concentrations(self) -> np.ndarray:
        return np.stack([self.hematoxylin, self.eosin, self.residual], axis=-1)


def optical_density(image: np.ndarray) -> np.ndarray:
    return -np.log10((np.asarray(image, np.float64) + 1.0) / 256.0)


def _checked(matrix) -> np.ndarray:
    m = np.asarray(matrix, np.float64)
    if m.shape != (3, 3):
        raise ConfigError(f"stain matrix must be 3x3, got {m.shape}")
    if abs(np.linalg.det(m)) < 1e-10:
        raise ConfigError("stain matrix is singular")
    return m


def color_deconvolution(image: np.ndarray, matrix=DEFAULT_STAINS, clamp: bool = True) -> StainImages:
    """Per-stain optical densities: ``OD = C @ M`` solved for ``C``."""
    m = _checked(matrix)
    conc = optical_density(image) @ np.linalg.inv(m)
    if clamp:
        conc = np.maximum(conc, 0.0)
    return StainImages(conc[..., 0], conc[..., 1], conc[..., 2], m)


def remix(stains: StainImages) -> np.ndarray:
    """Optical density reconstructed from stain concentrations."""
    return stains.concentrations @ stains.matrix


def od_to_rgb(od: np.ndarray) -> np.ndarray:
    """Inverse of ``optical_density`` (real-valued, not rounded)."""
    return 256.0 * np.power(10.0, -np.asarray(od)) - 1.0
