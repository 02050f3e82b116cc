"""Synthetic tissue-like images with known label masks.

Each image is a Voronoi partition; every cell takes a class drawn from a
geometric frequency profile and is painted with that class's base color plus
an oriented stripe texture and pixel noise.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

# base RGB per class; the green channel alone separates the classes
BASE_COLORS = np.array(
    [
        (235, 232, 236),
        (150, 86, 172),
        (96, 48, 140),
        (232, 150, 192),
        (198, 110, 150),
        (246, 196, 222),
        (170, 136, 160),
        (212, 18, 58),
    ],
    dtype=np.float64,
)
# (period in px, orientation in degrees, amplitude)
TEXTURES = (
    (0, 0, 0.0),
    (6, 0, 18.0),
    (4, 45, 22.0),
    (10, 90, 14.0),
    (5, 135, 18.0),
    (0, 0, 0.0),
    (3, 0, 20.0),
    (8, 60, 10.0),
)
NOISE_SIGMA = 10.0
FREQUENCY_RATIO = 0.72


def class_profile(num_classes: int, ratio: float = FREQUENCY_RATIO) -> np.ndarray:
    p = ratio ** np.arange(num_classes)
    return p / p.sum()


def synth_image(size: int, num_classes: int, rng: np.random.Generator, cells: tuple = (8, 16)):
    n_cells = int(rng.integers(cells[0], cells[1] + 1))
    seeds = rng.uniform(0, size, (n_cells, 2))
    labels = rng.choice(num_classes, size=n_cells, p=class_profile(num_classes))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d2 = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    owner = d2.argmin(axis=-1)
    mask = labels[owner].astype(np.uint8)

    img = BASE_COLORS[mask].copy()
    phase = rng.uniform(0, 2 * np.pi, num_classes)
    for c in range(num_classes):
        period, angle, amp = TEXTURES[c % len(TEXTURES)]
        sel = mask == c
        if not sel.any() or amp == 0:
            continue
        t = np.deg2rad(angle)
        wave = np.sin(2 * np.pi * (xx * np.cos(t) + yy * np.sin(t)) / period + phase[c])
        img[sel] += amp * wave[sel][:, None]
    img += rng.normal(0, NOISE_SIGMA, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask


def synth_dataset(num_images: int, size: int = 256, num_classes: int = 8, seed: int = 0):
    """List of ``(rgb uint8 HxWx3, mask uint8 HxW)`` pairs, deterministic per seed."""
    if not 1 <= num_classes <= len(BASE_COLORS):
        raise ConfigError(f"num_classes must be in 1..{len(BASE_COLORS)}")
    rng = np.random.default_rng(seed)
    return [synth_image(size, num_classes, rng) for _ in range(num_images)]

