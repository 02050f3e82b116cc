"""Tissue label conventions and the fixed overlay palette."""

import numpy as np

NUM_CLASSES = 8
IGNORE = 255

LABEL_NAMES = (
    "background",
    "benign epithelium",
    "malignant epithelium",
    "normal stroma",
    "desmoplastic stroma",
    "secretion",
    "necrosis",
    "blood",
)

STROMA_LABELS = (3, 4)

# RGB triples, index = label
PALETTE = np.array(
    [
        (255, 255, 255),
        (0, 128, 0),
        (255, 0, 0),
        (255, 165, 0),
        (128, 0, 128),
        (0, 191, 255),
        (139, 69, 19),
        (220, 20, 60),
    ],
    dtype=np.uint8,
)


def colorize(mask: np.ndarray) -> np.ndarray:
    """Label mask to an RGB image; ignored pixels render black."""
    mask = np.asarray(mask)
    out = np.zeros(mask.shape + (3,), dtype=np.uint8)
    valid = mask < NUM_CLASSES
    out[valid] = PALETTE[mask[valid]]
    return out
