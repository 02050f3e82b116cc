"""Multi-resolution encoder-decoder segmentation of breast biopsy images."""

__version__ = "0.1.0"
