"""Superpixel/SVM baseline segmenter and its feature extractors."""

from .color import (
    DEFAULT_STAINS,
    StainImages,
    color_deconvolution,
    od_to_rgb,
    optical_density,
    remix,
    rgb_to_lab,
    stain_matrix,
)
from .features import FEATURE_DIM, default_radii, load_features, neighborhood_features, save_features
from .pipeline import BaselineConfig, predict_baseline, superpixel_accuracy, superpixel_features, train_baseline
from .superpixels import SuperpixelMap, adjacency, enforce_connectivity, majority_labels, slic
from .svm import LinearSVM, balanced_subsample, linear_svm_predict, linear_svm_train
from .texture import lbp_map

__all__ = [
    "DEFAULT_STAINS",
    "FEATURE_DIM",
    "BaselineConfig",
    "LinearSVM",
    "StainImages",
    "SuperpixelMap",
    "adjacency",
    "balanced_subsample",
    "color_deconvolution",
    "default_radii",
    "enforce_connectivity",
    "lbp_map",
    "linear_svm_predict",
    "linear_svm_train",
    "load_features",
    "majority_labels",
    "neighborhood_features",
    "od_to_rgb",
    "optical_density",
    "predict_baseline",
    "remix",
    "rgb_to_lab",
    "save_features",
    "slic",
    "stain_matrix",
    "superpixel_accuracy",
    "superpixel_features",
    "train_baseline",
]
