"""Network construction for every variant of the ablation matrix."""

from .blocks import (
    RCU,
    DenseDecodeBlock,
    Fusion,
    InputAware,
    SparseDecoder,
    dense_decode_block,
    fuse_multires,
    ia_rcu_forward,
    sparse_decode,
)
from .config import FusionSpec, ModelConfig, PRESETS, preset
from .layers import Registry
from .model import EncoderDecoder, NetworkGraph, build_model, count_params, image_to_tensor
from .receptive import receptive_field, sequence_rf

__all__ = [
    "RCU",
    "DenseDecodeBlock",
    "EncoderDecoder",
    "Fusion",
    "FusionSpec",
    "InputAware",
    "ModelConfig",
    "NetworkGraph",
    "PRESETS",
    "Registry",
    "SparseDecoder",
    "build_model",
    "count_params",
    "dense_decode_block",
    "fuse_multires",
    "ia_rcu_forward",
    "image_to_tensor",
    "preset",
    "receptive_field",
    "sequence_rf",
    "sparse_decode",
]
