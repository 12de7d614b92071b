"""
Inversion Encoder Submodule

This submodule maps voxel representations back to latents:
- Adaptive density filter with learnable threshold
- Voxel patch tokenization with position embeddings
- Transformer and residual 3D-CNN branches
- MLP fusion, with single-branch ablation modes
"""

from .inversion_encoder import (
    EncoderMode,
    FilteredRepresentation,
    TokenSequence,
    EncoderOutput,
    InversionEncoder,
    TransformerBranch,
    TransformerBlock,
    MultiHeadSelfAttention,
    CNNBranch,
    ResidualBlock3d,
    Fusion,
    filter_input,
    patchify,
    tokenize,
    encode,
    inverse_softplus,
)

__all__ = [
    'EncoderMode',
    'FilteredRepresentation',
    'TokenSequence',
    'EncoderOutput',
    'InversionEncoder',
    'TransformerBranch',
    'TransformerBlock',
    'MultiHeadSelfAttention',
    'CNNBranch',
    'ResidualBlock3d',
    'Fusion',
    'filter_input',
    'patchify',
    'tokenize',
    'encode',
    'inverse_softplus'
]
