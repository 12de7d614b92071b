"""
GAN Submodule

This submodule holds the 3D-aware GAN proper:
- Generator G: latent (+ label) -> voxel representation
- Geometry extraction M: representation -> occupancy
- Discriminator D over rendered images, with penultimate features
- Non-saturating logistic losses and lazy R1
"""

from .generator import (
    Generator,
    generate,
    extract_geometry,
    extract_geometry_batch,
    sample_latents,
    upsampling_blocks,
)

from .discriminator import (
    Discriminator,
    ImageConvNet,
    discriminate,
    FEATURE_DIM,
)

from .losses import (
    gan_loss_g,
    gan_loss_d,
    r1_penalty,
    input_gradient,
    R1Result,
)

__all__ = [
    # Generator
    'Generator',
    'generate',
    'extract_geometry',
    'extract_geometry_batch',
    'sample_latents',
    'upsampling_blocks',

    # Discriminator
    'Discriminator',
    'ImageConvNet',
    'discriminate',
    'FEATURE_DIM',

    # Losses
    'gan_loss_g',
    'gan_loss_d',
    'r1_penalty',
    'input_gradient',
    'R1Result'
]
