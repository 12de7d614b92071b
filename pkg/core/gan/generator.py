import logging
from typing import List, Optional

import numpy as np

from ..autodiff import ops
from ..autodiff.layers import Conv3d, ConvTranspose3d, Linear, Module, ModuleList, one_hot
from ..autodiff.tensor import Tensor, as_tensor
from ..world.shapes import OccupancyGrid


logger = logging.getLogger(__name__)

SEED_EXTENT = 2
SEED_WIDTH = 64
MIN_WIDTH = 8


def upsampling_blocks(resolution: int) -> int:
    """Number of x2 transposed-conv blocks from the 2^3 seed to `resolution`"""
    blocks = int(round(np.log2(resolution))) - 1
    if resolution < 4 or SEED_EXTENT * 2 ** blocks != resolution:
        raise ValueError(f"Generator resolution must be a power of two >= 4, got {resolution}")
    return blocks


class Generator(Module):
    """
    Latent (plus optional one-hot label) -> voxel representation (N, S, S, S, C_r).

    Channel 0 of the output is the density logit; channels 1-3 are colour features.
    """

    def __init__(self, latent_dim: int, resolution: int, channels: int,
                 rng: np.random.Generator, num_classes: int = 0):
        super().__init__()
        self.latent_dim = latent_dim
        self.resolution = resolution
        self.channels = channels
        self.num_classes = num_classes

        self.project = Linear(latent_dim + num_classes, SEED_WIDTH * SEED_EXTENT ** 3, rng)
        blocks = []
        width = SEED_WIDTH
        for _ in range(upsampling_blocks(resolution)):
            out_width = max(MIN_WIDTH, width // 2)
            blocks.append(ConvTranspose3d(width, out_width, 4, rng, stride=2, padding=1))
            width = out_width
        self.blocks = ModuleList(blocks)
        self.to_field = Conv3d(width, channels, 1, rng)
        self.assign_names("generator.")

    def forward(self, z, labels=None) -> Tensor:
        z = as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"Expected latents of shape (N, {self.latent_dim}), got {z.shape}")
        if self.num_classes:
            if labels is None:
                raise ValueError("This generator is label-conditioned; pass labels")
            z = ops.concat([z, one_hot(labels, self.num_classes)], axis=1)
        n = z.shape[0]
        x = ops.leaky_relu(self.project(z))
        x = ops.reshape(x, (n, SEED_WIDTH) + (SEED_EXTENT,) * 3)
        for block in self.blocks:
            x = ops.leaky_relu(block(x))
        x = self.to_field(x)
        return ops.permute(x, (0, 2, 3, 4, 1))


def generate(generator: Generator, z, labels=None) -> Tensor:
    """r = G(z)"""
    return generator(z, labels)


def extract_geometry(r, threshold: float = 2.0) -> OccupancyGrid:
    """Occupied iff softplus(density logit) > threshold, for one (S, S, S, C) grid"""
    if threshold <= 0:
        raise ValueError(f"Density threshold must be positive, got {threshold}")
    data = r.data if isinstance(r, Tensor) else np.asarray(r)
    if data.ndim != 4:
        raise ValueError(f"Expected one (S, S, S, C) grid, got {data.shape}")
    density = np.logaddexp(0.0, data[..., 0])
    return OccupancyGrid(size=data.shape[0], bits=density > threshold)


def extract_geometry_batch(r, threshold: float = 2.0) -> List[OccupancyGrid]:
    data = r.data if isinstance(r, Tensor) else np.asarray(r)
    return [extract_geometry(grid, threshold) for grid in data]


def sample_latents(rng: np.random.Generator, count: int, latent_dim: int,
                   dtype: Optional[type] = None) -> np.ndarray:
    """Standard Gaussian latents"""
    z = rng.standard_normal((count, latent_dim))
    return z.astype(dtype) if dtype is not None else z
