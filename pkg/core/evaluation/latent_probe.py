"""
Latent-space smoothness probes: local Gaussian perturbations, straight-line
interpolation and the encoder's inversion gap.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..autodiff.tensor import get_default_dtype, no_grad
from ..gan.generator import Generator, extract_geometry, sample_latents
from .iou import iou_3d


logger = logging.getLogger(__name__)


@dataclass
class SaltationStats:
    base_z: np.ndarray
    scale: float
    distances: List[float] = field(default_factory=list)
    valid: List[bool] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.distances)) if self.distances else 0.0

    @property
    def max(self) -> float:
        return float(np.max(self.distances)) if self.distances else 0.0

    @property
    def valid_fraction(self) -> float:
        return float(np.mean(self.valid)) if self.valid else 1.0


def _condition(generator: Generator, label: Optional[int], count: int):
    if not generator.num_classes:
        return None
    return np.full(count, 0 if label is None else label)


def latent_probe(generator: Generator, z, n_perturb: int, scale: float, validity_threshold: float = 0.5,
                 density_threshold: float = 2.0, seed: int = 0, label: Optional[int] = None,
                 batch_size: int = 32) -> SaltationStats:
    """
    Perturb z with eps ~ N(0, scale^2 I) n_perturb times. Each neighbour is
    scored by the per-element mean |r(z + eps) - r(z)| and counts as valid
    when its geometry keeps IoU >= validity_threshold with the base geometry.
    """
    if n_perturb < 1:
        raise ValueError(f"n_perturb must be at least 1, got {n_perturb}")
    if scale < 0:
        raise ValueError(f"Noise scale must be non-negative, got {scale}")
    dtype = get_default_dtype()
    z = np.asarray(z, dtype=dtype).reshape(1, -1)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5a17]))
    stats = SaltationStats(base_z=z[0].copy(), scale=float(scale))
    with no_grad():
        base = generator(z, _condition(generator, label, 1)).data[0]
        base_geometry = extract_geometry(base, density_threshold)
        for start in range(0, n_perturb, batch_size):
            count = min(batch_size, n_perturb - start)
            eps = (rng.standard_normal((count, z.shape[1])) * scale).astype(dtype)
            neighbours = generator(z + eps, _condition(generator, label, count)).data
            for grid in neighbours:
                stats.distances.append(float(np.mean(np.abs(grid - base))))
                overlap = iou_3d(extract_geometry(grid, density_threshold), base_geometry).iou
                stats.valid.append(overlap >= validity_threshold)
    return stats


@dataclass
class InterpolationStats:
    distances: List[float]

    @property
    def peak_to_mean(self) -> float:
        """Largest step over the average step; 1 for a perfectly even path"""
        mean = float(np.mean(self.distances)) if self.distances else 0.0
        return float(np.max(self.distances)) / mean if mean > 0 else 1.0


def latent_interpolation_probe(generator: Generator, z_a, z_b, steps: int = 16,
                               label: Optional[int] = None) -> InterpolationStats:
    """Per-step mean |r(z_t) - r(z_t+1)| along the straight path z_a -> z_b"""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    dtype = get_default_dtype()
    t = np.linspace(0.0, 1.0, steps + 1)[:, None]
    path = ((1.0 - t) * np.asarray(z_a).reshape(1, -1) + t * np.asarray(z_b).reshape(1, -1)).astype(dtype)
    with no_grad():
        grids = generator(path, _condition(generator, label, len(path))).data
    distances = [float(np.mean(np.abs(grids[i + 1] - grids[i]))) for i in range(steps)]
    return InterpolationStats(distances=distances)


def inversion_gap(generator: Generator, encoder, n: int = 64, seed: int = 0, batch_size: int = 16) -> float:
    """Mean ||z - E(G(z))||_1 over fresh latents"""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x16a9]))
    gaps: List[np.ndarray] = []
    with no_grad():
        for start in range(0, n, batch_size):
            count = min(batch_size, n - start)
            z = sample_latents(rng, count, generator.latent_dim, get_default_dtype())
            labels = rng.integers(generator.num_classes, size=count) if generator.num_classes else None
            z_star = encoder(generator(z, labels)).data
            gaps.append(np.abs(z - z_star).sum(axis=1))
    return float(np.mean(np.concatenate(gaps)))
