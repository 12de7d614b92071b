"""
Emission-absorption volume rendering of voxel fields and analytic shapes.

Both paths share `composite`, so reference images and generator images are
produced by the same compositing rule:

    alpha_i = 1 - exp(-sigma_i * delta)
    T_i     = exp(-delta * sum_{j<i} sigma_j)
    pixel   = sum_i T_i alpha_i c_i + T_K * background
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..autodiff import functional as F
from ..autodiff import ops
from ..autodiff.tensor import Tensor, as_tensor, no_grad
from ..world.cameras import RAY_LENGTH, CameraPose, ray_samples
from ..world.shapes import CATEGORY_COLORS, DEFAULT_SIGMA_MAX, ShapeSpec, analytic_density


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RenderSettings:
    """Image size, ray sampling and background colour"""
    height: int = 32
    width: int = 32
    samples_per_ray: int = 32
    background: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise ValueError(f"samples_per_ray must be at least 2, got {self.samples_per_ray}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"Image size must be positive, got {self.height}x{self.width}")

    @property
    def delta(self) -> float:
        """Step length: volume diagonal / samples"""
        return RAY_LENGTH / self.samples_per_ray


@dataclass
class RenderedImage:
    """Batch of RGBA images (N, H, W, 4), colour first, alpha last"""
    rgba: Tensor

    @property
    def height(self) -> int:
        return self.rgba.shape[1]

    @property
    def width(self) -> int:
        return self.rgba.shape[2]

    @property
    def rgb(self) -> Tensor:
        return self.rgba[..., :3]

    @property
    def alpha(self) -> Tensor:
        return self.rgba[..., 3]

    def numpy(self) -> np.ndarray:
        return self.rgba.data


def activate_field(r) -> Tensor:
    """Softplus on the density logit channel; feature channels pass through"""
    r = as_tensor(r)
    sigma = ops.softplus(r[..., 0:1])
    return ops.concat([sigma, r[..., 1:]], axis=-1)


def composite(sigma: Tensor, color: Tensor, settings: RenderSettings) -> Tensor:
    """
    sigma (..., K) and colour (..., K, 3) along K samples -> RGBA (..., 4).

    Differentiable in both inputs.
    """
    tau = ops.scale(sigma, settings.delta)
    transmittance = ops.exp(ops.scale(ops.cumsum(tau, axis=-1, exclusive=True), -1.0))
    alpha = 1.0 - ops.exp(ops.scale(tau, -1.0))
    weights = transmittance * alpha
    rgb = ops.sum_(ops.reshape(weights, weights.shape + (1,)) * color, axis=-2)

    remaining = ops.exp(ops.scale(ops.sum_(tau, axis=-1, keepdims=True), -1.0))
    background = Tensor(np.asarray(settings.background, dtype=rgb.dtype))
    rgb = rgb + remaining * background
    opacity = 1.0 - remaining
    return ops.concat([rgb, opacity], axis=-1)


def pose_samples(poses: Sequence[CameraPose], settings: RenderSettings) -> np.ndarray:
    """(N, H*W*K, 3) sample positions for a batch of poses"""
    points = [ray_samples(pose, settings.height, settings.width, settings.samples_per_ray)
              for pose in poses]
    return np.stack(points).reshape(len(poses), -1, 3)


def sampling_plan(poses: Sequence[CameraPose], settings: RenderSettings,
                  grid_shape: Tuple[int, int, int]) -> F.TrilinearPlan:
    """Trilinear lookups of every ray sample into a (D, H, W) grid"""
    return F.build_trilinear_plan(pose_samples(poses, settings), tuple(grid_shape))


def render(field, poses: Sequence[CameraPose], settings: RenderSettings,
           plan: Optional[F.TrilinearPlan] = None) -> RenderedImage:
    """
    Render an activated field (N, S, S, S, 4): density >= 0 in channel 0 and
    colour features in channels 1-3 (sigmoid-mapped after interpolation).

    `plan` reuses sample lookups built by `sampling_plan` for the same poses.
    """
    field = as_tensor(field)
    if field.ndim != 5 or field.shape[-1] < 4:
        raise ValueError(f"Render needs an (N, S, S, S, 4) field, got {field.shape}")
    if len(poses) != field.shape[0]:
        raise ValueError(f"Got {len(poses)} poses for a batch of {field.shape[0]} fields")
    if np.any(field.data[..., 0] < 0):
        raise ValueError("Density channel has negative values; apply activate_field first")

    n = field.shape[0]
    h, w, k = settings.height, settings.width, settings.samples_per_ray
    if plan is None:
        plan = sampling_plan(poses, settings, field.shape[1:4])
    samples = F.grid_sample_trilinear(field[..., :4], plan)
    samples = ops.reshape(samples, (n, h, w, k, 4))
    sigma = samples[..., 0]
    color = ops.sigmoid(samples[..., 1:4])
    return RenderedImage(rgba=composite(sigma, color, settings))


def render_representation(r, poses: Sequence[CameraPose], settings: RenderSettings,
                          plan: Optional[F.TrilinearPlan] = None) -> RenderedImage:
    """Render a raw voxel representation (density logits in channel 0)"""
    return render(activate_field(r), poses, settings, plan=plan)


def render_analytic(specs: Sequence[ShapeSpec], poses: Sequence[CameraPose], settings: RenderSettings,
                    resolution: int = 16, sigma_max: float = DEFAULT_SIGMA_MAX) -> RenderedImage:
    """
    Reference images: analytic density sampled directly along each ray with
    the category's flat colour. `resolution` sets the surface band width.
    """
    if len(specs) != len(poses):
        raise ValueError(f"Got {len(poses)} poses for {len(specs)} shapes")
    h, w, k = settings.height, settings.width, settings.samples_per_ray
    sigma = np.zeros((len(specs), h, w, k))
    color = np.zeros((len(specs), h, w, k, 3))
    for i, (spec, pose) in enumerate(zip(specs, poses)):
        points = ray_samples(pose, h, w, k)
        inside_cube = np.all((points >= 0.0) & (points <= 1.0), axis=-1)
        sigma[i] = np.where(inside_cube, analytic_density(spec, points, resolution, sigma_max), 0.0)
        color[i] = CATEGORY_COLORS[spec.category]
    with no_grad():
        rgba = composite(Tensor(sigma), Tensor(color), settings)
    return RenderedImage(rgba=rgba)
