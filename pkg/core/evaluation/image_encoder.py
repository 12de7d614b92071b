import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..autodiff import ops
from ..autodiff.layers import Module
from ..autodiff.optim import Adam
from ..autodiff.tensor import Graph, Tensor, as_tensor, backward, get_default_dtype, no_grad
from ..errors import DivergenceError, NonFiniteError
from ..gan.discriminator import ImageConvNet
from ..gan.generator import Generator, extract_geometry_batch, sample_latents
from ..render.volume_renderer import RenderSettings, render_representation
from ..world.cameras import sample_pose
from ..world.dataset import DatasetSample
from .iou import iou_3d


logger = logging.getLogger(__name__)


class ImageEncoder(Module):
    """Rendered RGB image (N, H, W, 3) -> latent (N, C_z)"""

    def __init__(self, image_size: int, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.net = ImageConvNet(image_size, latent_dim, rng)
        self.assign_names("image_encoder.")

    def forward(self, rgb) -> Tensor:
        return self.net(rgb)


@dataclass
class ImageEncoderResult:
    encoder: ImageEncoder
    losses: List[float] = field(default_factory=list)


def train_image_encoder(generator: Generator, settings: RenderSettings, steps: int, seed: int = 0,
                        batch_size: int = 8, lr: float = 1e-4, image_weight: float = 1.0,
                        show_progress: bool = False) -> ImageEncoderResult:
    """
    Fit an image -> latent regressor against a frozen generator: L1 on the
    latent plus L1 between the input image and the re-render of G(z_hat).
    """
    if settings.height != settings.width:
        raise ValueError("Image encoder expects square images")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1e]))
    encoder = ImageEncoder(settings.height, generator.latent_dim, rng)
    optimizer = Adam(encoder.parameters(), lr)
    losses: List[float] = []

    for step in tqdm(range(steps), disable=not show_progress, desc="image encoder", leave=False):
        z = sample_latents(rng, batch_size, generator.latent_dim, get_default_dtype())
        labels = rng.integers(generator.num_classes, size=batch_size) if generator.num_classes else None
        poses = [sample_pose(int(rng.integers(2 ** 63))) for _ in range(batch_size)]
        with no_grad():
            target = render_representation(generator(z, labels), poses, settings).rgb
        try:
            with Graph():
                z_hat = encoder(target)
                latent_loss = ops.mean(ops.abs_(z_hat - z))
                rerender = render_representation(generator(z_hat, labels), poses, settings).rgb
                image_loss = ops.mean(ops.abs_(rerender - target))
                loss = latent_loss + ops.scale(image_loss, image_weight)
                backward(loss, encoder.parameters())
        except NonFiniteError as exc:
            raise DivergenceError(step + 1, "image_encoder_loss", str(exc)) from exc
        optimizer.step()
        losses.append(float(loss.data))
        if not np.isfinite(losses[-1]):
            raise DivergenceError(step + 1, "image_encoder_loss")
    logger.info(f"Image encoder trained for {steps} steps, final loss {losses[-1] if losses else float('nan'):.4f}")
    return ImageEncoderResult(encoder=encoder, losses=losses)


def conditional_iou(generator: Generator, image_encoder: Callable, samples: Sequence[DatasetSample],
                    threshold: float = 2.0, batch_size: int = 16) -> float:
    """
    Mean IoU between extract_geometry(G(image_encoder(image), label)) and each
    sample's ground-truth occupancy. `image_encoder` maps RGB (N, H, W, 3) to latents.
    """
    if not samples:
        raise ValueError("conditional_iou needs a non-empty test set")
    scores: List[float] = []
    with no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            rgb = np.concatenate([s.image.numpy()[..., :3] for s in chunk], axis=0)
            labels = np.array([s.label for s in chunk]) if generator.num_classes else None
            z_hat = as_tensor(image_encoder(Tensor(rgb)))
            grids = extract_geometry_batch(generator(z_hat, labels), threshold)
            scores.extend(iou_3d(pred, s.occupancy).iou for pred, s in zip(grids, chunk))
    return float(np.mean(scores))
