import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from ..autodiff.tensor import get_default_dtype, no_grad
from ..gan.generator import Generator, extract_geometry_batch, sample_latents
from ..world.shapes import OccupancyGrid


logger = logging.getLogger(__name__)

Classify = Callable[[Sequence[OccupancyGrid]], np.ndarray]


@dataclass(frozen=True)
class DSResult:
    B: int        # generated shapes
    C: int        # shapes classified as the requested label
    score: float

    @classmethod
    def from_counts(cls, C: int, B: int) -> "DSResult":
        if B <= 0:
            raise ValueError(f"B must be positive, got {B}")
        if not 0 <= C <= B:
            raise ValueError(f"C must lie in [0, B], got C={C} B={B}")
        return cls(B=B, C=C, score=C / B)


def discriminative_score(generator: Generator, label: int, B: int, classify: Classify,
                         threshold: float = 2.0, seed: int = 0, batch_size: int = 32) -> DSResult:
    """
    Generate B shapes conditioned on `label`, classify their extracted
    geometry and report C / B.
    """
    if B <= 0:
        raise ValueError(f"B must be positive, got {B}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(label), 0xd5]))
    predictions: List[np.ndarray] = []
    with no_grad():
        for start in range(0, B, batch_size):
            count = min(batch_size, B - start)
            z = sample_latents(rng, count, generator.latent_dim, get_default_dtype())
            labels = np.full(count, label) if generator.num_classes else None
            grids = extract_geometry_batch(generator(z, labels), threshold)
            predictions.append(np.asarray(classify(grids)))
    correct = int(np.sum(np.concatenate(predictions) == label))
    result = DSResult.from_counts(correct, B)
    logger.info(f"Discriminative score for label {label}: {result.C}/{result.B} = {result.score:.3f}")
    return result
