import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from tqdm import tqdm

from ..autodiff import functional as F
from ..autodiff import ops
from ..autodiff.layers import Conv3d, Linear, Module, ModuleList, one_hot
from ..autodiff.optim import Adam
from ..autodiff.tensor import Graph, Tensor, backward, get_default_dtype, no_grad
from ..errors import DivergenceError
from ..world.shapes import OccupancyGrid, ShapeCategory, sample_shape, voxelize


logger = logging.getLogger(__name__)

TARGET_SHARE = 1
OTHER_SHARE = 2


class ShapeClassifier(Module):
    """
    Voxel CNN: occupancy (N, S, S, S) -> category logits.

    One full-resolution conv, then stride-2 convs; the last map is pooled by
    mean and by max over space before a two-layer head.
    """

    def __init__(self, num_classes: int, rng: np.random.Generator, widths=(16, 32, 64), hidden: int = 64):
        super().__init__()
        self.num_classes = num_classes
        convs = []
        in_width = 1
        for index, width in enumerate(widths):
            convs.append(Conv3d(in_width, width, 3, rng, stride=1 if index == 0 else 2, padding=1))
            in_width = width
        self.convs = ModuleList(convs)
        self.hidden = Linear(2 * in_width, hidden, rng)
        self.head = Linear(hidden, num_classes, rng)
        self.assign_names("classifier.")

    def forward(self, occupancy) -> Tensor:
        x = Tensor(np.asarray(occupancy, dtype=get_default_dtype())[:, None])
        for conv in self.convs:
            x = ops.leaky_relu(conv(x))
        pooled = ops.concat([ops.mean(x, axis=(2, 3, 4)), ops.max_(x, axis=(2, 3, 4))], axis=1)
        return self.head(ops.leaky_relu(self.hidden(pooled)))

    def predict(self, grids: Sequence[OccupancyGrid]) -> np.ndarray:
        if not grids:
            return np.zeros(0, dtype=np.int64)
        with no_grad():
            logits = self(np.stack([g.bits for g in grids]))
        return np.argmax(logits.data, axis=1)


def cross_entropy(logits: Tensor, labels: np.ndarray, num_classes: int) -> Tensor:
    picked = ops.sum_(F.log_softmax(logits) * one_hot(labels, num_classes), axis=1)
    return ops.scale(ops.mean(picked), -1.0)


@dataclass
class ClassifierResult:
    classifier: ShapeClassifier
    accuracy: float
    losses: List[float] = field(default_factory=list)


def target_other_batch(rng: np.random.Generator, target: int, num_classes: int,
                       groups: int) -> np.ndarray:
    """Labels with target:other = 1:2 (`groups` targets, 2 * groups others)"""
    others = [c for c in range(num_classes) if c != target]
    labels = [target] * (TARGET_SHARE * groups)
    labels += list(rng.choice(others, size=OTHER_SHARE * groups))
    return np.array(labels, dtype=np.int64)


def voxelized_batch(rng: np.random.Generator, labels: np.ndarray, categories: Sequence[ShapeCategory],
                    resolution: int, sigma_max: float) -> np.ndarray:
    grids = [voxelize(sample_shape(categories[int(label)], int(rng.integers(2 ** 63))), resolution, sigma_max).bits
             for label in labels]
    return np.stack(grids)


def train_shape_classifier(resolution: int = 16, steps: int = 1500, seed: int = 0, groups: int = 4,
                           lr: float = 1e-3, test_per_class: int = 50,
                           categories: Sequence[ShapeCategory] = tuple(ShapeCategory),
                           sigma_max: float = 50.0, show_progress: bool = False) -> ClassifierResult:
    """
    Softmax classifier over analytic categories. Each batch targets one
    category (round-robin) and draws target:other shapes at 1:2.
    Accuracy is measured on a held-out, class-balanced set.
    """
    num_classes = len(categories)
    if num_classes < 2:
        raise ValueError(f"Need at least 2 categories, got {num_classes}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xc1a5]))
    classifier = ShapeClassifier(num_classes, rng)
    optimizer = Adam(classifier.parameters(), lr)
    losses: List[float] = []

    for step in tqdm(range(steps), disable=not show_progress, desc="classifier", leave=False):
        labels = target_other_batch(rng, step % num_classes, num_classes, groups)
        grids = voxelized_batch(rng, labels, categories, resolution, sigma_max)
        with Graph():
            loss = cross_entropy(classifier(grids), labels, num_classes)
            backward(loss, classifier.parameters())
        optimizer.step()
        losses.append(float(loss.data))
        if not np.isfinite(losses[-1]):
            raise DivergenceError(step + 1, "classifier_loss")

    test_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7e57]))
    test_labels = np.repeat(np.arange(num_classes), test_per_class)
    test_grids = voxelized_batch(test_rng, test_labels, categories, resolution, sigma_max)
    with no_grad():
        predictions = np.argmax(classifier(test_grids).data, axis=1)
    accuracy = float(np.mean(predictions == test_labels))
    logger.info(f"Shape classifier held-out accuracy: {accuracy:.3f} over {len(test_labels)} shapes")
    return ClassifierResult(classifier=classifier, accuracy=accuracy, losses=losses)
