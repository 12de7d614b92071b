from typing import Optional

import numpy as np

from ..autodiff import ops
from ..autodiff.layers import Conv2d, Linear, Module, ModuleList, one_hot
from ..autodiff.tensor import Tensor, as_tensor
from ..errors import ShapeMismatchError


FEATURE_DIM = 16
CONV_WIDTHS = (16, 32, 64)


class ImageConvNet(Module):
    """
    Three strided 2D conv blocks (k4, s2, p1, leaky) over RGB images
    (N, H, W, 3), flattened into a dense head.
    """

    def __init__(self, image_size: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        if image_size % 8:
            raise ValueError(f"Image size must be divisible by 8, got {image_size}")
        self.image_size = image_size
        convs = []
        in_width = 3
        for width in CONV_WIDTHS:
            convs.append(Conv2d(in_width, width, 4, rng, stride=2, padding=1))
            in_width = width
        self.convs = ModuleList(convs)
        flat = in_width * (image_size // 8) ** 2
        self.head = Linear(flat, out_features, rng)

    def check_input(self, op: str, rgb: Tensor) -> None:
        expected = (self.image_size, self.image_size, 3)
        if rgb.ndim != 4 or tuple(rgb.shape[1:]) != expected:
            raise ShapeMismatchError(op, rgb.shape, (rgb.shape[0] if rgb.ndim else 1,) + expected)

    def forward(self, rgb) -> Tensor:
        rgb = as_tensor(rgb)
        self.check_input("image_convnet", rgb)
        x = ops.permute(rgb, (0, 3, 1, 2))
        for conv in self.convs:
            x = ops.leaky_relu(conv(x))
        x = ops.reshape(x, (x.shape[0], -1))
        return self.head(x)


class Discriminator(Module):
    """
    Image -> real/fake logit. The leaky-activated 16-dim penultimate features
    are exposed for the Frechet proxy; with labels, a projection term
    <embed(label), features> is added to the logit.
    """

    def __init__(self, image_size: int, rng: np.random.Generator, num_classes: int = 0):
        super().__init__()
        self.image_size = image_size
        self.num_classes = num_classes
        self.body = ImageConvNet(image_size, FEATURE_DIM, rng)
        self.logit = Linear(FEATURE_DIM, 1, rng)
        if num_classes:
            self.embed = Linear(num_classes, FEATURE_DIM, rng, bias=False)
        self.assign_names("discriminator.")

    def features(self, rgb) -> Tensor:
        rgb = as_tensor(rgb)
        self.body.check_input("discriminate", rgb)
        return ops.leaky_relu(self.body(rgb))

    def forward(self, rgb, labels=None) -> Tensor:
        feats = self.features(rgb)
        logits = ops.reshape(self.logit(feats), (feats.shape[0],))
        if self.num_classes and labels is not None:
            projection = ops.sum_(self.embed(one_hot(labels, self.num_classes)) * feats, axis=-1)
            logits = logits + projection
        return logits


def discriminate(discriminator: Discriminator, rgb, labels=None) -> Tensor:
    """Per-image real/fake logits (N,)"""
    return discriminator(rgb, labels)
