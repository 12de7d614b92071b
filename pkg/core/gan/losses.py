"""
Non-saturating logistic GAN losses and the lazy R1 penalty.

R1 is (gamma / 2) * mean ||grad_I D(I)||^2 over real images. Its gradient
with respect to D's weights needs a mixed second derivative; it is taken
here as a directional central difference along the (constant) input
gradient g:

    d/dtheta (1/2)||g||^2  ~=  [dD(I + h g)/dtheta - dD(I - h g)/dtheta] / (2h)

so only first-order backward passes are required.
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Graph, Tensor, as_tensor, backward


def gan_loss_g(fake_logits) -> Tensor:
    """mean softplus(-D(fake))"""
    return ops.mean(ops.softplus(ops.scale(as_tensor(fake_logits), -1.0)))


def gan_loss_d(real_logits, fake_logits) -> Tensor:
    """mean softplus(-D(real)) + mean softplus(D(fake))"""
    real_term = ops.mean(ops.softplus(ops.scale(as_tensor(real_logits), -1.0)))
    fake_term = ops.mean(ops.softplus(as_tensor(fake_logits)))
    return real_term + fake_term


@dataclass
class R1Result:
    surrogate: Tensor   # backward through this gives the penalty's weight gradient
    penalty: float      # (gamma / 2) * mean ||grad||^2, for logging


def input_gradient(discriminator, rgb: np.ndarray, labels=None) -> np.ndarray:
    """grad_I of sum_n D(I_n), per image (each logit depends only on its own image)"""
    images = Tensor(np.array(rgb), requires_grad=True)
    with Graph():
        total = ops.sum_(discriminator(images, labels))
        backward(total, parameters=[images])
    return images.grad


def r1_penalty(discriminator, real_rgb, gamma: float = 1.0, labels=None, step: float = 1e-3) -> R1Result:
    real = real_rgb.data if isinstance(real_rgb, Tensor) else np.asarray(real_rgb)
    g = input_gradient(discriminator, real, labels)
    n = real.shape[0]
    penalty = 0.5 * gamma * float(np.mean(np.sum(g.reshape(n, -1) ** 2, axis=1)))

    plus = discriminator(Tensor(real + step * g), labels)
    minus = discriminator(Tensor(real - step * g), labels)
    surrogate = ops.scale(ops.mean(plus - minus), gamma / (2.0 * step))
    return R1Result(surrogate=surrogate, penalty=penalty)
