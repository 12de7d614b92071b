import logging
from typing import Sequence, Tuple

import numpy as np

from .tensor import Parameter


logger = logging.getLogger(__name__)


def adam_step(params: Sequence[Parameter], lr: float, betas: Tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> None:
    """
    One adaptive-moment update with bias correction, then clear the grads.

    Raises:
        ValueError: if any parameter has no gradient (run backward first)
    """
    beta1, beta2 = betas
    for param in params:
        if param.grad is None:
            raise ValueError(f"Missing gradient for parameter {param.name or '<unnamed>'}")
    for param in params:
        g = param.grad
        param.adam_step += 1
        t = param.adam_step
        param.adam_m = beta1 * param.adam_m + (1.0 - beta1) * g
        param.adam_v = beta2 * param.adam_v + (1.0 - beta2) * g * g
        m_hat = param.adam_m / (1.0 - beta1 ** t)
        v_hat = param.adam_v / (1.0 - beta2 ** t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        param.version += 1
        param.grad = None


class Adam:
    """Adam bound to one model's parameters"""

    def __init__(self, params: Sequence[Parameter], lr: float, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps

    def step(self) -> None:
        adam_step(self.params, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None
