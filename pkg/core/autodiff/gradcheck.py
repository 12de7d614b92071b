from typing import Callable, Optional

import numpy as np

from ..errors import NonFiniteError
from .tensor import Graph, Tensor, backward, no_grad


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-3,
               max_elements: Optional[int] = None, seed: int = 0) -> float:
    """
    Compare reverse-mode gradients against central differences.

    Args:
        f: scalar-valued function of one tensor
        x: evaluation point (converted to double precision)
        step: finite-difference step
        max_elements: check only this many elements, drawn with `seed`

    Returns:
        max over checked elements of |analytic - numeric| / max(1, |analytic|, |numeric|)
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    point = Tensor(base.copy(), requires_grad=True)
    with Graph():
        loss = f(point)
        if not np.all(np.isfinite(loss.data)):
            raise NonFiniteError("grad_check objective")
        backward(loss, parameters=[point])
    analytic = point.grad

    flat_count = base.size
    if max_elements is not None and max_elements < flat_count:
        rng = np.random.default_rng(seed)
        positions = np.sort(rng.choice(flat_count, size=max_elements, replace=False))
    else:
        positions = np.arange(flat_count)

    worst = 0.0
    with no_grad():
        for position in positions:
            index = np.unravel_index(position, base.shape)
            shifted = base.copy()
            shifted[index] += step
            upper = float(f(Tensor(shifted)).data)
            shifted[index] -= 2.0 * step
            lower = float(f(Tensor(shifted)).data)
            if not (np.isfinite(upper) and np.isfinite(lower)):
                raise NonFiniteError("grad_check objective")
            numeric = (upper - lower) / (2.0 * step)
            a = float(analytic[index])
            error = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, error)
    return worst
