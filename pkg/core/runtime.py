import os
from typing import Literal

import numpy as np

from .autodiff.tensor import set_default_dtype


Precision = Literal["float64", "float32"]

THREADS_ENV = "CGC_LAB_THREADS"


def get_dtype(precision: Precision = "float64"):
    """
    Get the numpy dtype for a precision name.

    Args:
        precision: Which floating point width to compute in
            - "float64": default, required for gradient checks and bit-reproducibility
            - "float32": faster, only when explicitly configured

    Returns:
        numpy dtype
    """
    if precision == "float64":
        return np.float64
    elif precision == "float32":
        return np.float32
    else:
        raise ValueError(f"Unknown precision: {precision}")


def use_precision(precision: Precision = "float64"):
    """Make `precision` the default dtype for new tensors and parameters"""
    dtype = get_dtype(precision)
    set_default_dtype(dtype)
    return dtype


def get_thread_cap(default: int = 1) -> int:
    """Read CGC_LAB_THREADS; falls back to `default` when unset or invalid"""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return max(1, value)

