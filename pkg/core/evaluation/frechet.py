"""
Frechet distance between Gaussian fits of two feature sets:

    d^2 = ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
"""

import logging

import numpy as np
from scipy import linalg

from ..autodiff.tensor import no_grad


logger = logging.getLogger(__name__)

MIN_SAMPLES = 32
NEGATIVE_EIGENVALUE_TOLERANCE = 1e-8


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_proxy(features_a, features_b) -> float:
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"Feature sets must be (n, d) with equal d, got {a.shape} and {b.shape}")
    if len(a) < MIN_SAMPLES or len(b) < MIN_SAMPLES:
        raise ValueError(f"Need at least {MIN_SAMPLES} samples per set, got {len(a)} and {len(b)}")

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    if not (np.all(np.isfinite(cov_a)) and np.all(np.isfinite(cov_b))):
        raise ValueError("Degenerate covariance (non-finite values)")

    root_a = _psd_sqrt(cov_a)
    middle = root_a @ cov_b @ root_a
    middle = 0.5 * (middle + middle.T)
    eigenvalues = linalg.eigh(middle, eigvals_only=True)
    if eigenvalues.min() < -NEGATIVE_EIGENVALUE_TOLERANCE:
        raise ValueError(f"Covariance product has a negative eigenvalue {eigenvalues.min():.3g}")
    trace_sqrt = float(np.sqrt(np.clip(eigenvalues, 0.0, None)).sum())

    distance = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
    return max(distance, 0.0)


def discriminator_features(discriminator, rgb, batch_size: int = 32) -> np.ndarray:
    """Penultimate discriminator features for images (N, H, W, 3)"""
    rgb = np.asarray(rgb)
    chunks = []
    with no_grad():
        for start in range(0, len(rgb), batch_size):
            chunks.append(discriminator.features(rgb[start:start + batch_size]).data)
    return np.concatenate(chunks, axis=0)
