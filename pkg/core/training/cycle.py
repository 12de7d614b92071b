"""
The generation-inversion-generation cycle and the losses defined on it.

    r   = G(z)
    z*  = E(r)
    r*  = G(z*)
    z** = E(r*),  r** = G(z**)      (cycle depth 2)

During the generator step z* is a constant: E runs without recording and
L_R only reaches G.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor, as_tensor, no_grad
from ..errors import ShapeMismatchError


@dataclass
class CycleRecord:
    z: Tensor
    r: Tensor
    z_star: Tensor
    r_star: Tensor
    z_star2: Optional[Tensor] = None
    r_star2: Optional[Tensor] = None

    @property
    def depth(self) -> int:
        return 1 if self.r_star2 is None else 2


def compute_cycle(generator, encoder, z, depth: int = 1, labels=None,
                  r: Optional[Tensor] = None, z_star: Optional[Tensor] = None) -> CycleRecord:
    """
    Run the cycle from z. Pass `r` to reuse an existing G(z) forward and
    `z_star` to reuse an existing E(r) forward (taken as a constant).
    Gradients flow into G through r and r* (and r**) but never through E.
    """
    if depth not in (1, 2):
        raise ValueError(f"Cycle depth must be 1 or 2, got {depth}")
    z = as_tensor(z)
    if r is None:
        r = generator(z, labels)
    if z_star is None:
        with no_grad():
            z_star = encoder(r.detach())
    else:
        z_star = as_tensor(z_star).detach()
    r_star = generator(z_star, labels)
    record = CycleRecord(z=z, r=r, z_star=z_star, r_star=r_star)
    if depth == 2:
        with no_grad():
            record.z_star2 = encoder(r_star.detach())
        record.r_star2 = generator(record.z_star2, labels)
    return record


def loss_Z(z, z_star) -> Tensor:
    """Batch mean of per-sample L1 distances ||z - z*||_1"""
    z, z_star = as_tensor(z), as_tensor(z_star)
    if z.shape != z_star.shape or z.ndim != 2:
        raise ShapeMismatchError("loss_Z", z.shape, z_star.shape)
    return ops.mean(ops.sum_(ops.abs_(z - z_star), axis=1))


def loss_R(r, r_star) -> Tensor:
    """Per-element mean |r - r*| over the whole batch"""
    r, r_star = as_tensor(r), as_tensor(r_star)
    if r.shape != r_star.shape:
        raise ShapeMismatchError("loss_R", r.shape, r_star.shape)
    return ops.mean(ops.abs_(r - r_star))


def cycle_loss(record: CycleRecord) -> Tensor:
    """L_R(r, r*), plus L_R(r, r**) for a depth-2 cycle"""
    total = loss_R(record.r, record.r_star)
    if record.r_star2 is not None:
        total = total + loss_R(record.r, record.r_star2)
    return total


def z_cycle_gap(record: CycleRecord) -> float:
    """Mean ||z* - z**||_1; 0 for a depth-1 cycle"""
    if record.z_star2 is None:
        return 0.0
    return float(loss_Z(record.z_star.detach(), record.z_star2.detach()).data)


def density_laplacian(sigma) -> Tensor:
    """Mean over interior voxels of |6 s(v) - sum of its 6 neighbours|, sigma (N, S, S, S)"""
    sigma = as_tensor(sigma)
    if sigma.ndim != 4 or min(sigma.shape[1:]) < 3:
        raise ValueError(f"Laplacian needs (N, S, S, S) with S >= 3, got {sigma.shape}")
    inner = slice(1, -1)
    center = sigma[:, inner, inner, inner]
    neighbours = (sigma[:, 2:, inner, inner] + sigma[:, :-2, inner, inner]
                  + sigma[:, inner, 2:, inner] + sigma[:, inner, :-2, inner]
                  + sigma[:, inner, inner, 2:] + sigma[:, inner, inner, :-2])
    return ops.mean(ops.abs_(ops.scale(center, 6.0) - neighbours))


def laplacian_loss(r) -> Tensor:
    """Laplacian smoothness of the post-softplus density channel"""
    r = as_tensor(r)
    return density_laplacian(ops.softplus(r[..., 0]))


def local_search_pair(z, sigma_ls: float, seed: Union[int, np.random.Generator]) -> Tuple[Tensor, Tensor]:
    """(z, z + eps) with eps ~ N(0, sigma_ls^2 I)"""
    if sigma_ls <= 0:
        raise ValueError(f"sigma_ls must be positive, got {sigma_ls}")
    z = as_tensor(z)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = rng.standard_normal(z.shape) * sigma_ls
    return z, Tensor((z.data + eps).astype(z.dtype))
