"""
Structured differentiable operations: convolutions, normalization, softmax
and trilinear grid sampling.

Convolutions use channels-first layouts, (N, C, H, W) and (N, C, D, H, W).
"""

import itertools
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatchError
from .tensor import Tensor, as_tensor, make_result


# convolution

def _pad_spatial(x: np.ndarray, padding: int, n_spatial: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, [(0, 0), (0, 0)] + [(padding, padding)] * n_spatial)


def _strided(start: int, count: int, stride: int) -> slice:
    return slice(start, start + stride * (count - 1) + 1, stride)


def _conv_nd(op: str, x: Tensor, weight: Tensor, stride: int, padding: int) -> Tensor:
    n_spatial = weight.ndim - 2
    if x.ndim != n_spatial + 2 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(op, x.shape, weight.shape)
    kernel = weight.shape[2:]
    xp = _pad_spatial(x.data, padding, n_spatial)
    spatial_axes = tuple(range(2, 2 + n_spatial))
    if any(xp.shape[ax] < k for ax, k in zip(spatial_axes, kernel)):
        raise ShapeMismatchError(op, x.shape, weight.shape)

    windows = sliding_window_view(xp, kernel, axis=spatial_axes)
    windows = windows[(slice(None), slice(None)) + (slice(None, None, stride),) * n_spatial]
    out_spatial = windows.shape[2:2 + n_spatial]
    kernel_axes = list(range(2 + n_spatial, 2 + 2 * n_spatial))
    out = np.tensordot(windows, weight.data, axes=([1] + kernel_axes, list(range(1, 2 + n_spatial))))
    out = np.moveaxis(out, -1, 1)

    need_x, need_w = x.requires_grad, weight.requires_grad

    def backward(g):
        batch_and_space = [0] + list(spatial_axes)
        grad_w = np.tensordot(g, windows, axes=(batch_and_space, batch_and_space)) if need_w else None
        if not need_x:
            return None, grad_w
        grad_xp = np.zeros_like(xp)
        for offset in itertools.product(*[range(k) for k in kernel]):
            w_tap = weight.data[(slice(None), slice(None)) + offset]
            contrib = np.moveaxis(np.tensordot(g, w_tap, axes=([1], [0])), -1, 1)
            target = (slice(None), slice(None)) + tuple(
                _strided(o, n, stride) for o, n in zip(offset, out_spatial))
            grad_xp[target] += contrib
        if padding:
            crop = (slice(None), slice(None)) + (slice(padding, -padding),) * n_spatial
            grad_xp = grad_xp[crop]
        return grad_xp, grad_w

    return make_result(op, np.ascontiguousarray(out), (x, weight), backward)


def conv2d(x, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """x (N, C, H, W), weight (O, C, kh, kw)"""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 4:
        raise ShapeMismatchError("conv2d", x.shape, weight.shape)
    return _conv_nd("conv2d", x, weight, stride, padding)


def conv3d(x, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """x (N, C, D, H, W), weight (O, C, kd, kh, kw)"""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 5:
        raise ShapeMismatchError("conv3d", x.shape, weight.shape)
    return _conv_nd("conv3d", x, weight, stride, padding)


def conv_transpose3d(x, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """
    x (N, Cin, D, H, W), weight (Cin, Cout, kd, kh, kw).

    Output extent per axis is (in - 1) * stride - 2 * padding + k.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 5 or weight.ndim != 5 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError("conv_transpose3d", x.shape, weight.shape)
    kernel = weight.shape[2:]
    in_spatial = x.shape[2:]
    full = tuple((n - 1) * stride + k for n, k in zip(in_spatial, kernel))
    if any(f - 2 * padding <= 0 for f in full):
        raise ShapeMismatchError("conv_transpose3d", x.shape, weight.shape)

    y = np.zeros((x.shape[0], weight.shape[1]) + full, dtype=np.result_type(x.data, weight.data))
    offsets = list(itertools.product(*[range(k) for k in kernel]))
    for offset in offsets:
        w_tap = weight.data[(slice(None), slice(None)) + offset]
        contrib = np.moveaxis(np.tensordot(x.data, w_tap, axes=([1], [0])), -1, 1)
        target = (slice(None), slice(None)) + tuple(
            _strided(o, n, stride) for o, n in zip(offset, in_spatial))
        y[target] += contrib
    crop = (slice(None), slice(None)) + tuple(slice(padding, f - padding) for f in full)
    out = y[crop]

    need_x, need_w = x.requires_grad, weight.requires_grad

    def backward(g):
        g_full = np.zeros_like(y)
        g_full[crop] = g
        grad_x = np.zeros_like(x.data) if need_x else None
        grad_w = np.zeros_like(weight.data) if need_w else None
        space = [0, 2, 3, 4]
        for offset in offsets:
            source = (slice(None), slice(None)) + tuple(
                _strided(o, n, stride) for o, n in zip(offset, in_spatial))
            g_tap = g_full[source]
            if need_x:
                w_tap = weight.data[(slice(None), slice(None)) + offset]
                grad_x += np.moveaxis(np.tensordot(g_tap, w_tap, axes=([1], [1])), -1, 1)
            if need_w:
                grad_w[(slice(None), slice(None)) + offset] = np.tensordot(x.data, g_tap, axes=(space, space))
        return grad_x, grad_w

    return make_result("conv_transpose3d", np.ascontiguousarray(out), (x, weight), backward)


# normalization and softmax

def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no affine; layers.LayerNorm adds it)"""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g):
        mean_g = g.mean(axis=-1, keepdims=True)
        mean_gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv_std * (g - mean_g - xhat * mean_gx),)

    return make_result("layer_norm", xhat, (x,), backward)


def softmax(x) -> Tensor:
    """Softmax over the last axis"""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", out, (x,), backward)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return make_result("log_softmax", out, (x,), backward)


# trilinear sampling

@dataclass
class TrilinearPlan:
    """Precomputed corner indices and weights for sampling a batch of point sets"""
    grid_shape: Tuple[int, int, int]
    n_points: int
    indices: np.ndarray   # (N, 8 * P) flat voxel indices
    weights: np.ndarray   # (N, 8 * P), zero for corners outside the grid


def build_trilinear_plan(points: np.ndarray, grid_shape: Tuple[int, int, int]) -> TrilinearPlan:
    """
    Plan lookups of unit-cube points (N, P, 3) into a grid whose voxel (i, j, k)
    is centred at ((i + .5) / D, (j + .5) / H, (k + .5) / W).

    Points outside [0, 1]^3 get all-zero weights, so they sample 0 and pass no gradient.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ShapeMismatchError("grid_sample", points.shape)
    dims = np.asarray(grid_shape, dtype=np.float64)
    inside = np.all((points >= 0.0) & (points <= 1.0), axis=-1)
    continuous = points * dims - 0.5
    base = np.floor(continuous).astype(np.int64)
    frac = continuous - base

    n, p = points.shape[:2]
    indices = np.zeros((8, n, p), dtype=np.int64)
    weights = np.zeros((8, n, p), dtype=np.float64)
    for corner, (dx, dy, dz) in enumerate(itertools.product((0, 1), repeat=3)):
        ci = base + np.array([dx, dy, dz])
        valid = inside & np.all((ci >= 0) & (ci < np.asarray(grid_shape)), axis=-1)
        w = (np.where(dx, frac[..., 0], 1.0 - frac[..., 0])
             * np.where(dy, frac[..., 1], 1.0 - frac[..., 1])
             * np.where(dz, frac[..., 2], 1.0 - frac[..., 2]))
        clipped = np.clip(ci, 0, np.asarray(grid_shape) - 1)
        flat = (clipped[..., 0] * grid_shape[1] + clipped[..., 1]) * grid_shape[2] + clipped[..., 2]
        indices[corner] = flat
        weights[corner] = np.where(valid, w, 0.0)
    indices = np.moveaxis(indices, 0, 1).reshape(n, 8 * p)
    weights = np.moveaxis(weights, 0, 1).reshape(n, 8 * p)
    return TrilinearPlan(grid_shape=tuple(grid_shape), n_points=p, indices=indices, weights=weights)


def grid_sample_trilinear(grid, plan: TrilinearPlan) -> Tensor:
    """
    grid (N, D, H, W, C) channels-last -> samples (N, P, C).

    Differentiable with respect to the grid values only; sample positions are constants.
    """
    grid = as_tensor(grid)
    if grid.ndim != 5 or tuple(grid.shape[1:4]) != tuple(plan.grid_shape) or grid.shape[0] != plan.indices.shape[0]:
        raise ShapeMismatchError("grid_sample", grid.shape, (plan.indices.shape[0],) + tuple(plan.grid_shape))
    n, c = grid.shape[0], grid.shape[-1]
    n_voxels = int(np.prod(plan.grid_shape))
    p = plan.n_points
    flat = grid.data.reshape(n, n_voxels, c)
    weights = plan.weights.astype(grid.data.dtype)
    gathered = flat[np.arange(n)[:, None], plan.indices] * weights[..., None]
    out = gathered.reshape(n, 8, p, c).sum(axis=1)

    # one bin per (batch, voxel, channel)
    bins = ((np.arange(n)[:, None] * n_voxels + plan.indices)[..., None] * c + np.arange(c)).ravel()

    def backward(g):
        spread = np.broadcast_to(g[:, None], (n, 8, p, c)).reshape(n, 8 * p, c) * weights[..., None]
        grad = np.bincount(bins, weights=spread.ravel(), minlength=n * n_voxels * c)
        return (grad.astype(grid.data.dtype, copy=False).reshape(grid.shape),)

    return make_result("grid_sample", out, (grid,), backward)
