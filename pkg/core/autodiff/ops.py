"""
Elementwise, reduction and shape operations.

Every op takes Tensors (python scalars and arrays are promoted to constants),
computes its output with numpy and hands a backward rule to `make_result`.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor, as_tensor, make_result


LEAKY_SLOPE = 0.2

Axis = Optional[Union[int, Tuple[int, ...]]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result("add", a.data + b.data, (a, b), backward)


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result("subtract", a.data - b.data, (a, b), backward)


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result("multiply", a.data * b.data, (a, b), backward)


def divide(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("divide", a, b)
    out = a.data / b.data

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return make_result("divide", out, (a, b), backward)


def scale(a, factor: float) -> Tensor:
    """Multiply by a python scalar"""
    a = as_tensor(a)

    def backward(g):
        return (g * factor,)

    return make_result("scale", a.data * factor, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape) from None

    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if need_a else None
        grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if need_b else None
        return grad_a, grad_b

    return make_result("matmul", out, (a, b), backward)


# elementwise nonlinearities

def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0
    # the kink takes the negative slope
    factor = np.where(positive, 1.0, slope).astype(a.data.dtype)

    def backward(g):
        return (g * factor,)

    return make_result("leaky_relu", a.data * factor, (a,), backward)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g * _stable_sigmoid(a.data),)

    return make_result("softplus", np.logaddexp(0.0, a.data), (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return make_result("sigmoid", out, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return make_result("exp", out, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g / a.data,)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return make_result("log", out, (a,), backward)


def abs_(a) -> Tensor:
    a = as_tensor(a)
    # subgradient 0 at 0
    sign = np.sign(a.data)

    def backward(g):
        return (g * sign,)

    return make_result("abs", np.abs(a.data), (a,), backward)


def square(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (2.0 * g * a.data,)

    return make_result("square", a.data * a.data, (a,), backward)


# reductions

def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result("sum", np.asarray(out), (a,), backward)


def mean(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return make_result("mean", np.asarray(out), (a,), backward)


def max_(a, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Maximum over `axis`; the gradient goes to the first maximal element"""
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    kept = tuple(ax for ax in range(a.ndim) if ax not in axes)
    moved = np.transpose(a.data, kept + axes)
    kept_shape = moved.shape[:len(kept)]
    flat = moved.reshape(kept_shape + (-1,))
    winner = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0]
    if keepdims:
        out = np.expand_dims(out, axes)

    def backward(g):
        g = np.asarray(g).reshape(kept_shape)
        grad_flat = np.zeros_like(flat)
        np.put_along_axis(grad_flat, winner[..., None], g[..., None], axis=-1)
        grad_moved = grad_flat.reshape(moved.shape)
        return (np.transpose(grad_moved, np.argsort(kept + axes)),)

    return make_result("max", np.asarray(out), (a,), backward)


def cumsum(a, axis: int = -1, exclusive: bool = False) -> Tensor:
    """Cumulative sum along `axis`; `exclusive` drops the current element"""
    a = as_tensor(a)
    out = np.cumsum(a.data, axis=axis)
    if exclusive:
        out = out - a.data

    def backward(g):
        rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        if exclusive:
            rev = rev - g
        return (rev,)

    return make_result("cumsum", out, (a,), backward)


# shape manipulation

def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from None

    def backward(g):
        return (g.reshape(a.shape),)

    return make_result("reshape", out, (a,), backward)


def permute(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeMismatchError("permute", a.shape, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_result("permute", np.transpose(a.data, axes), (a,), backward)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def slice_(a, index) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data[index]
    except IndexError:
        raise ShapeMismatchError("slice", a.shape) from None
    basic = _is_basic_index(index)

    def backward(g):
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return make_result("slice", np.array(out), (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", *[t.shape for t in tensors]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result("concat", out, tensors, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                for t in tensors]
    return concat(expanded, axis=axis)
