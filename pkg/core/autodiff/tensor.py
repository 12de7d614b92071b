import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import GraphError, NonFiniteError


_state = threading.local()
_default_dtype = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype used for new tensors built from non-float data and for parameters"""
    global _default_dtype
    _default_dtype = np.dtype(dtype).type


def get_default_dtype():
    return _default_dtype


def _graph_stack() -> List["Graph"]:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable recording; tensors produced inside are constants"""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@dataclass
class Node:
    """One recorded operation: inputs, output and the rule mapping d(output) to d(inputs)"""
    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Graph:
    """
    Define-by-run tape. Recording order is the topological order; backward
    walks it in exact reverse and consumes the graph.
    """
    nodes: List[Node] = field(default_factory=list)
    consumed: bool = False

    def record(self, node: Node) -> None:
        if self.consumed:
            raise GraphError("cannot record onto a graph that backward already consumed")
        self.nodes.append(node)

    def __enter__(self) -> "Graph":
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _graph_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def current_graph() -> Graph:
    """The innermost `with Graph()` block, or a thread-local default graph"""
    stack = _graph_stack()
    if stack:
        return stack[-1]
    default = getattr(_state, "default_graph", None)
    if default is None or default.consumed:
        default = Graph()
        _state.default_graph = default
    return default


class Tensor:
    """Dense n-dimensional array with an optional gradient"""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(dtype, copy=False)
        elif not np.issubdtype(array.dtype, np.floating):
            array = array.astype(_default_dtype)
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None
        self._graph: Optional[Graph] = None

    # basic properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Constant view of the same values (gradient stops here)"""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar; the implementations live in ops.py

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.subtract(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.subtract(other, self)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.multiply(self, other)

    def __rmul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.multiply(other, self)

    def __truediv__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, 1.0 / float(other))
        return ops.divide(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.divide(other, self)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.slice_(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.permute(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def abs(self):
        from . import ops
        return ops.abs_(self)

    def exp(self):
        from . import ops
        return ops.exp(self)

    def log(self):
        from . import ops
        return ops.log(self)


class Parameter(Tensor):
    """
    Learnable tensor with its adaptive-moment optimizer state.

    `version` counts optimizer updates so callers can check which models a
    step touched.
    """

    def __init__(self, data, name: Optional[str] = None, dtype=None):
        super().__init__(np.array(data, dtype=dtype or _default_dtype), requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.adam_step = 0
        self.version = 0

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    if isinstance(value, (int, float)):
        return Tensor(np.asarray(value, dtype=_default_dtype))
    return Tensor(value)


# finite-value checking can be switched off for speed in trusted runs
check_finite = True


def make_result(op: str, data: np.ndarray, inputs: Iterable[Tensor],
                backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    """Wrap an op output and record it when any input requires grad"""
    inputs = tuple(inputs)
    if check_finite and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"forward of {op}")
    needs_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        graph = current_graph()
        node = Node(op=op, inputs=inputs, output=out, backward_fn=backward_fn)
        graph.record(node)
        out._node = node
        out._graph = graph
    return out


def backward(loss: Tensor, parameters: Optional[Sequence[Tensor]] = None) -> None:
    """
    Reverse-mode sweep from a scalar loss.

    Gradients accumulate into `.grad` of leaf tensors. With `parameters`
    given, only those receive gradients and any of them the loss does not
    reach gets an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._graph is None:
        raise GraphError("loss was not recorded on a graph (no input requires grad)")
    graph = loss._graph
    if graph.consumed:
        raise GraphError("graph already consumed by a previous backward; re-run the forward pass")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    for node in reversed(graph.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        for tensor, g_in in zip(node.inputs, input_grads):
            if g_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if tensor.is_leaf:
                leaves[key] = tensor
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = g_in
    graph.consumed = True

    if parameters is not None:
        targets = list(parameters)
    else:
        targets = list(leaves.values())
    for tensor in targets:
        g = grads.get(id(tensor))
        if g is None:
            g = np.zeros_like(tensor.data)
        else:
            g = np.asarray(g, dtype=tensor.data.dtype).reshape(tensor.shape)
            if check_finite and not np.all(np.isfinite(g)):
                raise NonFiniteError(f"backward into {getattr(tensor, 'name', None) or 'leaf tensor'}")
        tensor.grad = g if tensor.grad is None else tensor.grad + g
