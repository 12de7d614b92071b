from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import CheckpointError
from . import functional as F
from . import ops
from .tensor import Parameter, Tensor, get_default_dtype


def gaussian_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Centered Gaussian with std 1/sqrt(fan_in)"""
    return rng.standard_normal(shape) / np.sqrt(max(1, fan_in))


class Module:
    """
    Container of named Parameters and child Modules.

    Attribute assignment registers parameters and submodules, so names follow
    the attribute path ("blocks.0.conv.weight").
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for child_name, child in self._modules.items():
            yield from child.named_parameters(prefix + child_name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        """Stamp every parameter with its dotted path; names are unique by construction"""
        for name, param in self.named_parameters(prefix):
            param.name = name

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    @contextmanager
    def frozen(self):
        """Treat every parameter as a constant inside the block; nothing is recorded for them"""
        params = self.parameters()
        previous = [p.requires_grad for p in params]
        for p in params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for p, flag in zip(params, previous):
                p.requires_grad = flag

    def versions(self) -> Dict[str, int]:
        return {name: p.version for name, p in self.named_parameters()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = [name for name in own if name not in state]
        if missing:
            raise CheckpointError("missing parameter", entry=missing[0])
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(
                    f"shape mismatch: file has {value.shape}, model expects {param.shape}", entry=name)
            param.data = value.astype(param.data.dtype, copy=True)


class ModuleList(Module):
    """Ordered children named "0", "1", ..."""

    def __init__(self, modules: Sequence[Module] = ()):
        super().__init__()
        self._items: List[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(gaussian_init(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        super().__init__()
        fan_in = in_channels * kernel_size ** 2
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(gaussian_init(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv2d(x, self.weight, stride=self.stride, padding=self.padding)
        return out + ops.reshape(self.bias, (1, -1, 1, 1))


class Conv3d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        super().__init__()
        fan_in = in_channels * kernel_size ** 3
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(gaussian_init(
            rng, (out_channels, in_channels, kernel_size, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv3d(x, self.weight, stride=self.stride, padding=self.padding)
        return out + ops.reshape(self.bias, (1, -1, 1, 1, 1))


class ConvTranspose3d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, stride: int = 1, padding: int = 0):
        super().__init__()
        # each output voxel sees ceil(k/s)^3 taps per input channel
        fan_in = in_channels * (-(-kernel_size // max(1, stride))) ** 3
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(gaussian_init(
            rng, (in_channels, out_channels, kernel_size, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        out = F.conv_transpose3d(x, self.weight, stride=self.stride, padding=self.padding)
        return out + ops.reshape(self.bias, (1, -1, 1, 1, 1))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, eps=self.eps) * self.gamma + self.beta


def one_hot(labels, num_classes: int) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.shape[0], num_classes), dtype=get_default_dtype())
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return Tensor(encoded)
