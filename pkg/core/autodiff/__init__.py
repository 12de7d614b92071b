"""
Automatic Differentiation Submodule

This submodule supplies every differentiable operation used by the generator,
renderer, encoder and discriminator:
- Tensor / Parameter types and the define-by-run Graph
- Elementwise, reduction and shape ops
- Convolutions, layer norm, softmax and trilinear grid sampling
- Module / layer building blocks
- Adam optimizer and the finite-difference gradient checker
"""

from .tensor import (
    Tensor,
    Parameter,
    Graph,
    Node,
    backward,
    no_grad,
    grad_enabled,
    set_default_dtype,
    get_default_dtype,
)

from .ops import (
    add, subtract, multiply, divide, scale, matmul,
    leaky_relu, softplus, sigmoid, exp, log, abs_, square,
    sum_, mean, max_, cumsum, reshape, permute, slice_, concat, stack,
)

from .functional import (
    conv2d, conv3d, conv_transpose3d,
    layer_norm, softmax, log_softmax,
    TrilinearPlan, build_trilinear_plan, grid_sample_trilinear,
)

from .layers import (
    Module, ModuleList, Linear, Conv2d, Conv3d, ConvTranspose3d, LayerNorm,
    gaussian_init, one_hot,
)

from .optim import adam_step, Adam
from .gradcheck import grad_check

__all__ = [
    # Core types
    'Tensor', 'Parameter', 'Graph', 'Node',
    'backward', 'no_grad', 'grad_enabled', 'set_default_dtype', 'get_default_dtype',

    # Ops
    'add', 'subtract', 'multiply', 'divide', 'scale', 'matmul',
    'leaky_relu', 'softplus', 'sigmoid', 'exp', 'log', 'abs_', 'square',
    'sum_', 'mean', 'max_', 'cumsum', 'reshape', 'permute', 'slice_', 'concat', 'stack',
    'conv2d', 'conv3d', 'conv_transpose3d',
    'layer_norm', 'softmax', 'log_softmax',
    'TrilinearPlan', 'build_trilinear_plan', 'grid_sample_trilinear',

    # Layers
    'Module', 'ModuleList', 'Linear', 'Conv2d', 'Conv3d', 'ConvTranspose3d', 'LayerNorm',
    'gaussian_init', 'one_hot',

    # Optimization and verification
    'adam_step', 'Adam', 'grad_check'
]
