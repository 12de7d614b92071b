"""
Inversion encoder E: voxel representation -> latent.

    field  = activate_field(r)
    r_f    = field * sigmoid(k * (sigma - rho))        (soft density gate)
    z_T    = transformer(tokens(r_f))
    z_C    = residual 3D CNN(r_f)
    z*     = fuse(z_T (+) z_C)
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from ..autodiff import functional as F
from ..autodiff import ops
from ..autodiff.layers import Conv3d, LayerNorm, Linear, Module, ModuleList, gaussian_init
from ..autodiff.tensor import Parameter, Tensor, as_tensor
from ..render.volume_renderer import activate_field


logger = logging.getLogger(__name__)


class EncoderMode(Enum):
    """Which branches feed the fusion MLP"""
    FULL = "full"
    NO_CNN = "no_cnn"
    NO_TRANSFORMER = "no_transformer"


@dataclass
class FilteredRepresentation:
    grid: Tensor          # activated field with low-density voxels suppressed
    rho: Tensor           # threshold in post-softplus density units
    gate_sharpness: float
    hard: bool = False


@dataclass
class TokenSequence:
    tokens: Tensor        # (N, n, D_tok)
    patch_size: int

    @property
    def count(self) -> int:
        return self.tokens.shape[1]


@dataclass
class EncoderOutput:
    z_star: Tensor
    z_T: Optional[Tensor]
    z_C: Optional[Tensor]


def inverse_softplus(value: float) -> float:
    return float(np.log(np.expm1(value)))


def filter_input(field, rho: Union[Tensor, float], gate_sharpness: float = 25.0,
                 hard: bool = False) -> FilteredRepresentation:
    """
    Gate every channel of each voxel by its density: soft mode multiplies by
    sigmoid(k * (sigma - rho)); hard mode zeroes voxels with sigma <= rho and
    carries no gradient through the gate.
    """
    field = as_tensor(field)
    rho = as_tensor(rho)
    if np.any(rho.data <= 0):
        raise ValueError(f"Filter threshold rho must be positive, got {rho.data}")
    sigma = field[..., 0:1]
    if hard:
        gate = Tensor((sigma.data > rho.data).astype(field.dtype))
    else:
        gate = ops.sigmoid(ops.scale(sigma - rho, gate_sharpness))
    return FilteredRepresentation(grid=field * gate, rho=rho, gate_sharpness=gate_sharpness, hard=hard)


def patchify(grid: Tensor, patch_size: int) -> Tensor:
    """(N, S, S, S, C) -> (N, n, p^3 C), patches in x-major order"""
    n, s, _, _, c = grid.shape
    if s % patch_size:
        raise ValueError(f"Grid size {s} is not divisible by patch size {patch_size}")
    m = s // patch_size
    x = ops.reshape(grid, (n, m, patch_size, m, patch_size, m, patch_size, c))
    x = ops.permute(x, (0, 1, 3, 5, 2, 4, 6, 7))
    return ops.reshape(x, (n, m ** 3, patch_size ** 3 * c))


def tokenize(r_f, patch_size: int, projection, positions) -> TokenSequence:
    """T = [r_1 E; ...; r_n E] + E_pos"""
    grid = r_f.grid if isinstance(r_f, FilteredRepresentation) else as_tensor(r_f)
    patches = patchify(grid, patch_size)
    return TokenSequence(tokens=ops.matmul(patches, projection) + positions, patch_size=patch_size)


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads:
            raise ValueError(f"Token dim {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)

    def _split(self, x: Tensor) -> Tensor:
        n, t, _ = x.shape
        return ops.permute(ops.reshape(x, (n, t, self.heads, self.head_dim)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = ops.scale(ops.matmul(q, ops.permute(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.head_dim))
        attended = ops.matmul(F.softmax(scores), v)
        merged = ops.reshape(ops.permute(attended, (0, 2, 1, 3)), (n, t, d))
        return self.out(merged)


class TransformerBlock(Module):
    """Pre-norm: x + MHSA(LN(x)), then x + MLP(LN(x))"""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, dim * mlp_ratio, rng)
        self.fc2 = Linear(dim * mlp_ratio, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(ops.leaky_relu(self.fc1(self.norm2(x))))


class TransformerBranch(Module):
    def __init__(self, resolution: int, channels: int, patch_size: int, token_dim: int,
                 latent_dim: int, rng: np.random.Generator, heads: int = 4, depth: int = 2, mlp_ratio: int = 2):
        super().__init__()
        if resolution % patch_size:
            raise ValueError(f"Resolution {resolution} is not divisible by patch size {patch_size}")
        self.patch_size = patch_size
        patch_dim = patch_size ** 3 * channels
        n_tokens = (resolution // patch_size) ** 3
        self.projection = Parameter(gaussian_init(rng, (patch_dim, token_dim), patch_dim))
        self.positions = Parameter(gaussian_init(rng, (n_tokens, token_dim), token_dim))
        self.blocks = ModuleList([TransformerBlock(token_dim, heads, mlp_ratio, rng) for _ in range(depth)])
        self.norm = LayerNorm(token_dim)
        self.head = Linear(token_dim, latent_dim, rng)

    def tokenize(self, r_f) -> TokenSequence:
        return tokenize(r_f, self.patch_size, self.projection, self.positions)

    def encode_tokens(self, tokens: TokenSequence) -> Tensor:
        x = tokens.tokens
        for block in self.blocks:
            x = block(x)
        return self.head(ops.mean(self.norm(x), axis=1))

    def forward(self, r_f) -> Tensor:
        return self.encode_tokens(self.tokenize(r_f))


class ResidualBlock3d(Module):
    """Stride-2 residual block: conv3-leaky-conv3 main path, 1x1x1 strided skip"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv1 = Conv3d(in_channels, out_channels, 3, rng, stride=2, padding=1)
        self.conv2 = Conv3d(out_channels, out_channels, 3, rng, stride=1, padding=1)
        self.skip = Conv3d(in_channels, out_channels, 1, rng, stride=2)

    def forward(self, x: Tensor) -> Tensor:
        main = self.conv2(ops.leaky_relu(self.conv1(x)))
        return ops.leaky_relu(main + self.skip(x))


class CNNBranch(Module):
    def __init__(self, channels: int, latent_dim: int, rng: np.random.Generator, widths=(16, 32, 64)):
        super().__init__()
        blocks = []
        in_width = channels
        for width in widths:
            blocks.append(ResidualBlock3d(in_width, width, rng))
            in_width = width
        self.blocks = ModuleList(blocks)
        self.head = Linear(in_width, latent_dim, rng)

    def features(self, r_f) -> Tensor:
        """Channels-first feature map before pooling"""
        grid = r_f.grid if isinstance(r_f, FilteredRepresentation) else as_tensor(r_f)
        x = ops.permute(grid, (0, 4, 1, 2, 3))
        for block in self.blocks:
            x = block(x)
        return x

    def forward(self, r_f) -> Tensor:
        return self.head(ops.mean(self.features(r_f), axis=(2, 3, 4)))


class Fusion(Module):
    def __init__(self, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = Linear(2 * latent_dim, 2 * latent_dim, rng)
        self.out = Linear(2 * latent_dim, latent_dim, rng)

    def forward(self, z_T: Tensor, z_C: Tensor) -> Tensor:
        return self.out(ops.leaky_relu(self.hidden(ops.concat([z_T, z_C], axis=1))))


class InversionEncoder(Module):
    """
    z* = E(r). A dropped branch is replaced by a copy of the surviving
    branch's embedding, so the fusion MLP keeps its shape.
    """

    def __init__(self, resolution: int, channels: int, latent_dim: int, rng: np.random.Generator,
                 patch_size: int = 4, token_dim: int = 64, heads: int = 4,
                 mode: EncoderMode = EncoderMode.FULL, gate_sharpness: float = 25.0, rho_init: float = 0.5):
        super().__init__()
        if rho_init <= 0:
            raise ValueError(f"rho_init must be positive, got {rho_init}")
        self.mode = mode
        self.gate_sharpness = gate_sharpness
        self.rho_raw = Parameter(np.array(inverse_softplus(rho_init)))
        if mode != EncoderMode.NO_TRANSFORMER:
            self.transformer = TransformerBranch(resolution, channels, patch_size, token_dim,
                                                 latent_dim, rng, heads=heads)
        if mode != EncoderMode.NO_CNN:
            self.cnn = CNNBranch(channels, latent_dim, rng)
        self.fusion = Fusion(latent_dim, rng)
        self.assign_names("encoder.")

    @property
    def rho(self) -> Tensor:
        return ops.softplus(self.rho_raw)

    def filter(self, r, hard: bool = False) -> FilteredRepresentation:
        return filter_input(activate_field(r), self.rho, self.gate_sharpness, hard=hard)

    def encode(self, r, hard_filter: bool = False) -> EncoderOutput:
        r_f = self.filter(r, hard=hard_filter)
        z_T = self.transformer(r_f) if self.mode != EncoderMode.NO_TRANSFORMER else None
        z_C = self.cnn(r_f) if self.mode != EncoderMode.NO_CNN else None
        left = z_T if z_T is not None else z_C
        right = z_C if z_C is not None else z_T
        return EncoderOutput(z_star=self.fusion(left, right), z_T=z_T, z_C=z_C)

    def forward(self, r) -> Tensor:
        return self.encode(r).z_star


def encode(encoder: InversionEncoder, r) -> EncoderOutput:
    return encoder.encode(r)
