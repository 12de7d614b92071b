"""
Finite-difference verification of every differentiable op and of three
composed pipelines: z -> G -> render -> L1, r -> E -> L1, and the full
G -> E -> G cycle loss.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..autodiff import functional as F
from ..autodiff import ops
from ..autodiff.gradcheck import grad_check
from ..autodiff.tensor import Tensor
from ..encoder.inversion_encoder import InversionEncoder, MultiHeadSelfAttention, filter_input
from ..gan.generator import Generator
from ..render.volume_renderer import RenderSettings, composite, render_representation
from ..runtime import use_precision
from ..training.cycle import loss_R
from ..world.cameras import sample_pose


logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
FD_STEP = 1e-3
SEEDS = (0, 1, 2, 3, 4)


@dataclass
class GradCheckCase:
    name: str
    op: str
    fn: Callable[[Tensor], Tensor]
    point: np.ndarray
    max_elements: Optional[int] = 24


@dataclass
class GradCheckResult:
    name: str
    op: str
    error: float
    passed: bool
    worst_seed: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {"name": self.name, "op": self.op, "max_relative_error": self.error,
                "worst_seed": self.worst_seed, "passed": self.passed}


class RandomProjection:
    """sum(t * w) with a fixed random w per output shape, so every output element matters"""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.weights: Dict[tuple, np.ndarray] = {}

    def __call__(self, t: Tensor) -> Tensor:
        if t.shape not in self.weights:
            self.weights[t.shape] = self.rng.standard_normal(t.shape)
        return ops.sum_(t * Tensor(self.weights[t.shape]))


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.2, 1.0, size=shape)


def op_cases(seed: int = 0) -> List[GradCheckCase]:
    rng = np.random.default_rng(seed)
    project = RandomProjection(seed + 1)
    normal = rng.standard_normal
    positive = lambda *shape: rng.uniform(0.5, 2.0, size=shape)

    b_row = normal(4)
    left = normal((3, 4))
    denominator = positive(4)
    mat = normal((4, 5))
    batch_left = normal((2, 3, 4))
    const = normal((3, 2))
    w2 = normal((4, 2, 3, 3))
    x2 = normal((1, 2, 6, 6))
    w3 = normal((3, 2, 3, 3, 3))
    x3 = normal((1, 2, 4, 4, 4))
    wt = normal((2, 3, 4, 4, 4))
    xt = normal((1, 2, 2, 2, 2))
    plan = F.build_trilinear_plan(rng.uniform(-0.1, 1.1, size=(1, 20, 3)), (3, 3, 3))
    settings = RenderSettings(height=2, width=2, samples_per_ray=6)
    color = rng.uniform(0.1, 0.9, size=(2, 6, 3))
    sigma = rng.uniform(0.0, 3.0, size=(2, 6))

    field = normal((1, 3, 3, 3, 4))
    field[..., 0] = rng.uniform(0.3, 0.7, size=(1, 3, 3, 3))
    attention = MultiHeadSelfAttention(8, 2, np.random.default_rng(seed + 2))

    return [
        GradCheckCase("add", "add", lambda x: project(x + Tensor(b_row)), normal((3, 4))),
        GradCheckCase("add_broadcast", "add", lambda x: project(Tensor(left) + x), normal(4)),
        GradCheckCase("subtract", "subtract", lambda x: project(Tensor(b_row) - x), normal((3, 4))),
        GradCheckCase("multiply", "multiply", lambda x: project(x * Tensor(b_row)), normal((3, 4))),
        GradCheckCase("divide_numerator", "divide", lambda x: project(x / Tensor(denominator)), normal((3, 4))),
        GradCheckCase("divide_denominator", "divide", lambda x: project(Tensor(b_row) / x), positive(3, 4)),
        GradCheckCase("scale", "scale", lambda x: project(ops.scale(x, -2.5)), normal((3, 4))),
        GradCheckCase("matmul_left", "matmul", lambda x: project(ops.matmul(x, Tensor(mat))), normal((3, 4))),
        GradCheckCase("matmul_batched", "matmul",
                      lambda x: project(ops.matmul(Tensor(batch_left), x)), normal((2, 4, 3))),
        GradCheckCase("leaky_relu", "leaky_relu", lambda x: project(ops.leaky_relu(x)), _away_from_zero(rng, (3, 4))),
        GradCheckCase("softplus", "softplus", lambda x: project(ops.softplus(x)), normal((3, 4)) * 3),
        GradCheckCase("sigmoid", "sigmoid", lambda x: project(ops.sigmoid(x)), normal((3, 4)) * 3),
        GradCheckCase("exp", "exp", lambda x: project(ops.exp(x)), normal((3, 4))),
        GradCheckCase("log", "log", lambda x: project(ops.log(x)), positive(3, 4)),
        GradCheckCase("abs", "abs", lambda x: project(ops.abs_(x)), _away_from_zero(rng, (3, 4))),
        GradCheckCase("square", "square", lambda x: project(ops.square(x)), normal((3, 4))),
        GradCheckCase("sum", "sum", lambda x: project(ops.sum_(x, axis=1)), normal((3, 4, 2))),
        GradCheckCase("mean", "mean", lambda x: project(ops.mean(x, axis=(0, 2), keepdims=True)), normal((3, 4, 2))),
        GradCheckCase("max", "max", lambda x: project(ops.max_(x, axis=(1, 2))),
                      rng.permutation(24).reshape(3, 4, 2) * 0.1 + rng.uniform(0.0, 0.01, size=(3, 4, 2))),
        GradCheckCase("cumsum", "cumsum", lambda x: project(ops.cumsum(x, axis=-1)), normal((3, 5))),
        GradCheckCase("cumsum_exclusive", "cumsum",
                      lambda x: project(ops.cumsum(x, axis=1, exclusive=True)), normal((3, 5, 2))),
        GradCheckCase("reshape", "reshape", lambda x: project(ops.reshape(x, (4, 6))), normal((2, 3, 4))),
        GradCheckCase("permute", "permute", lambda x: project(ops.permute(x, (2, 0, 1))), normal((2, 3, 4))),
        GradCheckCase("slice", "slice", lambda x: project(x[1:, ::2]), normal((3, 4))),
        GradCheckCase("concat", "concat", lambda x: project(ops.concat([x, Tensor(const)], axis=1)), normal((3, 4))),
        GradCheckCase("stack", "stack", lambda x: project(ops.stack([x, x * 2.0], axis=0)), normal((3, 4))),
        GradCheckCase("conv2d_input", "conv2d",
                      lambda x: project(F.conv2d(x, Tensor(w2), stride=2, padding=1)), x2),
        GradCheckCase("conv2d_weight", "conv2d",
                      lambda w: project(F.conv2d(Tensor(x2), w, stride=2, padding=1)), w2),
        GradCheckCase("conv3d_input", "conv3d",
                      lambda x: project(F.conv3d(x, Tensor(w3), stride=2, padding=1)), x3),
        GradCheckCase("conv3d_weight", "conv3d",
                      lambda w: project(F.conv3d(Tensor(x3), w, stride=1, padding=1)), w3),
        GradCheckCase("conv_transpose3d_input", "conv_transpose3d",
                      lambda x: project(F.conv_transpose3d(x, Tensor(wt), stride=2, padding=1)), xt),
        GradCheckCase("conv_transpose3d_weight", "conv_transpose3d",
                      lambda w: project(F.conv_transpose3d(Tensor(xt), w, stride=2, padding=1)), wt),
        GradCheckCase("layer_norm", "layer_norm", lambda x: project(F.layer_norm(x)), normal((3, 6))),
        GradCheckCase("softmax", "softmax", lambda x: project(F.softmax(x)), normal((3, 5))),
        GradCheckCase("log_softmax", "log_softmax", lambda x: project(F.log_softmax(x)), normal((3, 5))),
        GradCheckCase("grid_sample_trilinear", "grid_sample",
                      lambda g: project(F.grid_sample_trilinear(g, plan)), normal((1, 3, 3, 3, 2))),
        GradCheckCase("composite_density", "composite",
                      lambda s: project(composite(s, Tensor(color), settings)), sigma),
        GradCheckCase("composite_color", "composite",
                      lambda c: project(composite(Tensor(sigma), c, settings)), color),
        GradCheckCase("density_filter", "filter",
                      lambda f: project(filter_input(f, 0.5, gate_sharpness=5.0).grid), field),
        GradCheckCase("self_attention", "attention", lambda x: project(attention(x)), normal((1, 4, 8))),
    ]


def pipeline_cases(seed: int = 0) -> List[GradCheckCase]:
    """Tiny G and E at S=8 with 8x8 renders"""
    rng = np.random.default_rng(seed)
    generator = Generator(4, 8, 4, np.random.default_rng(seed + 10))
    encoder = InversionEncoder(8, 4, 4, np.random.default_rng(seed + 11), patch_size=4, token_dim=8,
                               heads=2, gate_sharpness=5.0)
    settings = RenderSettings(height=8, width=8, samples_per_ray=8)
    poses = [sample_pose(seed)]
    target_image = Tensor(rng.uniform(0.0, 1.0, size=(1, 8, 8, 3)))
    target_z = Tensor(rng.standard_normal((1, 4)))
    r_point = rng.standard_normal((1, 8, 8, 8, 4))

    def render_l1(z):
        image = render_representation(generator(z), poses, settings).rgb
        return ops.mean(ops.abs_(image - target_image))

    def encoder_l1(r):
        return ops.mean(ops.abs_(encoder(r) - target_z))

    def cycle(z):
        r = generator(z)
        return loss_R(r, generator(encoder(r)))

    return [
        GradCheckCase("pipeline_render_l1", "pipeline", render_l1, rng.standard_normal((1, 4)), None),
        GradCheckCase("pipeline_encoder_l1", "pipeline", encoder_l1, r_point, 16),
        GradCheckCase("pipeline_cycle", "pipeline", cycle, rng.standard_normal((1, 4)), None),
    ]


def known_ops(seed: int = 0) -> List[str]:
    return sorted({case.op for case in op_cases(seed) + pipeline_cases(seed)})


def run_battery(only: Optional[Sequence[str]] = None, tolerance: float = TOLERANCE,
                seeds: Sequence[int] = SEEDS) -> List[GradCheckResult]:
    """
    Check every case (or only those whose op is in `only`) in double precision,
    once per seed. Each result reports the worst error over the seeds.
    """
    use_precision("float64")
    if only:
        unknown = sorted(set(only) - set(known_ops()))
        if unknown:
            raise ValueError(f"Unknown op(s) {unknown}; choose from {known_ops()}")

    worst: Dict[str, GradCheckResult] = {}
    for seed in seeds:
        cases = op_cases(seed) + pipeline_cases(seed)
        if only:
            cases = [case for case in cases if case.op in set(only)]
        for case in cases:
            error = grad_check(case.fn, case.point, step=FD_STEP, max_elements=case.max_elements, seed=seed)
            logger.debug(f"{case.name} (seed {seed}): max relative error {error:.3e}")
            previous = worst.get(case.name)
            if previous is None or error > previous.error:
                worst[case.name] = GradCheckResult(name=case.name, op=case.op, error=error,
                                                   passed=error <= tolerance, worst_seed=seed)

    results = list(worst.values())
    for result in results:
        if not result.passed:
            logger.warning(f"Gradient check failed for {result.name} (seed {result.worst_seed}): "
                           f"{result.error:.3e} > {tolerance:.0e}")
    return results
