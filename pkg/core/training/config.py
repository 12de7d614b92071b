from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Tuple

from ..encoder.inversion_encoder import EncoderMode
from ..errors import ConfigError, reject_unknown_keys, reject_wrong_types


class SSLMode(Enum):
    """Auxiliary term added to the generator loss"""
    CGC = "cgc"
    NONE = "none"
    LAPLACIAN = "laplacian"
    LOCAL_SEARCH = "local_search"


@dataclass
class LossWeights:
    lambda_R: float = 1.0      # weight of the auxiliary term in L_G
    lambda_lap: float = 1.0    # weight of the Laplacian alternative
    sigma_ls: float = 0.05     # local-search latent noise

    def validate(self) -> List[str]:
        problems = [f"loss_weights.{f.name} must be >= 0, got {getattr(self, f.name)}"
                    for f in fields(self) if getattr(self, f.name) < 0]
        if self.sigma_ls == 0:
            problems.append("loss_weights.sigma_ls must be positive, got 0")
        return problems

    def to_dict(self) -> Dict[str, Any]:
        return {"lambda_R": self.lambda_R, "lambda_lap": self.lambda_lap, "sigma_ls": self.sigma_ls}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossWeights":
        reject_wrong_types(cls, data, "train.loss_weights")
        reject_unknown_keys(cls, data, "train.loss_weights")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass
class TrainConfig:
    """Everything that determines a training run"""
    # architecture
    resolution: int = 16            # S
    latent_dim: int = 32            # C_z
    channels: int = 4               # C_r
    patch_size: int = 4             # p_tok
    token_dim: int = 64             # D_tok
    image_size: int = 32
    num_classes: int = 4            # 0 disables label conditioning
    encoder_mode: EncoderMode = EncoderMode.FULL

    # schedule
    batch_size: int = 8
    warmup_steps: int = 500
    total_steps: int = 4000
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    lr_e: float = 1e-3
    adam_betas: Tuple[float, float] = (0.0, 0.99)    # G and D
    encoder_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    # objectives
    ssl_mode: SSLMode = SSLMode.CGC
    cycle_depth: int = 1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    r1_gamma: float = 1.0
    r1_every: int = 16              # 0 disables R1

    # rendering and geometry
    samples_per_ray: int = 32
    sigma_max: float = 50.0
    density_threshold: float = 2.0  # tau
    gate_sharpness: float = 25.0
    rho_init: float = 0.5

    # bookkeeping
    precision: str = "float64"
    checkpoint_every: int = 500
    log_every: int = 50
    log_wall_time: bool = False

    def validate(self) -> List[str]:
        """Field diagnostics; empty when the config is usable"""
        problems = []
        for name in ("resolution", "latent_dim", "channels", "patch_size", "token_dim", "image_size",
                     "batch_size", "total_steps", "samples_per_ray", "checkpoint_every", "log_every"):
            if getattr(self, name) <= 0:
                problems.append(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.channels < 4:
            problems.append(f"train.channels must be >= 4 (density + RGB), got {self.channels}")
        if self.warmup_steps < 0 or self.warmup_steps >= self.total_steps:
            problems.append(f"train.warmup_steps must be in [0, total_steps), got {self.warmup_steps}")
        if self.resolution > 0 and self.patch_size > 0 and self.resolution % self.patch_size:
            problems.append(f"train.resolution {self.resolution} is not divisible by patch_size {self.patch_size}")
        if self.resolution < 8 or self.resolution & (self.resolution - 1):
            problems.append(f"train.resolution must be a power of two >= 8, got {self.resolution}")
        if self.image_size % 8:
            problems.append(f"train.image_size must be divisible by 8, got {self.image_size}")
        if self.token_dim % 4:
            problems.append(f"train.token_dim must be divisible by 4 attention heads, got {self.token_dim}")
        if self.cycle_depth not in (1, 2):
            problems.append(f"train.cycle_depth must be 1 or 2, got {self.cycle_depth}")
        if self.num_classes < 0:
            problems.append(f"train.num_classes must be >= 0, got {self.num_classes}")
        if self.precision not in ("float64", "float32"):
            problems.append(f"train.precision must be float64 or float32, got {self.precision}")
        for name in ("lr_g", "lr_d", "lr_e", "adam_eps", "sigma_max", "density_threshold", "rho_init"):
            if getattr(self, name) <= 0:
                problems.append(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.r1_gamma < 0 or self.r1_every < 0:
            problems.append("train.r1_gamma and train.r1_every must be >= 0")
        for name in ("adam_betas", "encoder_betas"):
            betas = getattr(self, name)
            if len(betas) != 2 or not all(0.0 <= b < 1.0 for b in betas):
                problems.append(f"train.{name} must be two values in [0, 1), got {betas}")
        problems.extend("train." + p for p in self.loss_weights.validate())
        return problems

    def check(self) -> "TrainConfig":
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, LossWeights):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            data[f.name] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        reject_wrong_types(cls, data, "train")
        reject_unknown_keys(cls, data, "train")
        data = dict(data)
        try:
            if "encoder_mode" in data:
                data["encoder_mode"] = EncoderMode(data["encoder_mode"])
            if "ssl_mode" in data:
                data["ssl_mode"] = SSLMode(data["ssl_mode"])
        except ValueError as exc:
            raise ConfigError([f"train: {exc}"]) from None
        if "loss_weights" in data:
            data["loss_weights"] = LossWeights.from_dict(data["loss_weights"])
        for name in ("adam_betas", "encoder_betas"):
            if name in data:
                data[name] = tuple(float(b) for b in data[name])
        return cls(**data)
