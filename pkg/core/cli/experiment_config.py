import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

from ..errors import ConfigError, reject_unknown_keys, reject_wrong_types
from ..training.config import TrainConfig
from ..world.dataset import DatasetConfig


HASH_LENGTH = 16


@dataclass
class MetricsConfig:
    """Sizes and seeds of the evaluation suites"""
    image_encoder_steps: int = 2000
    classifier_steps: int = 1500
    iou_test_count: int = 100
    ds_B: int = 200
    probe_scales: List[float] = field(default_factory=lambda: [0.01, 0.05, 0.1])
    probe_points: int = 4
    probe_perturbations: int = 100
    validity_threshold: float = 0.5
    interpolation_steps: int = 16
    inversion_samples: int = 64
    frechet_samples: int = 64
    seed: int = 0

    def validate(self) -> List[str]:
        problems = []
        for name in ("image_encoder_steps", "classifier_steps", "iou_test_count", "ds_B", "probe_points",
                     "probe_perturbations", "interpolation_steps", "inversion_samples"):
            if getattr(self, name) < 1:
                problems.append(f"metrics.{name} must be positive, got {getattr(self, name)}")
        if self.frechet_samples < 32:
            problems.append(f"metrics.frechet_samples must be at least 32, got {self.frechet_samples}")
        if not self.probe_scales or any(s < 0 for s in self.probe_scales):
            problems.append(f"metrics.probe_scales must be non-empty and >= 0, got {self.probe_scales}")
        if not 0.0 <= self.validity_threshold <= 1.0:
            problems.append(f"metrics.validity_threshold must lie in [0, 1], got {self.validity_threshold}")
        return problems

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["probe_scales"] = [float(s) for s in self.probe_scales]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsConfig":
        reject_wrong_types(cls, data, "metrics")
        reject_unknown_keys(cls, data, "metrics")
        data = dict(data)
        if "probe_scales" in data:
            data["probe_scales"] = [float(s) for s in data["probe_scales"]]
        return cls(**data)


@dataclass
class ExperimentConfig:
    """One JSON document: train, dataset and metrics sections plus run plumbing"""
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output_dir: str = "runs/default"
    seeds: List[int] = field(default_factory=lambda: [0])

    def validate(self) -> List[str]:
        problems = self.train.validate() + self.dataset.validate() + self.metrics.validate()
        if not self.seeds:
            problems.append("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append(f"seeds must be distinct, got {self.seeds}")
        return problems

    def check(self) -> "ExperimentConfig":
        problems = self.validate()
        if problems:
            raise ConfigError(problems)
        return self

    def semantic_dict(self) -> Dict[str, Any]:
        """Everything that changes results (output_dir excluded)"""
        return {
            "train": self.train.to_dict(),
            "dataset": self.dataset.to_dict(),
            "metrics": self.metrics.to_dict(),
            "seeds": [int(s) for s in self.seeds],
        }

    def to_dict(self) -> Dict[str, Any]:
        data = self.semantic_dict()
        data["output_dir"] = self.output_dir
        return data

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_LENGTH]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError([f"config must be a JSON object, got {type(data).__name__}"])
        reject_wrong_types(cls, data, "config")
        reject_unknown_keys(cls, data, "config")
        try:
            return cls(
                train=TrainConfig.from_dict(data.get("train", {})),
                dataset=DatasetConfig.from_dict(data.get("dataset", {})),
                metrics=MetricsConfig.from_dict(data.get("metrics", {})),
                output_dir=str(data.get("output_dir", "runs/default")),
                seeds=[int(s) for s in data.get("seeds", [0])],
            )
        except TypeError as exc:
            raise ConfigError([f"config: {exc}"]) from None

    def with_train(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, train=dataclasses.replace(self.train, **changes))


def load_experiment(path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return ExperimentConfig.from_dict(data).check()
