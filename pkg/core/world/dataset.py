import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..errors import reject_unknown_keys, reject_wrong_types
from ..render.volume_renderer import RenderedImage, RenderSettings, render_analytic
from .cameras import CameraPose, sample_pose
from .formats import write_occupancy, write_pgm, write_ppm
from .shapes import DEFAULT_SIGMA_MAX, OccupancyGrid, ShapeCategory, ShapeSpec, sample_shape, voxelize


logger = logging.getLogger(__name__)


@dataclass
class DatasetConfig:
    """What the procedural dataset contains and how it is rendered"""
    categories: List[ShapeCategory] = field(default_factory=lambda: list(ShapeCategory))
    count: int = 1000
    resolution: int = 16
    image_size: int = 32
    samples_per_ray: int = 32
    sigma_max: float = DEFAULT_SIGMA_MAX
    seed: int = 0

    def validate(self) -> List[str]:
        problems = []
        if not self.categories:
            problems.append("dataset.categories must not be empty")
        if self.count < 1:
            problems.append(f"dataset.count must be positive, got {self.count}")
        if self.resolution < 2:
            problems.append(f"dataset.resolution must be at least 2, got {self.resolution}")
        if self.image_size < 1:
            problems.append(f"dataset.image_size must be positive, got {self.image_size}")
        if self.samples_per_ray < 2:
            problems.append(f"dataset.samples_per_ray must be at least 2, got {self.samples_per_ray}")
        if self.sigma_max <= 0:
            problems.append(f"dataset.sigma_max must be positive, got {self.sigma_max}")
        return problems

    @property
    def render_settings(self) -> RenderSettings:
        return RenderSettings(height=self.image_size, width=self.image_size,
                              samples_per_ray=self.samples_per_ray)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "categories": [c.value for c in self.categories],
            "count": self.count,
            "resolution": self.resolution,
            "image_size": self.image_size,
            "samples_per_ray": self.samples_per_ray,
            "sigma_max": self.sigma_max,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetConfig":
        reject_wrong_types(cls, data, "dataset")
        reject_unknown_keys(cls, data, "dataset")
        data = dict(data)
        if "categories" in data:
            data["categories"] = [ShapeCategory.parse(c) for c in data["categories"]]
        return cls(**data)


@dataclass
class DatasetSample:
    """One shape with its ground-truth occupancy, pose and reference render"""
    index: int
    seed: int
    spec: ShapeSpec
    occupancy: OccupancyGrid
    pose: CameraPose
    image: RenderedImage

    @property
    def label(self) -> int:
        return self.spec.category.label


def sample_seed(global_seed: int, index: int) -> int:
    """Per-sample seed derived from (global seed, index)"""
    state = np.random.SeedSequence([int(global_seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def sample_spec(config: DatasetConfig, index: int) -> Tuple[ShapeSpec, CameraPose, int]:
    """The (shape, pose, seed) at `index` without rendering anything"""
    seed = sample_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    category = config.categories[int(rng.integers(len(config.categories)))]
    return sample_shape(category, seed), sample_pose(seed), seed


def dataset_sample(config: DatasetConfig, index: int) -> DatasetSample:
    spec, pose, seed = sample_spec(config, index)
    occupancy = voxelize(spec, config.resolution, config.sigma_max)
    image = render_analytic([spec], [pose], config.render_settings, config.resolution, config.sigma_max)
    return DatasetSample(index=index, seed=seed, spec=spec, occupancy=occupancy, pose=pose, image=image)


def make_dataset(config: DatasetConfig, start: int = 0, stop: Optional[int] = None) -> Iterator[DatasetSample]:
    """Deterministic stream of samples `start` .. `stop` (defaults to config.count)"""
    stop = config.count if stop is None else stop
    for index in range(start, stop):
        yield dataset_sample(config, index)


def reference_batch(config: DatasetConfig, indices: Sequence[int],
                    settings: Optional[RenderSettings] = None) -> Tuple[RenderedImage, np.ndarray]:
    """Render the shapes at `indices` in one batch; returns (images, labels)"""
    specs, poses = [], []
    for index in indices:
        spec, pose, _ = sample_spec(config, index)
        specs.append(spec)
        poses.append(pose)
    images = render_analytic(specs, poses, settings or config.render_settings,
                             config.resolution, config.sigma_max)
    labels = np.array([spec.category.label for spec in specs], dtype=np.int64)
    return images, labels


def dump_dataset(config: DatasetConfig, out_dir, show_progress: bool = False) -> Path:
    """
    Write manifest.csv plus per-sample colour PPM, alpha PGM and .occ files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    logger.info(f"Dumping {config.count} samples to {out_dir}")
    with open(manifest_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["index", "category", "seed", "azimuth", "elevation"])
        samples = make_dataset(config)
        for sample in tqdm(samples, total=config.count, disable=not show_progress, desc="dataset"):
            stem = f"{sample.index:05d}"
            pixels = sample.image.numpy()[0]
            write_ppm(out_dir / f"{stem}.ppm", pixels[..., :3])
            write_pgm(out_dir / f"{stem}_alpha.pgm", pixels[..., 3])
            write_occupancy(out_dir / f"{stem}.occ", sample.occupancy)
            writer.writerow([sample.index, sample.spec.category.value, sample.seed,
                             f"{sample.pose.azimuth:.9g}", f"{sample.pose.elevation:.9g}"])
    return manifest_path
