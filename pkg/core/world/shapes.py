from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np


DEFAULT_SIGMA_MAX = 50.0
CENTER_MARGIN = 0.05


class ShapeCategory(Enum):
    """Analytic shape families; the enum order is the class label"""
    SPHERE = "sphere"
    BOX = "box"
    ELLIPSOID = "ellipsoid"
    TORUS = "torus"

    @property
    def label(self) -> int:
        return list(ShapeCategory).index(self)

    @classmethod
    def from_label(cls, label: int) -> "ShapeCategory":
        members = list(cls)
        if not 0 <= label < len(members):
            raise ValueError(f"Unknown category label: {label}")
        return members[label]

    @classmethod
    def parse(cls, name: str) -> "ShapeCategory":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"Unknown shape category: {name}") from None


CATEGORY_COLORS: Dict[ShapeCategory, Tuple[float, float, float]] = {
    ShapeCategory.SPHERE: (0.85, 0.30, 0.30),
    ShapeCategory.BOX: (0.30, 0.75, 0.35),
    ShapeCategory.ELLIPSOID: (0.30, 0.45, 0.85),
    ShapeCategory.TORUS: (0.90, 0.80, 0.25),
}

SIZE_RANGE = (0.1, 0.3)
TUBE_RATIO_RANGE = (0.2, 0.5)


@dataclass
class ShapeSpec:
    """
    One procedural shape inside the unit cube.

    `params` holds the per-category sizes:
    - SPHERE: radius
    - BOX: half_x, half_y, half_z
    - ELLIPSOID: radius_x, radius_y, radius_z
    - TORUS: outer_radius, tube_ratio (axis along z)
    """
    category: ShapeCategory
    center: Tuple[float, float, float]
    params: Dict[str, float] = field(default_factory=dict)
    seed: int = 0

    @property
    def half_extents(self) -> np.ndarray:
        """Axis-aligned bounding half-widths around the center"""
        p = self.params
        if self.category == ShapeCategory.SPHERE:
            return np.full(3, p["radius"])
        if self.category == ShapeCategory.BOX:
            return np.array([p["half_x"], p["half_y"], p["half_z"]])
        if self.category == ShapeCategory.ELLIPSOID:
            return np.array([p["radius_x"], p["radius_y"], p["radius_z"]])
        major, minor = self.torus_radii
        return np.array([p["outer_radius"], p["outer_radius"], minor])

    @property
    def torus_radii(self) -> Tuple[float, float]:
        """(major radius R, tube radius t * R) with R = outer / (1 + t)"""
        outer = self.params["outer_radius"]
        ratio = self.params["tube_ratio"]
        major = outer / (1.0 + ratio)
        return major, ratio * major

    @property
    def anchor(self) -> np.ndarray:
        """A point guaranteed to lie inside the shape"""
        center = np.asarray(self.center, dtype=np.float64)
        if self.category == ShapeCategory.TORUS:
            major, _ = self.torus_radii
            return center + np.array([major, 0.0, 0.0])
        return center

    def to_dict(self) -> Dict[str, Any]:
        return {
            "category": self.category.value,
            "center": [float(c) for c in self.center],
            "params": {k: float(v) for k, v in self.params.items()},
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ShapeSpec":
        return cls(
            category=ShapeCategory(data["category"]),
            center=tuple(data["center"]),
            params=dict(data["params"]),
            seed=int(data.get("seed", 0)),
        )


def sample_shape(category: ShapeCategory, seed: int) -> ShapeSpec:
    """Draw a shape of `category`; the stream is keyed by (seed, category label)"""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), category.label]))
    low, high = SIZE_RANGE

    if category == ShapeCategory.SPHERE:
        params = {"radius": rng.uniform(low, high)}
    elif category == ShapeCategory.BOX:
        hx, hy, hz = rng.uniform(low, high, size=3)
        params = {"half_x": hx, "half_y": hy, "half_z": hz}
    elif category == ShapeCategory.ELLIPSOID:
        rx, ry, rz = rng.uniform(low, high, size=3)
        params = {"radius_x": rx, "radius_y": ry, "radius_z": rz}
    elif category == ShapeCategory.TORUS:
        params = {
            "outer_radius": rng.uniform(low, high),
            "tube_ratio": rng.uniform(*TUBE_RATIO_RANGE),
        }
    else:
        raise ValueError(f"Unknown shape category: {category}")

    spec = ShapeSpec(category=category, center=(0.5, 0.5, 0.5),
                     params={k: float(v) for k, v in params.items()}, seed=int(seed))
    ext = spec.half_extents
    raw_center = rng.uniform(0.3, 0.7, size=3)
    center = np.clip(raw_center, ext + CENTER_MARGIN, 1.0 - ext - CENTER_MARGIN)
    spec.center = tuple(float(c) for c in center)
    return spec


def signed_distance(spec: ShapeSpec, points: np.ndarray) -> np.ndarray:
    """Signed distance (negative inside) for points of shape (..., 3)"""
    q = np.asarray(points, dtype=np.float64) - np.asarray(spec.center)
    category = spec.category

    if category == ShapeCategory.SPHERE:
        return np.linalg.norm(q, axis=-1) - spec.params["radius"]

    if category == ShapeCategory.BOX:
        d = np.abs(q) - spec.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        return outside + inside

    if category == ShapeCategory.ELLIPSOID:
        radii = spec.half_extents
        k0 = np.linalg.norm(q / radii, axis=-1)
        k1 = np.linalg.norm(q / radii ** 2, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = k0 * (k0 - 1.0) / k1
        # the bound is 0/0 at the exact center
        return np.where(k1 > 0, bound, -radii.min())

    if category == ShapeCategory.TORUS:
        major, minor = spec.torus_radii
        ring = np.sqrt(q[..., 0] ** 2 + q[..., 1] ** 2) - major
        return np.sqrt(ring ** 2 + q[..., 2] ** 2) - minor

    raise ValueError(f"Unknown shape category: {category}")


def analytic_density(spec: ShapeSpec, points: np.ndarray, resolution: int = 16,
                     sigma_max: float = DEFAULT_SIGMA_MAX) -> np.ndarray:
    """
    Density sigma_max inside, 0 outside, linear across a surface band of width
    1/resolution centred on the surface. Accepts one point or an (..., 3) array.
    """
    d = signed_distance(spec, points)
    return sigma_max * np.clip(0.5 - d * resolution, 0.0, 1.0)


def voxel_centers(resolution: int) -> np.ndarray:
    """(S, S, S, 3) centres; voxel (i, j, k) sits at ((i + .5) / S, (j + .5) / S, (k + .5) / S)"""
    axis = (np.arange(resolution) + 0.5) / resolution
    return np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)


@dataclass(eq=False)
class OccupancyGrid:
    """Binary S^3 geometry, indexed [x, y, z]"""
    size: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.size,) * 3:
            raise ValueError(f"Occupancy bits shape {self.bits.shape} does not match size {self.size}")

    @classmethod
    def empty(cls, size: int) -> "OccupancyGrid":
        return cls(size=size, bits=np.zeros((size,) * 3, dtype=bool))

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def equals(self, other: "OccupancyGrid") -> bool:
        return self.size == other.size and bool(np.array_equal(self.bits, other.bits))


def voxelize(spec: ShapeSpec, resolution: int, sigma_max: float = DEFAULT_SIGMA_MAX) -> OccupancyGrid:
    """
    Occupied iff the density at the voxel centre exceeds sigma_max / 2.

    Shapes too thin to cover any centre get the voxel holding their anchor
    point, so a sampled shape never voxelizes to an empty grid.
    """
    if resolution < 2:
        raise ValueError(f"Voxel resolution must be at least 2, got {resolution}")
    density = analytic_density(spec, voxel_centers(resolution), resolution, sigma_max)
    bits = density > sigma_max / 2.0
    if not bits.any():
        index = np.clip(np.floor(spec.anchor * resolution).astype(int), 0, resolution - 1)
        bits[tuple(index)] = True
    return OccupancyGrid(size=resolution, bits=bits)


def density_grid(spec: ShapeSpec, resolution: int, sigma_max: float = DEFAULT_SIGMA_MAX) -> np.ndarray:
    """Analytic density sampled at voxel centres, shape (S, S, S)"""
    return analytic_density(spec, voxel_centers(resolution), resolution, sigma_max)
