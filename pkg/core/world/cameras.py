from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np


MAX_ELEVATION = np.pi / 3.0
VOLUME_CENTER = np.array([0.5, 0.5, 0.5])
# the image plane covers the sphere circumscribing the unit cube
PLANE_HALF_WIDTH = np.sqrt(3.0) / 2.0
RAY_LENGTH = np.sqrt(3.0)

_POSE_STREAM = 7919


@dataclass(frozen=True)
class CameraPose:
    """Orthographic camera looking at the volume centre from (azimuth, elevation)"""
    azimuth: float
    elevation: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 2.0 * np.pi:
            raise ValueError(f"Azimuth must lie in [0, 2pi), got {self.azimuth}")
        if abs(self.elevation) > MAX_ELEVATION + 1e-12:
            raise ValueError(f"Elevation must lie in [-pi/3, pi/3], got {self.elevation}")

    @property
    def eye_direction(self) -> np.ndarray:
        """Unit vector from the volume centre toward the camera"""
        ce = np.cos(self.elevation)
        return np.array([ce * np.cos(self.azimuth), ce * np.sin(self.azimuth), np.sin(self.elevation)])

    @property
    def view_direction(self) -> np.ndarray:
        """Unit direction the rays travel"""
        return -self.eye_direction

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, eye) orthonormal frame of the image plane"""
        eye = self.eye_direction
        right = np.cross(np.array([0.0, 0.0, 1.0]), eye)
        right /= np.linalg.norm(right)
        up = np.cross(eye, right)
        return right, up, eye

    def to_dict(self) -> Dict[str, Any]:
        return {"azimuth": float(self.azimuth), "elevation": float(self.elevation)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CameraPose":
        return cls(azimuth=float(data["azimuth"]), elevation=float(data["elevation"]))


def sample_pose(seed: int) -> CameraPose:
    """Uniform azimuth in [0, 2pi) and elevation in [-pi/3, pi/3], deterministic per seed"""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _POSE_STREAM]))
    azimuth = rng.uniform(0.0, 2.0 * np.pi)
    elevation = rng.uniform(-MAX_ELEVATION, MAX_ELEVATION)
    return CameraPose(azimuth=float(azimuth), elevation=float(elevation))


def orbit_poses(count: int, elevation: float = 0.3) -> List[CameraPose]:
    """`count` evenly spaced azimuths at a fixed elevation"""
    if count < 1:
        raise ValueError(f"Need at least one pose, got {count}")
    return [CameraPose(azimuth=2.0 * np.pi * i / count, elevation=elevation) for i in range(count)]


def ray_samples(pose: CameraPose, height: int, width: int, samples_per_ray: int) -> np.ndarray:
    """
    Sample positions (H, W, K, 3) along the orthographic rays of `pose`.

    Row 0 is the top of the image. Rays start on the plane tangent to the
    circumscribed sphere and sample i sits at distance (i + 0.5) * delta.
    """
    right, up, eye = pose.basis()
    u = (-1.0 + (np.arange(width) + 0.5) * 2.0 / width) * PLANE_HALF_WIDTH
    v = (1.0 - (np.arange(height) + 0.5) * 2.0 / height) * PLANE_HALF_WIDTH
    origins = (VOLUME_CENTER + PLANE_HALF_WIDTH * eye
               + v[:, None, None] * up + u[None, :, None] * right)  # (H, W, 3)
    delta = RAY_LENGTH / samples_per_ray
    t = (np.arange(samples_per_ray) + 0.5) * delta
    return origins[:, :, None, :] - t[None, None, :, None] * eye
