"""
Synthetic World Submodule

This submodule supplies the procedural stand-in for real 3D datasets:
- Analytic shape families and their density fields
- Ground-truth occupancy voxelization
- Orthographic camera poses and ray sampling
- Occupancy / image / OBJ file formats

The rendered dataset stream lives in `core.world.dataset`.
"""

from .shapes import (
    ShapeCategory,
    ShapeSpec,
    OccupancyGrid,
    CATEGORY_COLORS,
    DEFAULT_SIGMA_MAX,
    sample_shape,
    signed_distance,
    analytic_density,
    density_grid,
    voxel_centers,
    voxelize,
)

from .cameras import (
    CameraPose,
    sample_pose,
    orbit_poses,
    ray_samples,
)

from .formats import (
    atomic_write_bytes,
    read_occupancy,
    write_occupancy,
    read_image,
    write_ppm,
    write_pgm,
    write_obj,
    boundary_quads,
)

__all__ = [
    # Shapes
    'ShapeCategory',
    'ShapeSpec',
    'OccupancyGrid',
    'CATEGORY_COLORS',
    'DEFAULT_SIGMA_MAX',
    'sample_shape',
    'signed_distance',
    'analytic_density',
    'density_grid',
    'voxel_centers',
    'voxelize',

    # Cameras
    'CameraPose',
    'sample_pose',
    'orbit_poses',
    'ray_samples',

    # Formats
    'atomic_write_bytes',
    'read_occupancy',
    'write_occupancy',
    'read_image',
    'write_ppm',
    'write_pgm',
    'write_obj',
    'boundary_quads'
]
