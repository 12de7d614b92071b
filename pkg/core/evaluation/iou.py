from dataclasses import dataclass

import numpy as np

from ..world.shapes import OccupancyGrid


@dataclass(frozen=True)
class IoUResult:
    intersection: int
    union: int
    iou: float


def iou_3d(a: OccupancyGrid, b: OccupancyGrid) -> IoUResult:
    """Exact voxel IoU; two empty grids agree perfectly (iou = 1)"""
    if a.size != b.size:
        raise ValueError(f"Occupancy sizes differ: {a.size} vs {b.size}")
    intersection = int(np.logical_and(a.bits, b.bits).sum())
    union = int(np.logical_or(a.bits, b.bits).sum())
    iou = 1.0 if union == 0 else intersection / union
    return IoUResult(intersection=intersection, union=union, iou=iou)
