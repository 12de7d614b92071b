"""
On-disk formats for the synthetic world: bit-packed occupancy (.occ),
binary PPM/PGM images and an OBJ of occupied-voxel boundary quads.
"""

import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
from PIL import Image

from .shapes import OccupancyGrid


OCC_MAGIC = b"OCC1"
PathLike = Union[str, Path]


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write to a temp file in the target directory, then rename over `path`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def encode_occupancy(grid: OccupancyGrid) -> bytes:
    header = OCC_MAGIC + struct.pack("<I", grid.size)
    return header + np.packbits(grid.bits.ravel(order="C")).tobytes()


def decode_occupancy(payload: bytes) -> OccupancyGrid:
    if len(payload) < 8 or payload[:4] != OCC_MAGIC:
        raise ValueError("Not an occupancy file (bad magic)")
    (size,) = struct.unpack("<I", payload[4:8])
    n_bits = size ** 3
    expected = (n_bits + 7) // 8
    body = np.frombuffer(payload[8:], dtype=np.uint8)
    if body.size != expected:
        raise ValueError(f"Occupancy payload has {body.size} bytes, expected {expected} for S={size}")
    bits = np.unpackbits(body)[:n_bits].astype(bool).reshape((size,) * 3)
    return OccupancyGrid(size=size, bits=bits)


def write_occupancy(path: PathLike, grid: OccupancyGrid) -> None:
    atomic_write_bytes(path, encode_occupancy(grid))


def read_occupancy(path: PathLike) -> OccupancyGrid:
    return decode_occupancy(Path(path).read_bytes())


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: PathLike, rgb: np.ndarray) -> None:
    """Binary PPM (P6) from an (H, W, 3) array in [0, 1]"""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"PPM needs an (H, W, 3) array, got {rgb.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(rgb), "RGB").save(path, format="PPM")


def write_pgm(path: PathLike, gray: np.ndarray) -> None:
    """Binary PGM (P5) from an (H, W) array in [0, 1]"""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs an (H, W) array, got {gray.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(gray), "L").save(path, format="PPM")


def read_image(path: PathLike) -> np.ndarray:
    """PPM/PGM back to floats in [0, 1]"""
    with Image.open(path) as image:
        return np.asarray(image, dtype=np.float64) / 255.0


# face normal axis, side, and the four corner offsets in counter-clockwise order seen from outside
_FACES: List[Tuple[int, int, Tuple[Tuple[int, int, int], ...]]] = [
    (0, -1, ((0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0))),
    (0, 1, ((1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1))),
    (1, -1, ((0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1))),
    (1, 1, ((0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0))),
    (2, -1, ((0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0))),
    (2, 1, ((0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1))),
]


def boundary_quads(grid: OccupancyGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Quads separating occupied voxels from empty space (or the grid border).

    Returns (vertices (V, 3) in unit-cube coordinates, faces (F, 4) zero-based).
    """
    padded = np.pad(grid.bits, 1)
    vertex_index: Dict[Tuple[int, int, int], int] = {}
    faces: List[List[int]] = []
    occupied = np.argwhere(grid.bits)
    for axis, side, corners in _FACES:
        shift = [0, 0, 0]
        shift[axis] = side
        for x, y, z in occupied:
            if padded[x + 1 + shift[0], y + 1 + shift[1], z + 1 + shift[2]]:
                continue
            quad = []
            for dx, dy, dz in corners:
                key = (int(x) + dx, int(y) + dy, int(z) + dz)
                if key not in vertex_index:
                    vertex_index[key] = len(vertex_index)
                quad.append(vertex_index[key])
            faces.append(quad)
    vertices = np.zeros((len(vertex_index), 3))
    for key, index in vertex_index.items():
        vertices[index] = key
    vertices /= grid.size
    return vertices, np.asarray(faces, dtype=np.int64).reshape(-1, 4)


def write_obj(path: PathLike, grid: OccupancyGrid) -> Tuple[int, int]:
    """Write the boundary quads as OBJ; returns (vertex count, face count)"""
    vertices, faces = boundary_quads(grid)
    lines = [f"# occupancy surface S={grid.size} voxels={grid.count()}"]
    lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in vertices]
    lines += ["f " + " ".join(str(i + 1) for i in quad) for quad in faces]
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
    return len(vertices), len(faces)
