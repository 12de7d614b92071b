import json
import logging
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy

from .. import __version__
from ..autodiff.tensor import Tensor, no_grad
from ..gan.generator import Generator, extract_geometry
from ..render.volume_renderer import RenderSettings, render_representation
from ..world.cameras import CameraPose
from ..world.formats import atomic_write_bytes, write_obj, write_occupancy, write_pgm, write_ppm


logger = logging.getLogger(__name__)

RUN_RECORD = "run.json"


def versions() -> Dict[str, str]:
    return {
        "cgc_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_run_record(directory, command: str, config_hash: Optional[str], seed: Optional[int],
                     extra: Optional[Dict[str, Any]] = None) -> Path:
    """Provenance written before any heavy work starts"""
    record = {"command": command, "config_hash": config_hash, "seed": seed, "versions": versions()}
    record.update(extra or {})
    path = Path(directory) / RUN_RECORD
    atomic_write_bytes(path, (json.dumps(record, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    logger.debug(f"Wrote run record {path}")
    return path


@dataclass
class RenderExport:
    images: List[Path]
    occupancy: Path
    obj: Path
    vertices: int
    faces: int


def export_views(generator: Generator, z, poses: Sequence[CameraPose], settings: RenderSettings,
                 out_dir, label: Optional[int] = None, threshold: float = 2.0) -> RenderExport:
    """
    Render one latent from every pose (view_XX.ppm plus alpha PGM) and export
    its extracted geometry as shape.occ and shape.obj.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    z = np.asarray(z).reshape(1, -1)
    labels = np.array([label if label is not None else 0]) if generator.num_classes else None
    with no_grad():
        r = generator(z, labels)
        batch = Tensor(np.repeat(r.data, len(poses), axis=0))
        images = render_representation(batch, poses, settings).numpy()

    paths = []
    for index, image in enumerate(images):
        path = out_dir / f"view_{index:02d}.ppm"
        write_ppm(path, image[..., :3])
        write_pgm(out_dir / f"view_{index:02d}_alpha.pgm", image[..., 3])
        paths.append(path)

    geometry = extract_geometry(r.data[0], threshold)
    occupancy_path = out_dir / "shape.occ"
    write_occupancy(occupancy_path, geometry)
    obj_path = out_dir / "shape.obj"
    vertices, faces = write_obj(obj_path, geometry)
    logger.info(f"Exported {len(paths)} views and {geometry.count()} occupied voxels "
                f"({vertices} vertices, {faces} faces) to {out_dir}")
    return RenderExport(images=paths, occupancy=occupancy_path, obj=obj_path, vertices=vertices, faces=faces)
