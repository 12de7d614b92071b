import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

from ..training.metrics_log import format_value
from ..world.formats import atomic_write_bytes
from .latent_probe import SaltationStats


logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["metric", "config_hash", "seed", "value"]
PROBE_COLUMNS = ["scale", "index", "distance", "valid"]
ABLATION_COLUMNS = ["axis", "variant", "seed", "metric", "value"]


@dataclass(frozen=True)
class MetricRecord:
    metric: str
    config_hash: str
    seed: int
    value: float

    def cells(self) -> List[str]:
        return [self.metric, self.config_hash, str(int(self.seed)), format_value(self.value)]


@dataclass(frozen=True)
class AblationRecord:
    axis: str
    variant: str
    seed: int
    metric: str
    value: float

    def cells(self) -> List[str]:
        return [self.axis, self.variant, str(int(self.seed)), self.metric, format_value(self.value)]


def _csv_bytes(columns: Sequence[str], rows: Iterable[Sequence[str]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def write_metric_report(path, records: Sequence[MetricRecord]) -> Path:
    path = Path(path)
    atomic_write_bytes(path, _csv_bytes(METRIC_COLUMNS, (r.cells() for r in records)))
    logger.info(f"Wrote {len(records)} metric rows to {path}")
    return path


def write_probe_distances(path, stats: Sequence[SaltationStats]) -> Path:
    """One row per perturbation, for external plotting"""
    rows = []
    for probe in stats:
        for index, (distance, valid) in enumerate(zip(probe.distances, probe.valid)):
            rows.append([format_value(probe.scale), str(index), format_value(distance), str(int(valid))])
    path = Path(path)
    atomic_write_bytes(path, _csv_bytes(PROBE_COLUMNS, rows))
    return path


def write_ablation_report(path, records: Sequence[AblationRecord]) -> Path:
    path = Path(path)
    atomic_write_bytes(path, _csv_bytes(ABLATION_COLUMNS, (r.cells() for r in records)))
    logger.info(f"Wrote {len(records)} ablation rows to {path}")
    return path


def read_report(path) -> List[dict]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))
