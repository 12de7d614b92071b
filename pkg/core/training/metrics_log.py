import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional


logger = logging.getLogger(__name__)

BASE_COLUMNS = ["step", "loss_gan_g", "loss_gan_d", "loss_z", "loss_r", "loss_aux", "rho", "wall_ms"]
CYCLE_GAP_COLUMN = "z_cycle_gap"


def format_value(value: float) -> str:
    """9 significant digits"""
    return f"{float(value):.9g}"


@dataclass
class MetricsRow:
    step: int
    loss_gan_g: float
    loss_gan_d: float
    loss_z: float
    loss_r: float
    loss_aux: float
    rho: float
    wall_ms: float = 0.0
    z_cycle_gap: Optional[float] = None

    def cells(self, with_cycle_gap: bool) -> List[str]:
        cells = [str(int(self.step))] + [format_value(getattr(self, name)) for name in BASE_COLUMNS[1:]]
        if with_cycle_gap:
            cells.append(format_value(self.z_cycle_gap or 0.0))
        return cells

    def to_dict(self) -> Dict[str, float]:
        data = {name: getattr(self, name) for name in BASE_COLUMNS}
        if self.z_cycle_gap is not None:
            data[CYCLE_GAP_COLUMN] = self.z_cycle_gap
        return data


def columns_for(cycle_depth: int) -> List[str]:
    return BASE_COLUMNS + ([CYCLE_GAP_COLUMN] if cycle_depth == 2 else [])


class MetricsLog:
    """
    Append-only metrics CSV, one row per step, LF line endings.
    The trailing z_cycle_gap column exists only for depth-2 runs.
    """

    def __init__(self, path, cycle_depth: int = 1):
        self.path = Path(path)
        self.cycle_depth = cycle_depth
        self.columns = columns_for(cycle_depth)
        self.logger = logging.getLogger(__name__)

    def start(self) -> None:
        """Create the file with just the header (overwrites)"""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", newline="") as handle:
            csv.writer(handle, lineterminator="\n").writerow(self.columns)

    def append(self, row: MetricsRow) -> None:
        if not self.path.exists():
            self.start()
        with open(self.path, "a", newline="") as handle:
            csv.writer(handle, lineterminator="\n").writerow(row.cells(self.cycle_depth == 2))

    def truncate(self, last_step: int) -> int:
        """Drop rows after `last_step`; returns the number of rows kept"""
        if not self.path.exists():
            self.start()
            return 0
        with open(self.path, newline="") as handle:
            lines = handle.read().split("\n")
        header, body = lines[0], [line for line in lines[1:] if line]
        kept = [line for line in body if int(line.split(",", 1)[0]) <= last_step]
        with open(self.path, "w", newline="") as handle:
            handle.write("\n".join([header] + kept) + "\n")
        if len(kept) != len(body):
            self.logger.info(f"Truncated {len(body) - len(kept)} metric rows after step {last_step}")
        return len(kept)


def read_metrics(path) -> List[Dict[str, float]]:
    """Rows as dicts; step is an int, everything else float"""
    with open(path, newline="") as handle:
        rows = []
        for record in csv.DictReader(handle):
            rows.append({key: (int(value) if key == "step" else float(value)) for key, value in record.items()})
    return rows
