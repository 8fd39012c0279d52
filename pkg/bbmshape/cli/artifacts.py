"""
CSV, JSON and manifest writers

CSV files are comma separated with a header row and LF line endings; JSON
is UTF-8 with sorted keys. Floats are written with repr so identical runs
produce identical bytes.
"""

import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numba
import numpy as np
import scipy

from bbmshape import __version__
from bbmshape.models.field import PeriodicField
from bbmshape.utils import ensure_dir

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        # JSON has no inf/nan
        return number if np.isfinite(number) else str(number)
    return value


def write_csv(path: str | Path, columns: list[str], rows) -> Path:
    """
    Write a header row and data rows.

    Args:
        path: Target file
        columns: Header names
        rows: Iterable of row sequences

    Returns:
        The written path
    """
    target = Path(path)
    ensure_dir(target.parent)
    with target.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"Wrote {target}")
    return target


def write_table(path: str | Path, table) -> Path:
    """Write any result object exposing columns() and to_rows()."""
    return write_csv(path, table.columns(), table.to_rows())


def write_json(path: str | Path, payload: dict) -> Path:
    target = Path(path)
    ensure_dir(target.parent)
    with target.open("w", encoding="utf-8", newline="\n") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"Wrote {target}")
    return target


def library_versions() -> dict[str, str]:
    return {
        "bbmshape": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


@dataclass
class RunRecord:
    """Bookkeeping for one subcommand run; becomes manifest.json"""

    command: str
    out_dir: Path
    field: PeriodicField
    seed: int
    config: dict
    started: float = field(default_factory=time.perf_counter)
    artifacts: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def table(self, name: str, table) -> Path:
        target = write_table(self.path(name), table)
        self.artifacts.append(name)
        return target

    def csv(self, name: str, columns: list[str], rows) -> Path:
        target = write_csv(self.path(name), columns, rows)
        self.artifacts.append(name)
        return target

    def json(self, name: str, payload: dict) -> Path:
        target = write_json(self.path(name), payload)
        self.artifacts.append(name)
        return target

    def manifest(self, passed: bool | None = None) -> Path:
        """Write manifest.json; the timestamp and wall time are the only run-dependent fields."""
        payload = {
            "command": self.command,
            "field": self.field.to_dict(),
            "field_hash": self.field.field_hash,
            "seed": self.seed,
            "versions": library_versions(),
            "artifacts": sorted(self.artifacts),
            "summary": self.summary,
            "passed": passed,
            "config": self.config,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "wall_time_seconds": round(time.perf_counter() - self.started, 3),
        }
        target = write_json(self.path(MANIFEST_NAME), payload)
        logger.info(f"Manifest written to {target}")
        return target
