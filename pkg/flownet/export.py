"""CSV series and the run manifest.

Every file has a header row and unquoted numeric columns; floats are written
with ``repr`` so a CSV read back gives the same doubles.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
from django.utils import timezone

from .exceptions import GridError, InputFileError
from .scenario import ScenarioConfig, config_hash

logger = logging.getLogger(__name__)


def _cell(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ResultWriter:
    """Writes the series of one command invocation into out_dir and remembers them for the manifest."""

    def __init__(self, out_dir, *, timestamp=False):
        self.out_dir = Path(out_dir)
        self.timestamp = timestamp
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputFileError(f"cannot create output directory {self.out_dir}", reason=str(exc)) from exc
        self.files = []

    def table(self, name: str, header, columns) -> Path:
        """columns: equally long sequences, one per header entry."""
        columns = [np.asarray(column) for column in columns]
        if len(columns) != len(header) or len({column.shape[0] for column in columns}) > 1:
            raise GridError("columns do not match the header", file=name)
        path = self.out_dir / name
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
            writer.writerow(header)
            for row in zip(*columns):
                writer.writerow([_cell(value) for value in row])
        self.files.append(path)
        logger.debug("wrote %s", path)
        return path

    # ---------------- series -----------------
    def inflow(self, name, profile):
        return self.table(name, ["window", "t_in", "u"], [profile.windows, profile.times, profile.values])

    def demand(self, name, path):
        return self.table(name, ["t", "value"], [path.times, path.values])

    def supply(self, name, series):
        return self.table(name, ["t", "supply"], [series.times, series.values])

    def alphas(self, name, series):
        arc_ids = list(series.values)
        return self.table(name, ["t", *[f"alpha_{arc_id}" for arc_id in arc_ids]],
                          [series.times, *[series.values[arc_id] for arc_id in arc_ids]])

    def estimate(self, name, estimate, value_name="mean"):
        return self.table(name, ["t", value_name, "standard_error"],
                          [estimate.times, estimate.mean, estimate.standard_error])

    def field(self, name, grid, values):
        """Space-time density dump, one row per (t, cell)."""
        t = np.repeat(grid.times, grid.n_cells)
        x = np.tile(grid.cell_centers, grid.times.size)
        return self.table(name, ["t", "x", "z"], [t, x, np.asarray(values).ravel()])

    # ---------------- manifest -----------------
    def manifest(self, config: ScenarioConfig, command: str, *, grids=None, **extra) -> Path:
        document = {
            "command": command,
            "scenario": config.name,
            "config_hash": config_hash(config),
            "master_seed": config.master_seed,
            "grids": {
                "t0": config.t0,
                "T": config.T,
                "sde_dt": config.sde_dt,
                "pde_dx": config.pde_dx,
                "arc_steps": {arc_id: grid.steps for arc_id, grid in (grids or {}).items()},
            },
            "update_times": list(config.update_times),
            "files": [{"name": path.name, "sha256": file_digest(path)} for path in self.files],
        }
        if self.timestamp:
            document["created"] = timezone.now().isoformat()
        document.update(extra)
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("wrote %s file(s) and manifest to %s", len(self.files), self.out_dir)
        return path
