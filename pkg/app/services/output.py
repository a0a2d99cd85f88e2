"""
Run artifacts: step and regrid CSVs, field snapshots and the summary file.

Snapshot format (``snapshots/step_XXXXXX.amr``), plain text::

    # raddiff-amr snapshot
    time <t>
    step <n>
    domain <lx> <ly> <lz> <ux> <uy> <uz>
    max_levels <L>
    levels <count>
    level <index> ratio <r> spacing <hx> <hy> <hz> patches <count>
    patch <lo_x> <lo_y> <lo_z> <up_x> <up_y> <up_z>
    ...
    field E <count>
    <one value per line>
    field T <count>
    <one value per line>

Field values are listed level by level, patch by patch, each patch interior in
x-fastest order. Covered cells carry the average of their children.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from app.schemas.reports import RegridRecord, RunSummary, StepRecord
from app.services.samr import IndexBox, PatchHierarchy, make_hierarchy
from app.services.transfer import synchronize

logger = logging.getLogger(__name__)

STEP_COLUMNS = list(StepRecord.model_fields)
REGRID_COLUMNS = list(RegridRecord.model_fields)
SNAPSHOT_MAGIC = "# raddiff-amr snapshot"


def snapshot_name(step: int) -> str:
    return f"step_{step:06d}.amr"


def _patch_values(hierarchy: PatchHierarchy, arrays: list[np.ndarray]) -> np.ndarray:
    chunks = []
    for level, array in zip(hierarchy.levels, arrays, strict=True):
        for patch in level.patches:
            chunks.append(patch.interior(array).ravel(order="F"))
    return np.concatenate(chunks)


def write_snapshot(path: Path, hierarchy: PatchHierarchy, state: np.ndarray, t: float, step: int) -> None:
    energy, temperature = hierarchy.unpack(state)
    synchronize(hierarchy, energy)
    synchronize(hierarchy, temperature)
    lines = [
        SNAPSHOT_MAGIC,
        f"time {t:.16e}",
        f"step {step}",
        "domain " + " ".join(f"{v:.16e}" for v in (*hierarchy.domain_lower, *hierarchy.domain_upper)),
        f"max_levels {hierarchy.max_levels}",
        f"levels {hierarchy.num_levels}",
    ]
    for level in hierarchy.levels:
        spacing = " ".join(f"{h:.16e}" for h in level.spacing)
        lines.append(
            f"level {level.index} ratio {level.ratio_to_coarser} spacing {spacing} patches {len(level.patches)}"
        )
        for patch in level.patches:
            lines.append("patch " + " ".join(str(v) for v in (*patch.box.lower, *patch.box.upper)))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
        for name, arrays in (("E", energy), ("T", temperature)):
            values = _patch_values(hierarchy, arrays)
            handle.write(f"field {name} {values.size}\n")
            np.savetxt(handle, values, fmt="%.16e")


@dataclass
class Snapshot:
    time: float
    step: int
    hierarchy: PatchHierarchy
    energy: list[np.ndarray]
    temperature: list[np.ndarray]

    def state(self) -> np.ndarray:
        return self.hierarchy.pack(self.energy, self.temperature)


def _expect(handle: TextIO, key: str) -> list[str]:
    parts = handle.readline().split()
    if not parts or parts[0] != key:
        raise ValueError(f"malformed snapshot: expected {key!r}, got {' '.join(parts)!r}")
    return parts[1:]


def read_snapshot(path: str | Path) -> Snapshot:
    """Load a snapshot written by :func:`write_snapshot`.

    Raises:
        ValueError: If the file is not a snapshot.
    """

    with Path(path).open(encoding="utf-8") as handle:
        if handle.readline().strip() != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a snapshot file")
        time = float(_expect(handle, "time")[0])
        step = int(_expect(handle, "step")[0])
        corners = [float(v) for v in _expect(handle, "domain")]
        max_levels = int(_expect(handle, "max_levels")[0])
        count = int(_expect(handle, "levels")[0])
        level_boxes: list[list[IndexBox]] = []
        for _ in range(count):
            parts = _expect(handle, "level")
            n_patches = int(parts[parts.index("patches") + 1])
            boxes = []
            for _ in range(n_patches):
                v = [int(x) for x in _expect(handle, "patch")]
                boxes.append(IndexBox((v[0], v[1], v[2]), (v[3], v[4], v[5])))
            level_boxes.append(boxes)
        base_shape = level_boxes[0][0].shape
        hierarchy = make_hierarchy(
            (corners[0], corners[1], corners[2]),
            (corners[3], corners[4], corners[5]),
            base_shape,
            level_boxes,
            max_levels,
        )
        fields = []
        for name in ("E", "T"):
            n = int(_expect(handle, "field")[1])
            values = np.array([float(handle.readline()) for _ in range(n)])
            arrays = hierarchy.new_arrays()
            offset = 0
            for level, array in zip(hierarchy.levels, arrays, strict=True):
                for patch in level.patches:
                    size = patch.box.volume
                    patch.interior(array)[...] = values[offset : offset + size].reshape(
                        patch.box.shape, order="F"
                    )
                    offset += size
            fields.append(arrays)
    return Snapshot(time, step, hierarchy, fields[0], fields[1])


class RunWriter:
    """Writes the artifacts of one run into ``out_dir``."""

    def __init__(self, out_dir: str | Path) -> None:
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_dir = self.out_dir / "snapshots"
        self.snapshots: list[Path] = []
        self._steps = (self.out_dir / "steps.csv").open("w", newline="", encoding="utf-8")
        self._regrids = (self.out_dir / "regrid.csv").open("w", newline="", encoding="utf-8")
        self._step_writer = csv.DictWriter(self._steps, fieldnames=STEP_COLUMNS)
        self._regrid_writer = csv.DictWriter(self._regrids, fieldnames=REGRID_COLUMNS)
        self._step_writer.writeheader()
        self._regrid_writer.writeheader()

    def step(self, record: StepRecord) -> None:
        self._step_writer.writerow(_row(record.model_dump()))
        self._steps.flush()

    def regrid(self, record: RegridRecord) -> None:
        self._regrid_writer.writerow(_row(record.model_dump()))
        self._regrids.flush()

    def snapshot(self, hierarchy: PatchHierarchy, state: np.ndarray, t: float, step: int) -> Path:
        path = self.snapshot_dir / snapshot_name(step)
        write_snapshot(path, hierarchy, state, t, step)
        self.snapshots.append(path)
        logger.debug("snapshot %s at t=%.6e", path.name, t)
        return path

    def summary(self, summary: RunSummary) -> Path:
        path = self.out_dir / "summary.txt"
        lines = [f"{key}: {value}" for key, value in summary.model_dump().items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def close(self) -> None:
        self._steps.close()
        self._regrids.close()

    def __enter__(self) -> RunWriter:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def _row(data: dict[str, object]) -> dict[str, object]:
    return {key: ("" if value is None else value) for key, value in data.items()}


def read_steps(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
