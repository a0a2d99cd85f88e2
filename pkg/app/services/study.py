"""
Accuracy and efficiency studies.

* temporal: fixed-step runs against a fine-step reference on one static
  hierarchy, L2 errors at sample times;
* spatial: AMR runs replaying the step sizes recorded by a uniform
  fine-grid reference, L2 errors of the composite solution against the
  reference averaged onto each valid cell;
* efficiency: average GMRES and Newton iterations per step and total
  accepted steps over a (levels x base resolution) table.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.errors import StudyError
from app.schemas.run_config import MeshConfig, RegridPolicy, RunConfig
from app.services.samr import PatchHierarchy, interior
from app.services.simulation import Sample, Simulation
from app.services.transfer import restrict

logger = logging.getLogger(__name__)


@dataclass
class StudyTable:
    """A titled table of numbers (``None`` for missing entries)."""

    title: str
    row_labels: list[str]
    column_labels: list[str]
    values: list[list[float | None]] = field(default_factory=list)

    def to_text(self) -> str:
        width = max([len(label) for label in self.row_labels] + [6])
        header = " " * width + "".join(f"{label:>14}" for label in self.column_labels)
        lines = [self.title, header]
        for label, row in zip(self.row_labels, self.values, strict=True):
            cells = "".join(f"{'-':>14}" if v is None else f"{v:>14.4g}" for v in row)
            lines.append(f"{label:<{width}}{cells}")
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["", *self.column_labels])
            for label, row in zip(self.row_labels, self.values, strict=True):
                writer.writerow([label, *("" if v is None else repr(v) for v in row)])

    def column(self, label: str) -> list[float | None]:
        index = self.column_labels.index(label)
        return [row[index] for row in self.values]


def l2_difference(hierarchy: PatchHierarchy, a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Volume-weighted L2 norms of ``a - b`` for E and T on the same hierarchy."""
    volumes = hierarchy.cell_volumes()
    n = hierarchy.n_valid
    diff = a - b
    return (
        float(np.sqrt(volumes @ diff[:n] ** 2)),
        float(np.sqrt(volumes @ diff[n:] ** 2)),
    )


def average_onto(reference: PatchHierarchy, state: np.ndarray, target: PatchHierarchy) -> np.ndarray:
    """Average a single-level reference solution onto the valid cells of ``target``.

    Raises:
        StudyError: If the reference is coarser than a target level or not uniform.
    """

    if reference.num_levels != 1:
        raise StudyError("the reference run must use a single uniform level")
    energy, temperature = reference.unpack(state)
    out = []
    for arrays in (energy, temperature):
        fine = interior(arrays[0])
        parts = []
        for level in target.levels:
            current = fine
            if current.shape[0] < level.shape[0]:
                raise StudyError(
                    f"reference resolution {fine.shape[0]} is coarser than level {level.index}"
                )
            while current.shape[0] > level.shape[0]:
                current = restrict(current)
            parts.append(current[level.valid])
        out.append(np.concatenate(parts))
    return np.concatenate(out)


def _sample_at(simulation: Simulation, t: float) -> Sample:
    for sample in simulation.samples:
        if abs(sample.t - t) <= 1.0e-12 * max(1.0, t):
            return sample
    raise StudyError(f"run did not reach sample time {t}")


def _static(config: RunConfig, **update: object) -> RunConfig:
    regrid = RegridPolicy(**{**config.regrid.model_dump(), "enabled": False})
    return config.model_copy(update={"regrid": regrid, "dump_interval": None, **update})


def temporal_study(
    config: RunConfig,
    dts: Sequence[float],
    reference_dt: float,
    sample_times: Sequence[float],
) -> StudyTable:
    """Fixed-step temporal errors of E and T at each sample time.

    All runs share one static hierarchy (the config's refine boxes, regridding
    off) so solutions compare cell by cell.
    """

    t_final = max(sample_times)
    base = _static(config, t_final=t_final, sample_times=list(sample_times))
    logger.info("temporal study: reference dt=%.3e", reference_dt)
    reference = Simulation(base.model_copy(update={"fixed_dt": reference_dt}))
    reference.run()

    columns = [f"{var}@{t:g}" for t in sample_times for var in ("E", "T")]
    rows = []
    for dt in dts:
        run = Simulation(base.model_copy(update={"fixed_dt": dt}))
        run.run()
        row: list[float | None] = []
        for t in sample_times:
            ref = _sample_at(reference, t)
            got = _sample_at(run, t)
            err_e, err_t = l2_difference(got.hierarchy, got.state, ref.state)
            row.extend([err_e, err_t])
        rows.append(row)
    return StudyTable("Temporal L2 errors", [f"dt={dt:g}" for dt in dts], columns, rows)


def spatial_study(
    config: RunConfig,
    grids: Sequence[tuple[int, int]],
    reference_base: int,
    t_final: float,
) -> StudyTable:
    """Spatial L2 errors of (base, levels) AMR runs against a uniform reference.

    The reference runs adaptively in time; every AMR run replays its recorded
    step sizes so only the spatial error differs.
    """

    base = config.model_copy(update={"t_final": t_final, "dump_interval": None, "sample_times": [t_final]})
    reference_config = _static(
        base, mesh=MeshConfig(**{**base.mesh.model_dump(), "base_resolution": reference_base, "max_levels": 1})
    )
    reference = Simulation(reference_config)
    reference.run()
    ref = _sample_at(reference, t_final)
    schedule = list(reference.stats.accepted_dts)
    if not schedule:
        raise StudyError("reference run took no steps")

    rows = []
    labels = []
    for grid_base, levels in grids:
        mesh = MeshConfig(**{**base.mesh.model_dump(), "base_resolution": grid_base, "max_levels": levels, "refine_boxes": []})
        run = Simulation(base.model_copy(update={"mesh": mesh, "dt_schedule": schedule}))
        run.run()
        got = _sample_at(run, t_final)
        projected = average_onto(ref.hierarchy, ref.state, got.hierarchy)
        err_e, err_t = l2_difference(got.hierarchy, got.state, projected)
        rows.append([err_e, err_t])
        labels.append(f"{grid_base}b{levels}l")
    return StudyTable("Spatial L2 errors", labels, ["E", "T"], rows)


def efficiency_study(
    config: RunConfig,
    bases: Sequence[int],
    levels: Sequence[int],
) -> dict[str, StudyTable]:
    """Average linear and nonlinear iterations and total steps; rows are level counts, columns base sizes."""
    gmres: list[list[float | None]] = []
    newton: list[list[float | None]] = []
    steps: list[list[float | None]] = []
    for n_levels in levels:
        row_g: list[float | None] = []
        row_n: list[float | None] = []
        row_s: list[float | None] = []
        for base_resolution in bases:
            mesh = MeshConfig(
                **{**config.mesh.model_dump(), "base_resolution": base_resolution, "max_levels": n_levels, "refine_boxes": []}
            )
            summary = Simulation(config.model_copy(update={"mesh": mesh, "dump_interval": None})).run()
            row_g.append(summary.avg_gmres_iters)
            row_n.append(summary.avg_newton_iters)
            row_s.append(float(summary.accepted_steps))
        gmres.append(row_g)
        newton.append(row_n)
        steps.append(row_s)
    rows = [f"{n} level{'s' if n > 1 else ''}" for n in levels]
    columns = [f"{b}^3" for b in bases]
    return {
        "gmres": StudyTable("Average linear iterations", rows, columns, gmres),
        "newton": StudyTable("Average nonlinear iterations", rows, columns, newton),
        "steps": StudyTable("Total number of timesteps", rows, columns, steps),
    }
