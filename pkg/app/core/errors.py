"""
Exception hierarchy of the solver.

Services raise these; the CLI turns fatal ones into a non-zero exit code and
the API maps them onto HTTP error responses.
"""

from typing import Any


class RadDiffError(Exception):
    """Base class for all solver errors."""


class HierarchyError(RadDiffError):
    """Invalid patch hierarchy or inter-level data access."""


class NestingError(HierarchyError):
    """A refinement box is not properly nested in the next coarser level.

    Attributes:
        box: The offending box.
        level_index: Level the box was meant for.
    """

    def __init__(self, box: Any, level_index: int, reason: str = "not properly nested") -> None:
        self.box = box
        self.level_index = level_index
        super().__init__(f"refine box {box} for level {level_index} is {reason}")


class MissingDonorError(HierarchyError):
    """Coarse donor data needed for ghost interpolation lies outside the coarser level."""


class PositivityError(RadDiffError):
    """Non-positive energy density or temperature reached a positive-only evaluation."""


class SingularBlockError(RadDiffError):
    """A cell-local 2x2 block of the preconditioner is singular.

    Attributes:
        level_index: Level of the cell.
        cell: Interior cell index on that level.
    """

    def __init__(self, level_index: int, cell: tuple[int, ...], det: float) -> None:
        self.level_index = level_index
        self.cell = cell
        super().__init__(f"singular 2x2 block at level {level_index}, cell {cell} (det={det:.3e})")


class SolverError(RadDiffError):
    """Failure inside the nonlinear or linear solvers."""


class NewtonDivergedError(SolverError):
    """Newton iteration failed to reach its tolerance."""


class LinearSolverError(SolverError):
    """Krylov solve broke down in a way that cannot be treated as convergence."""


class StepSizeCollapseError(RadDiffError):
    """The step-size controller asked for a step below dt_min."""

    def __init__(self, dt: float, dt_min: float, t: float | None = None) -> None:
        self.dt = dt
        self.dt_min = dt_min
        self.t = t
        where = "" if t is None else f" at t={t:.6e}"
        super().__init__(f"step-size collapse{where}: dt={dt:.3e} < dt_min={dt_min:.3e}")


class StudyError(RadDiffError):
    """The study harness could not produce a table (for example a missing reference run)."""
