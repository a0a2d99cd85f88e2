"""
Pydantic schemas for solver diagnostics and run results.

These models are returned by the HTTP API and serialized into the run
artifacts (step and regrid CSVs, summary file).
"""

from pydantic import BaseModel, Field


class SolverReport(BaseModel):
    """Diagnostics of one nonlinear solve."""

    converged: bool = False
    newton_iters: int = Field(default=0, ge=0, description="Newton steps taken (linear solves).")
    total_gmres_iters: int = Field(default=0, ge=0)
    residual_norms: list[float] = Field(default_factory=list)
    forcing_terms: list[float] = Field(default_factory=list)
    positivity_scalings: int = Field(default=0, ge=0, description="Newton steps shortened by positivity.")
    min_step_scale: float = 1.0
    failure_reason: str | None = None


class StepRecord(BaseModel):
    """One attempted time step (row of ``steps.csv``)."""

    step: int
    t: float
    dt: float
    err_norm: float | None = None
    newton_iters: int = 0
    gmres_iters: int = 0
    valid_dofs: int = 0
    levels: int = 1
    regrid_flag: bool = False
    accepted: bool = True
    decision: str = "accept"
    controller: str = "PI47"


class RegridRecord(BaseModel):
    """One regrid event (row of ``regrid.csv``)."""

    step: int
    t: float
    levels: int
    valid_dofs: int
    dof_fraction: float
    restart: str = "warm"
    resolve_newton_iters: int = 0


class RunSummary(BaseModel):
    """Final summary of a run."""

    run_dir: str = Field(..., description="Directory holding the run artifacts.")
    problem: str
    t_final: float
    t_reached: float
    accepted_steps: int = 0
    rejected_steps: int = 0
    failed_solves: int = 0
    regrids: int = 0
    avg_newton_iters: float = 0.0
    avg_gmres_iters: float = 0.0
    final_levels: int = 1
    final_valid_dofs: int = 0
    final_dof_fraction: float = 1.0
    eps_t: float = 0.0
    snapshots: int = 0
    status: str = "ok"
    message: str | None = None


class ErrorResponse(BaseModel):
    """Generic error response model.

    Attributes:
        detail: Human-readable error description.
    """

    detail: str = Field(..., description="Error message describing the problem.")
