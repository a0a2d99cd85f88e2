"""
Pydantic schemas for a simulation run.

A run config file is flat ``KEY=value`` text with section prefixes, e.g.::

    RADDIFF_T_FINAL=0.1
    RADDIFF_CONTROLLER__KIND=PI47
    RADDIFF_MATERIAL__REGIONS=[{"lower": [0, 0, 0], "upper": [0.5, 1, 1], "z": 10}]

It is read with pydantic-settings (``env_prefix="RADDIFF_"``, nested
delimiter ``__``); list and object values are JSON.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

ENV_PREFIX = "RADDIFF_"
NESTED_DELIMITER = "__"


class PhysicsParams(BaseModel):
    """Model coefficients and boundary data."""

    k_conduction: float = Field(
        default=0.01, gt=0.0, description="Coefficient k in D_T = k T^(5/2)."
    )
    flux_limiter_on: bool = Field(default=True, description="Apply the Wilson flux limiter to D_E.")
    robin_boundaries: bool = Field(
        default=True,
        description="Robin conditions for E on x=0 and x=1; zero Neumann there when false.",
    )
    robin_r_left: float = Field(default=1.0, description="Robin source R on the x=0 face.")
    robin_r_right: float = Field(default=0.0, description="Robin source R on the x=1 face.")


class MaterialRegion(BaseModel):
    """Axis-aligned physical box with its atomic number."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    z: float = Field(..., gt=0.0, description="Atomic number inside the box.")

    @model_validator(mode="after")
    def _ordered(self) -> MaterialRegion:
        if any(lo > up for lo, up in zip(self.lower, self.upper, strict=True)):
            raise ValueError("material region lower corner exceeds upper corner")
        return self


class MaterialMap(BaseModel):
    """Material regions (first match wins) over a background atomic number."""

    regions: list[MaterialRegion] = Field(default_factory=list)
    background_z: float = Field(default=1.0, gt=0.0)


class BoxSpec(BaseModel):
    """Inclusive cell-index box."""

    lower: tuple[int, int, int]
    upper: tuple[int, int, int]


class MeshConfig(BaseModel):
    """Domain, base grid and static refinement."""

    domain_lower: tuple[float, float, float] = (0.0, 0.0, 0.0)
    domain_upper: tuple[float, float, float] = (1.0, 1.0, 1.0)
    base_resolution: int = Field(default=16, ge=2, description="Base cells per axis.")
    max_levels: int = Field(default=3, ge=1)
    refine_boxes: list[list[BoxSpec]] = Field(
        default_factory=list,
        description="refine_boxes[l]: boxes in level-l index space refined to form level l+1.",
    )


class ControllerConfig(BaseModel):
    """Step-size controller settings."""

    eps_t: float | None = Field(
        default=None,
        gt=0.0,
        description="Target tolerance; scaled with resolution when unset.",
    )
    eps_t_reference: float = Field(default=5.0e-4, gt=0.0)
    eps_t_reference_resolution: int = Field(default=32, ge=1)
    kind: Literal["EPS", "PI47"] = "PI47"
    k_order: int = Field(default=3, ge=1)
    kk_i: float = Field(default=0.4, description="k * k_I.")
    kk_p: float = Field(default=0.7, description="k * k_P.")
    ratio_min: float = 0.2
    ratio_max: float = 2.5
    reject_factor: float = Field(default=2.0, ge=1.0)
    dt_min: float = Field(default=1.0e-12, gt=0.0)
    dt_max: float = Field(default=0.1, gt=0.0)
    initial_dt: float = Field(default=1.0e-6, gt=0.0)
    eta_e: float = Field(default=1.0e-2, gt=0.0)
    eta_t: float = Field(default=1.0e-2, gt=0.0)
    failure_cut: float = Field(
        default=0.5, gt=0.0, lt=1.0, description="dt factor after a failed nonlinear solve."
    )
    error_floor: float = Field(default=1.0e-14, gt=0.0)

    @model_validator(mode="after")
    def _clamps(self) -> ControllerConfig:
        if not 0.0 < self.ratio_min < 1.0 < self.ratio_max:
            raise ValueError("controller ratios must satisfy 0 < ratio_min < 1 < ratio_max")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        return self

    @property
    def k_i(self) -> float:
        return self.kk_i / self.k_order

    @property
    def k_p(self) -> float:
        return self.kk_p / self.k_order

    def tolerance(self, equivalent_resolution: int) -> float:
        """Tolerance, halved for every doubling of resolution past the reference when unset."""
        if self.eps_t is not None:
            return self.eps_t
        return self.eps_t_reference * self.eps_t_reference_resolution / equivalent_resolution


class NewtonConfig(BaseModel):
    """Inexact Newton / GMRES settings."""

    rel_tol: float = Field(default=1.0e-12, gt=0.0)
    abs_tol: float = Field(default=1.0e-10, gt=0.0)
    max_newton_iters: int = Field(default=20, ge=1)
    max_krylov_dim: int = Field(default=50, ge=1)
    forcing: Literal["EW", "fixed"] = "EW"
    fixed_eta: float = Field(default=1.0e-4, gt=0.0, lt=1.0)
    ew_gamma: float = Field(default=0.9, gt=0.0, le=1.0)
    ew_exponent: float = Field(default=2.0, gt=1.0, le=2.0)
    eta_max: float = Field(default=0.9, gt=0.0, lt=1.0)
    u_min: float = Field(default=1.0e-6, gt=0.0)
    epsilon_b: float = Field(default=1.0, gt=0.0, description="Branch guard b of the FD step formula.")
    positivity_theta: float = Field(default=0.01, gt=0.0, lt=1.0)
    min_step_scale: float = Field(default=1.0e-4, gt=0.0, le=1.0)


class FacConfig(BaseModel):
    """FAC cycle used inside the preconditioner."""

    pre_sweeps: int = Field(default=1, ge=0, description="m in V(m, n).")
    post_sweeps: int = Field(default=0, ge=0, description="n in V(m, n).")
    coarse_sweeps: int = Field(default=4, ge=1)
    cycles: int = Field(default=1, ge=1, description="V-cycles per block and preconditioner application.")
    smoother: Literal["redblack", "jacobi"] = "redblack"
    jacobi_weight: float = Field(default=0.8, gt=0.0, le=1.0)


class RegridPolicy(BaseModel):
    """Tagging, clustering and regrid cadence."""

    enabled: bool = True
    interval: int = Field(default=10, ge=1)
    tau_c: float = Field(default=0.25, gt=0.0)
    tau_g: float = Field(default=0.25, gt=0.0)
    min_patch_size: int = Field(default=4, ge=2, description="Minimum patch width in fine cells.")
    efficiency: float = Field(default=0.8, gt=0.0, le=1.0)
    buffer_cells: int = Field(default=1, ge=0)
    restart: Literal["warm", "cold"] = "warm"
    initial_regrids: int | None = Field(
        default=None, ge=0, description="Tag/cluster passes at t=0 (max_levels - 1 when unset)."
    )


class RunConfig(BaseSettings):
    """Complete description of one simulation run."""

    problem: str = "marshak"
    e0: float = Field(default=1.0e-5, gt=0.0, description="Initial energy density.")
    t_final: float = Field(default=0.1, ge=0.0)
    dump_interval: float | None = Field(
        default=0.05, gt=0.0, description="Snapshot cadence in simulated time."
    )
    fixed_dt: float | None = Field(default=None, gt=0.0)
    dt_schedule: list[float] | None = None
    sample_times: list[float] = Field(default_factory=list)
    threads: int = Field(default=1, ge=1)
    seed: int = 0

    physics: PhysicsParams = Field(default_factory=PhysicsParams)
    material: MaterialMap = Field(default_factory=MaterialMap)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    newton: NewtonConfig = Field(default_factory=NewtonConfig)
    fac: FacConfig = Field(default_factory=FacConfig)
    regrid: RegridPolicy = Field(default_factory=RegridPolicy)

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_nested_delimiter=NESTED_DELIMITER,
        env_file=None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        env_parse_none_str="null",
        extra="ignore",
    )

    @model_validator(mode="after")
    def _schedule(self) -> RunConfig:
        if self.dt_schedule is not None and any(dt <= 0.0 for dt in self.dt_schedule):
            raise ValueError("dt_schedule entries must be positive")
        return self


def load_run_config(path: str | Path) -> RunConfig:
    """Read a run config file.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        pydantic.ValidationError: If a value is invalid.
    """

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return RunConfig(_env_file=path)  # type: ignore[call-arg]


def _format_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value)


def dump_run_config(config: RunConfig) -> str:
    """Flat key-value text that :func:`load_run_config` reads back to the same config."""
    lines = []
    data = config.model_dump(mode="json")
    for name, value in data.items():
        if value is None:
            lines.append(f"{ENV_PREFIX}{name}".upper() + "=null")
        elif isinstance(value, dict):
            for sub_name, sub_value in value.items():
                if sub_value is None:
                    continue
                key = f"{ENV_PREFIX}{name}{NESTED_DELIMITER}{sub_name}".upper()
                lines.append(f"{key}={_format_value(sub_value)}")
        else:
            lines.append(f"{ENV_PREFIX}{name}".upper() + f"={_format_value(value)}")
    return "\n".join(lines) + "\n"
