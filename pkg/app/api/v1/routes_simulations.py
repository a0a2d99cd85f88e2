"""
API routes for presets and simulation runs.

Preset endpoints are grouped under `/presets`, run submission under
`/simulations`; both are documented via FastAPI's OpenAPI/Swagger integration.
"""

import logging
from http import HTTPStatus
from pathlib import Path
from uuid import uuid4

from fastapi import APIRouter, Depends, HTTPException
from fastapi import Path as PathParam

from app.api.v1.deps import get_output_root
from app.core.errors import RadDiffError
from app.schemas.reports import ErrorResponse, RunSummary
from app.schemas.run_config import RunConfig
from app.services.presets import get_preset, preset_names
from app.services.simulation import run_simulation

logger = logging.getLogger(__name__)

presets_router = APIRouter(prefix="/presets", tags=["Presets"])
simulations_router = APIRouter(prefix="/simulations", tags=["Simulations"])


@presets_router.get(
    "",
    response_model=list[str],
    summary="List presets",
    description="Return the names of the built-in problem presets.",
)
async def list_presets() -> list[str]:
    """Return the sorted preset names."""
    return preset_names()


@presets_router.get(
    "/{name}",
    response_model=RunConfig,
    responses={
        HTTPStatus.NOT_FOUND.value: {
            "model": ErrorResponse,
            "description": "No preset with this name.",
        },
    },
    summary="Get a preset configuration",
    description=(
        "Return the complete run configuration of a preset. "
        "Unknown names return 404 Not Found."
    ),
)
async def read_preset(
    name: str = PathParam(..., description="Preset name, e.g. `marshak`."),
    full_scale: bool = False,
) -> RunConfig:
    """Build the named preset.

    Args:
        name: Preset name.
        full_scale: Return the full-scale variant instead of the desk-scale one.

    Raises:
        HTTPException: With status 404 if the preset does not exist.

    Returns:
        RunConfig: The preset configuration.
    """

    try:
        return get_preset(name, full_scale)
    except KeyError:
        raise HTTPException(
            status_code=HTTPStatus.NOT_FOUND,
            detail=f"Preset {name!r} not found.",
        ) from None


@simulations_router.post(
    "",
    response_model=RunSummary,
    status_code=HTTPStatus.CREATED,
    responses={
        HTTPStatus.UNPROCESSABLE_ENTITY.value: {
            "model": ErrorResponse,
            "description": "Invalid configuration or a fatal solver error.",
        },
    },
    summary="Run a simulation",
    description=(
        "Run the given configuration to completion and return its summary. "
        "Artifacts are written to a fresh directory under the configured output root. "
        "The call blocks for the duration of the run, so keep it to desk-scale problems."
    ),
)
def create_simulation(
    config: RunConfig,
    output_root: Path = Depends(get_output_root),
) -> RunSummary:
    """Run one simulation synchronously.

    Args:
        config: Validated run configuration.
        output_root: Root directory for run artifacts.

    Raises:
        HTTPException: With status 422 if the solver aborts.

    Returns:
        RunSummary: Summary of the completed run.
    """

    run_dir = output_root / f"{config.problem}-{uuid4().hex[:12]}"
    try:
        return run_simulation(config, run_dir)
    except RadDiffError as exc:
        logger.warning("run in %s failed: %s", run_dir, exc)
        raise HTTPException(
            status_code=HTTPStatus.UNPROCESSABLE_ENTITY,
            detail=f"{type(exc).__name__}: {exc}",
        ) from exc
