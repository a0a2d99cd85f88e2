"""
Entry point for the Radiation Diffusion AMR Service application.

The module defines the FastAPI application, configures metadata for
automatic documentation (Swagger / OpenAPI) and registers all API routers.
"""

import numpy as np
from fastapi import FastAPI

from app.api.v1.routes_simulations import presets_router, simulations_router
from app.core.config import get_settings
from app.core.logging import configure_logging

settings = get_settings()
configure_logging(settings.log_level)

description = """
Service for running 3D non-equilibrium radiation diffusion simulations on
structured adaptive mesh hierarchies.

The API wraps the same solver as the `raddiff` command line tool. It can be
used for:

* Listing and fetching the built-in problem presets
* Running desk-scale simulations and collecting their summaries
"""

app = FastAPI(
    title=settings.project_name,
    description=description,
    version="0.1.0",
    swagger_ui_parameters={"defaultModelsExpandDepth": 1},
)

app.include_router(presets_router, prefix=settings.api_v1_prefix)
app.include_router(simulations_router, prefix=settings.api_v1_prefix)


@app.get(
    "/health",
    tags=["Service"],
    summary="Health check",
    description="Simple endpoint for checking that the service is alive.",
)
async def healthcheck() -> dict[str, str]:
    """Return service health status.

    Returns:
        dict[str, str]: ``status`` plus the numpy version the solver runs on.
    """

    return {"status": "ok", "numpy": np.__version__}
