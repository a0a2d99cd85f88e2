from collections.abc import AsyncGenerator, Callable, Generator
from pathlib import Path
from typing import Any

import numpy as np
import pytest
from httpx import ASGITransport, AsyncClient

from app.api.v1.deps import get_output_root
from app.main import app
from app.schemas.run_config import (
    ControllerConfig,
    MaterialMap,
    MeshConfig,
    PhysicsParams,
    RegridPolicy,
    RunConfig,
)
from app.services.samr import IndexBox, PatchHierarchy, build_hierarchy

UNIT_CUBE = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture(autouse=True)
def override_output_root(tmp_path: Path) -> Generator[None, None, None]:
    """Send every run started through the API into the test's tmp directory."""

    def _tmp_output_root() -> Path:
        return tmp_path / "runs"

    app.dependency_overrides[get_output_root] = _tmp_output_root
    yield
    app.dependency_overrides.pop(get_output_root, None)


@pytest.fixture
async def async_client() -> AsyncGenerator[AsyncClient, Any]:
    """HTTP client for testing FastAPI applications."""
    transport = ASGITransport(app=app)
    async with AsyncClient(transport=transport, base_url="http://test") as client:
        yield client


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def uniform_hierarchy() -> PatchHierarchy:
    """Single 8^3 level on the unit cube."""
    return build_hierarchy(UNIT_CUBE, 8)


@pytest.fixture
def two_level_hierarchy() -> PatchHierarchy:
    """8^3 base with the central 4^3 coarse cells refined (fine box 4..11 of 16^3)."""
    return build_hierarchy(UNIT_CUBE, 8, [[IndexBox((2, 2, 2), (5, 5, 5))]])


@pytest.fixture
def boundary_hierarchy() -> PatchHierarchy:
    """8^3 base with a refined block touching the x=0 and y=0 faces (fine box 0..7 x 0..11 x 4..11)."""
    return build_hierarchy(UNIT_CUBE, 8, [[IndexBox((0, 0, 2), (3, 5, 5))]])


def random_hierarchy(rng: np.random.Generator, max_levels: int = 3) -> PatchHierarchy:
    """A properly nested hierarchy on an 8^3 base with one random box per refined level."""
    lower = rng.integers(0, 5, size=3)
    upper = np.minimum(lower + rng.integers(1, 4, size=3), 7)
    boxes = [[IndexBox(tuple(int(v) for v in lower), tuple(int(v) for v in upper))]]  # type: ignore[arg-type]
    shape = 8
    while len(boxes) < max_levels - 1 and rng.uniform() < 0.6:
        shape *= 2
        fine = boxes[-1][0].refine()
        inner_lower = [lo + 1 if lo > 0 else lo for lo in fine.lower]
        inner_upper = [up - 1 if up < shape - 1 else up for up in fine.upper]
        box_lower = [int(rng.integers(lo, up + 1)) for lo, up in zip(inner_lower, inner_upper, strict=True)]
        box_upper = [int(rng.integers(lo, up + 1)) for lo, up in zip(box_lower, inner_upper, strict=True)]
        boxes.append([IndexBox(tuple(box_lower), tuple(box_upper))])  # type: ignore[arg-type]
    return build_hierarchy(UNIT_CUBE, 8, boxes, max_levels=max_levels)


def small_config(**update: Any) -> RunConfig:
    """A 4^3 single-level run that finishes in a handful of steps."""
    config = RunConfig(
        problem="test",
        t_final=2.0e-4,
        dump_interval=None,
        physics=PhysicsParams(),
        material=MaterialMap(background_z=1.0),
        mesh=MeshConfig(base_resolution=4, max_levels=1),
        controller=ControllerConfig(eps_t=1.0e-3),
        regrid=RegridPolicy(enabled=False),
    )
    return config.model_copy(update=update)


@pytest.fixture
def make_config() -> Callable[..., RunConfig]:
    """Factory for small run configs; keyword arguments override top-level fields."""
    return small_config
