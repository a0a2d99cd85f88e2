"""
Built-in problem presets.

Presets are plain :class:`RunConfig` factories; ``raddiff preset-dump`` writes
them out as config files so every run can be reproduced from a file.
"""

from __future__ import annotations

from collections.abc import Callable

from app.schemas.run_config import (
    ControllerConfig,
    MaterialMap,
    MaterialRegion,
    MeshConfig,
    PhysicsParams,
    RegridPolicy,
    RunConfig,
)

E0 = 1.0e-5
HIGH_Z = 10.0

# the three z=10 obstacles of the two-material Marshak problem
MARSHAK_REGIONS: tuple[MaterialRegion, ...] = (
    MaterialRegion(lower=(0.0625, 0.375, 0.375), upper=(0.2, 0.625, 0.625), z=HIGH_Z),
    MaterialRegion(lower=(0.125, 0.0, 0.0), upper=(0.375, 1.0, 0.125), z=HIGH_Z),
    MaterialRegion(lower=(0.125, 0.0, 0.875), upper=(0.375, 1.0, 1.0), z=HIGH_Z),
)


def marshak_two_material(full_scale: bool = False) -> RunConfig:
    """Marshak wave through a z=1 medium with three z=10 obstacles.

    The desk configuration is a 16^3 base with up to three levels run to
    t=0.1; ``full_scale`` switches to four levels and t=1.
    """

    return RunConfig(
        problem="marshak",
        e0=E0,
        t_final=1.0 if full_scale else 0.1,
        dump_interval=0.05,
        physics=PhysicsParams(robin_r_left=1.0, robin_r_right=0.0),
        material=MaterialMap(regions=list(MARSHAK_REGIONS), background_z=1.0),
        mesh=MeshConfig(base_resolution=16, max_levels=4 if full_scale else 3),
        controller=ControllerConfig(),
        regrid=RegridPolicy(),
    )


def marshak_single(full_scale: bool = False) -> RunConfig:
    """Single-material (z=1 everywhere) Marshak wave used by the accuracy studies."""
    config = marshak_two_material(full_scale)
    return config.model_copy(
        update={"problem": "marshak-single", "material": MaterialMap(background_z=1.0)}
    )


def smoke(full_scale: bool = False) -> RunConfig:
    """Tiny single-level run for quick end-to-end checks."""
    return RunConfig(
        problem="smoke",
        e0=E0,
        t_final=2.0e-4,
        dump_interval=1.0e-4,
        material=MaterialMap(background_z=1.0),
        mesh=MeshConfig(base_resolution=4, max_levels=1),
        controller=ControllerConfig(eps_t=1.0e-3),
        regrid=RegridPolicy(enabled=False),
    )


PRESETS: dict[str, Callable[[bool], RunConfig]] = {
    "marshak": marshak_two_material,
    "marshak-single": marshak_single,
    "smoke": smoke,
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str, full_scale: bool = False) -> RunConfig:
    """Build a preset by name.

    Raises:
        KeyError: If ``name`` is not a known preset.
    """

    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}") from None
    return factory(full_scale)
