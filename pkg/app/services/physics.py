"""
Constitutive laws of the two-temperature radiation diffusion model.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from typing import TypeVar

import numpy as np

from app.core.errors import PositivityError
from app.schemas.run_config import MaterialMap

ArrayOrFloat = TypeVar("ArrayOrFloat", float, np.ndarray)


def sigma_a(temperature: ArrayOrFloat, z: ArrayOrFloat) -> ArrayOrFloat:
    """Absorption cross section ``z^3 / T^3``.

    Raises:
        PositivityError: If any temperature is not strictly positive.
    """

    t = np.asarray(temperature, dtype=float)
    if np.any(t <= 0.0):
        raise PositivityError("sigma_a evaluated at non-positive temperature")
    return np.asarray(z, dtype=float) ** 3 / t**3  # type: ignore[return-value]


def face_diffusion_E(
    e_left: ArrayOrFloat,
    e_right: ArrayOrFloat,
    t_left: ArrayOrFloat,
    t_right: ArrayOrFloat,
    z_left: ArrayOrFloat,
    z_right: ArrayOrFloat,
    h_normal: float,
    limited: bool = True,
) -> ArrayOrFloat:
    """Flux-limited face diffusion coefficient for the radiation energy.

    ``D_r = T_f^3 / (3 (z_l^3 + z_r^3))`` with the arithmetic face temperature,
    then the Wilson form ``2 D_r / (1 + D_r |dE| / (h/2 (E_l + E_r)))``.
    """

    t_face = 0.5 * (np.asarray(t_left) + np.asarray(t_right))
    d_r = t_face**3 / (3.0 * (np.asarray(z_left) ** 3 + np.asarray(z_right) ** 3))
    if not limited:
        return 2.0 * d_r  # type: ignore[return-value]
    e_l = np.asarray(e_left)
    e_r = np.asarray(e_right)
    gradient_ratio = np.abs(e_r - e_l) / (0.5 * h_normal * (e_l + e_r))
    return 2.0 * d_r / (1.0 + d_r * gradient_ratio)  # type: ignore[return-value]


def face_diffusion_T(t_left: ArrayOrFloat, t_right: ArrayOrFloat, k: float) -> ArrayOrFloat:
    """Conduction coefficient ``k T_f^{5/2}`` at the arithmetic face temperature."""
    t_face = 0.5 * (np.asarray(t_left) + np.asarray(t_right))
    return k * t_face**2.5  # type: ignore[return-value]


def material_z(material: MaterialMap, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Atomic number at points (broadcast); the first region containing a point wins."""
    xs, ys, zs = np.broadcast_arrays(x, y, z)
    values = np.full(xs.shape, material.background_z, dtype=float)
    unset = np.ones(xs.shape, dtype=bool)
    for region in material.regions:
        inside = (
            (xs >= region.lower[0])
            & (xs <= region.upper[0])
            & (ys >= region.lower[1])
            & (ys <= region.upper[1])
            & (zs >= region.lower[2])
            & (zs <= region.upper[2])
        )
        hit = inside & unset
        values[hit] = region.z
        unset &= ~hit
    return values
