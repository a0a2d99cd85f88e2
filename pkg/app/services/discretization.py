"""
Cell-centered finite-volume discretization of the radiation diffusion system.

``f(u) = (div D_E grad E + s, div D_T grad T - s)`` with the exchange term
``s = sigma_a (T^4 - E)``, evaluated on the valid cells of the composite grid.
Face fluxes are per unit area; coarse faces on coarse-fine boundaries carry
the average of the overlapping fine fluxes.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.core.errors import PositivityError
from app.schemas.run_config import MaterialMap, PhysicsParams
from app.services.ghost_fill import GhostFiller, fill_coarse_fine, fill_neumann
from app.services.physics import face_diffusion_E, face_diffusion_T, material_z, sigma_a
from app.services.samr import Level, PatchHierarchy
from app.services.transfer import reflux, synchronize

logger = logging.getLogger(__name__)

FaceArrays = list[np.ndarray]


def face_slices(axis: int) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    """Slices of a padded array giving the cells left and right of every face along ``axis``."""
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def face_shape(padded_shape: Sequence[int], axis: int) -> tuple[int, int, int]:
    """Shape of a padded face array along ``axis``."""
    shape = [int(n) for n in padded_shape]
    shape[axis] -= 1
    return shape[0], shape[1], shape[2]


def divergence(fluxes: Sequence[np.ndarray], spacing: Sequence[float]) -> np.ndarray:
    """Interior divergence of per-unit-area face fluxes."""
    total = None
    for axis in range(3):
        diff = np.diff(fluxes[axis], axis=axis)
        inner = [slice(1, -1)] * 3
        inner[axis] = slice(None)
        term = diff[tuple(inner)] / spacing[axis]
        total = term if total is None else total + term
    assert total is not None
    return total


def level_fluxes(level: Level, d_faces: Sequence[np.ndarray], values: np.ndarray) -> FaceArrays:
    """Face fluxes ``D grad u`` of a ghost-filled padded array.

    Only faces inside the level window are evaluated; the rest stay zero.
    """

    window = values[level.window]
    out: FaceArrays = []
    for axis in range(3):
        lo, hi = face_slices(axis)
        faces = level.face_window(axis)
        flux = np.zeros(face_shape(level.padded_shape, axis))
        flux[faces] = d_faces[axis][faces] * (window[hi] - window[lo]) / level.spacing[axis]
        out.append(flux)
    return out


def level_divergence(level: Level, fluxes: Sequence[np.ndarray]) -> np.ndarray:
    """Divergence on the level core (shape of ``level.bounding_box``)."""
    return divergence([fluxes[axis][level.face_window(axis)] for axis in range(3)], level.spacing)


def mirror_physical(window: np.ndarray, level: Level) -> None:
    """Zero-gradient fill of the physical pad faces a level window touches."""
    box = level.bounding_box
    for axis in range(3):
        moved = np.moveaxis(window, axis, 0)
        if box.lower[axis] == 0:
            moved[0] = moved[1]
        if box.upper[axis] == level.shape[axis] - 1:
            moved[-1] = moved[-2]


def robin_ghost(
    e_interior: np.ndarray,
    t_interior: np.ndarray,
    z_interior: np.ndarray,
    h: float,
    r: float,
) -> np.ndarray:
    """Ghost energy density enforcing ``1/2 D dE/dn + E/4 = R`` on a boundary face.

    ``D = T^3 / (3 z^3)`` is the unlimited coefficient with the interior
    temperature. The two-point discretization gives
    ``g = (R + e (a - 1/8)) / (a + 1/8)`` with ``a = D / (2h)``.
    """

    a = t_interior**3 / (3.0 * z_interior**3) / (2.0 * h)
    return (r + e_interior * (a - 0.125)) / (a + 0.125)


def robin_ratio(d_face: np.ndarray, h: float) -> np.ndarray:
    """Derivative of the Robin ghost with respect to the interior value."""
    a = d_face / (2.0 * h)
    return (a - 0.125) / (a + 0.125)


def fill_physical_boundary(
    energy: np.ndarray,
    temperature: np.ndarray,
    level: Level,
    z: np.ndarray,
    params: PhysicsParams,
) -> None:
    """Fill the physical pad of one level in place.

    T is zero-Neumann everywhere; E is zero-Neumann except on the x=0 and x=1
    faces where the Robin condition holds (when enabled).
    """

    fill_neumann(temperature)
    fill_neumann(energy)
    if not params.robin_boundaries:
        return
    h = level.spacing[0]
    energy[0] = robin_ghost(energy[1], temperature[1], z[1], h, params.robin_r_left)
    energy[-1] = robin_ghost(energy[-2], temperature[-2], z[-2], h, params.robin_r_right)


@dataclass
class FrozenState:
    """Fields and face coefficients of one state, reused by the preconditioner.

    Attributes:
        energy: Ghost-filled padded E arrays per level.
        temperature: Ghost-filled padded T arrays per level.
        d_energy: Per level, per axis face coefficients of E.
        d_temperature: Per level, per axis face coefficients of T.
        sigma: sigma_a on valid cells (state order).
        t_cubed: T^3 on valid cells (state order).
    """

    energy: list[np.ndarray]
    temperature: list[np.ndarray]
    d_energy: list[FaceArrays]
    d_temperature: list[FaceArrays]
    sigma: np.ndarray
    t_cubed: np.ndarray


class RadiationDiffusion:
    """Spatial operator of the coupled E-T system on one hierarchy."""

    def __init__(self, hierarchy: PatchHierarchy, material: MaterialMap, params: PhysicsParams) -> None:
        self.hierarchy = hierarchy
        self.material = material
        self.params = params
        self.ghosts = GhostFiller(hierarchy)
        self.z: list[np.ndarray] = []
        for level in hierarchy.levels:
            x, y, zc = level.cell_centers(hierarchy.domain_lower)
            cells = material_z(material, x[:, None, None], y[None, :, None], zc[None, None, :])
            self.z.append(np.pad(cells, 1, mode="edge"))
        self._z_valid = hierarchy.gather(self.z)
        self._cache_key: np.ndarray | None = None
        self._cache: FrozenState | None = None
        self.evaluations = 0

    @property
    def n_valid(self) -> int:
        return self.hierarchy.n_valid

    def z_valid(self) -> np.ndarray:
        return self._z_valid

    def check_positive(self, state: np.ndarray) -> None:
        if not np.all(state > 0.0):
            n = self.n_valid
            bad = int(np.flatnonzero(~(state > 0.0))[0])
            variable = "E" if bad < n else "T"
            level_index, cell = self.hierarchy.locate(bad)
            raise PositivityError(
                f"non-positive {variable}={state[bad]:.3e} at level {level_index}, cell {cell}"
            )

    def prepare(self, state: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Unpack a state, synchronize covered cells, and fill every ghost."""
        self.check_positive(state)
        energy, temperature = self.hierarchy.unpack(state)
        synchronize(self.hierarchy, energy)
        synchronize(self.hierarchy, temperature)
        for index, level in enumerate(self.hierarchy.levels):
            stencil = self.ghosts.stencils[index]
            if stencil is not None:
                fill_coarse_fine(temperature[index], temperature[index - 1], stencil)
                fill_coarse_fine(energy[index], energy[index - 1], stencil)
            fill_physical_boundary(energy[index], temperature[index], level, self.z[index], self.params)
        return energy, temperature

    def face_coefficients(
        self, energy: np.ndarray, temperature: np.ndarray, level_index: int
    ) -> tuple[FaceArrays, FaceArrays]:
        """Face coefficients of one level from ghost-filled arrays.

        Physical faces see mirrored E and z, so the E coefficient there is the
        unlimited ``T^3 / (3 z^3)`` of the interior cell. Only faces inside
        the level window are evaluated; the others are zero.
        """

        level = self.hierarchy[level_index]
        window = level.window
        mirrored = energy[window].copy()
        mirror_physical(mirrored, level)
        t = temperature[window]
        z = self.z[level_index][window]
        d_energy: FaceArrays = []
        d_temperature: FaceArrays = []
        for axis in range(3):
            lo, hi = face_slices(axis)
            faces = level.face_window(axis)
            de = np.zeros(face_shape(level.padded_shape, axis))
            dt = np.zeros_like(de)
            de[faces] = face_diffusion_E(
                mirrored[lo],
                mirrored[hi],
                t[lo],
                t[hi],
                z[lo],
                z[hi],
                level.spacing[axis],
                limited=self.params.flux_limiter_on,
            )
            dt[faces] = face_diffusion_T(t[lo], t[hi], self.params.k_conduction)
            d_energy.append(de)
            d_temperature.append(dt)
        return d_energy, d_temperature

    def frozen_state(self, state: np.ndarray) -> FrozenState:
        """Fields and coefficients at ``state``; reuses the last residual evaluation when it matches."""
        if self._cache is not None and self._cache_key is not None and np.array_equal(self._cache_key, state):
            return self._cache
        energy, temperature = self.prepare(state)
        d_energy, d_temperature = [], []
        for index in range(self.hierarchy.num_levels):
            de, dt = self.face_coefficients(energy[index], temperature[index], index)
            d_energy.append(de)
            d_temperature.append(dt)
        t_valid = state[self.n_valid :]
        frozen = FrozenState(
            energy=energy,
            temperature=temperature,
            d_energy=d_energy,
            d_temperature=d_temperature,
            sigma=sigma_a(t_valid, self.z_valid()),
            t_cubed=t_valid**3,
        )
        self._cache_key = state.copy()
        self._cache = frozen
        return frozen

    def spatial_rhs(self, state: np.ndarray) -> np.ndarray:
        """Evaluate ``f(u)`` on all valid cells (state order).

        Raises:
            PositivityError: If E or T is not strictly positive on a valid cell.
        """

        self.evaluations += 1
        frozen = self.frozen_state(state)
        levels = self.hierarchy.levels
        flux_e = [level_fluxes(level, frozen.d_energy[i], frozen.energy[i]) for i, level in enumerate(levels)]
        flux_t = [
            level_fluxes(level, frozen.d_temperature[i], frozen.temperature[i]) for i, level in enumerate(levels)
        ]
        reflux(self.hierarchy, flux_e)
        reflux(self.hierarchy, flux_t)

        n = self.n_valid
        e_valid = state[:n]
        t_valid = state[n:]
        exchange = frozen.sigma * (t_valid**4 - e_valid)
        div_e = np.concatenate(
            [level_divergence(level, flux_e[i])[level.valid_core] for i, level in enumerate(levels)]
        )
        div_t = np.concatenate(
            [level_divergence(level, flux_t[i])[level.valid_core] for i, level in enumerate(levels)]
        )
        return np.concatenate([div_e + exchange, div_t - exchange])

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return self.spatial_rhs(state)


def spatial_rhs(
    hierarchy: PatchHierarchy,
    state: np.ndarray,
    material: MaterialMap,
    params: PhysicsParams,
) -> np.ndarray:
    """One-shot evaluation of ``f(u)``; build a :class:`RadiationDiffusion` to evaluate repeatedly."""
    return RadiationDiffusion(hierarchy, material, params).spatial_rhs(state)


def total_energy(hierarchy: PatchHierarchy, state: np.ndarray) -> tuple[float, float]:
    """Volume integrals of E and T over the composite grid."""
    volumes = hierarchy.cell_volumes()
    n = hierarchy.n_valid
    return float(volumes @ state[:n]), float(volumes @ state[n:])
