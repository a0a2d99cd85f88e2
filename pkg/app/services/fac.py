"""
Fast adaptive composite-grid (FAC) cycles for ``(I - beta div D grad) e = f``.

Used by the preconditioner to approximately invert the two scalar diffusion
blocks. Coefficients are frozen face arrays per level; boundary conditions are
the homogeneous (linearized) versions of the physical ones.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from app.core.errors import SolverError
from app.schemas.run_config import FacConfig
from app.services.discretization import FaceArrays, level_divergence, level_fluxes, robin_ratio
from app.services.ghost_fill import FACE_FINE_WEIGHT, GhostStencil, fill_coarse_fine, fill_neumann
from app.services.samr import PatchHierarchy, interior
from app.services.transfer import prolong_correction, reflux, synchronize

logger = logging.getLogger(__name__)


class LevelOperator:
    """Frozen-coefficient operator on one level with homogeneous ghosts.

    Work is confined to the level core (bounding box of its patches); the
    whole-level arrays it returns are zero outside that box.

    Args:
        hierarchy: Patch hierarchy.
        level_index: Level this operator acts on.
        d_faces: Face coefficients per axis (padded face layout).
        beta: Time-step scaling of the diffusion term.
        robin: Apply the linearized Robin ghost ``rho * e`` on the x faces.
        stencil: Coarse-fine ghost stencil of the level (``None`` on the base level).
    """

    def __init__(
        self,
        hierarchy: PatchHierarchy,
        level_index: int,
        d_faces: FaceArrays,
        beta: float,
        robin: bool = False,
        stencil: GhostStencil | None = None,
    ) -> None:
        self.hierarchy = hierarchy
        self.level = hierarchy[level_index]
        self.level_index = level_index
        self.d_faces = d_faces
        self.beta = beta
        self.stencil = stencil
        self.robin = robin
        h = self.level.spacing[0]
        if robin:
            self.rho_low = robin_ratio(d_faces[0][0], h)
            self.rho_high = robin_ratio(d_faces[0][-1], h)
        self.diagonal = np.ones(self.level.shape)
        self.diagonal[self.level.core] = self._core_diagonal()
        if np.any(self.diagonal[self.level.region] == 0.0):
            raise SolverError(f"zero diagonal in level {level_index} operator")

    def fill_physical(self, e: np.ndarray) -> None:
        fill_neumann(e)
        if self.robin:
            e[0] = self.rho_low * e[1]
            e[-1] = self.rho_high * e[-2]

    def fill_homogeneous(self, e: np.ndarray) -> None:
        if self.stencil is not None:
            fill_coarse_fine(e, None, self.stencil)
        self.fill_physical(e)

    def fluxes(self, e: np.ndarray) -> FaceArrays:
        return level_fluxes(self.level, self.d_faces, e)

    def apply_core(self, e: np.ndarray) -> np.ndarray:
        """``e - beta div(D grad e)`` on the level core; fills the ghosts of ``e``."""
        self.fill_homogeneous(e)
        return interior(e)[self.level.core] - self.beta * level_divergence(self.level, self.fluxes(e))

    def apply(self, e: np.ndarray) -> np.ndarray:
        """:meth:`apply_core` placed in a whole-level array."""
        out = np.zeros(self.level.shape)
        out[self.level.core] = self.apply_core(e)
        return out

    def _core_diagonal(self) -> np.ndarray:
        level = self.level
        box = level.bounding_box
        shape = box.shape
        diag = np.ones(shape)
        for axis in range(3):
            h2 = level.spacing[axis] ** 2
            moved = np.moveaxis(self.d_faces[axis][level.face_window(axis)], axis, 0)
            inner = moved[:, 1:-1, 1:-1]
            d_low = np.moveaxis(inner[:-1], 0, axis)
            d_high = np.moveaxis(inner[1:], 0, axis)
            c_low = np.zeros(shape)
            c_high = np.zeros(shape)
            low_side = np.moveaxis(c_low, axis, 0)
            high_side = np.moveaxis(c_high, axis, 0)
            at_low = box.lower[axis] == 0
            at_high = box.upper[axis] == level.shape[axis] - 1
            if self.robin and axis == 0:
                across = (level.core[1], level.core[2])
                if at_low:
                    c_low[0] = self.rho_low[1:-1, 1:-1][across]
                if at_high:
                    c_high[-1] = self.rho_high[1:-1, 1:-1][across]
            else:
                if at_low:
                    low_side[0] = 1.0
                if at_high:
                    high_side[-1] = 1.0
            if self.stencil is not None and self.stencil.face_cells.size:
                on_axis = self.stencil.face_axis == axis
                offset = np.asarray(box.lower)
                for side, target in ((-1, c_low), (1, c_high)):
                    pick = on_axis & (self.stencil.face_side == side)
                    target[tuple((self.stencil.face_cells[pick] - offset).T)] = FACE_FINE_WEIGHT
            diag += self.beta * (d_low * (1.0 - c_low) + d_high * (1.0 - c_high)) / h2
        return diag

    def new_padded(self) -> np.ndarray:
        return np.zeros(self.level.padded_shape)


def _colours(op: LevelOperator) -> tuple[np.ndarray, np.ndarray]:
    """Red and black cells of the level region inside the core, by parity of ``i + j + k``."""
    box = op.level.bounding_box
    region = op.level.region[op.level.core]
    parity = (np.indices(box.shape).sum(axis=0) + sum(box.lower)) % 2
    return region & (parity == 0), region & (parity == 1)


def smooth_redblack(op: LevelOperator, e: np.ndarray, f: np.ndarray, sweeps: int) -> np.ndarray:
    """Red-black Gauss-Seidel on the level region; colours by parity of ``i + j + k``."""
    core = op.level.core
    colours = _colours(op)
    rhs = f[core]
    diagonal = op.diagonal[core]
    for _ in range(sweeps):
        for colour in colours:
            residual = rhs - op.apply_core(e)
            values = interior(e)[core]
            values[colour] += residual[colour] / diagonal[colour]
    return e


def smooth_jacobi(op: LevelOperator, e: np.ndarray, f: np.ndarray, sweeps: int, weight: float = 0.8) -> np.ndarray:
    """Damped Jacobi on the level region."""
    core = op.level.core
    region = op.level.region[core]
    rhs = f[core]
    diagonal = op.diagonal[core]
    for _ in range(sweeps):
        residual = rhs - op.apply_core(e)
        values = interior(e)[core]
        values[region] += weight * residual[region] / diagonal[region]
    return e


class CompositeOperator:
    """The operator on valid cells of the whole hierarchy, with full coarse-fine coupling."""

    def __init__(self, hierarchy: PatchHierarchy, levels: Sequence[LevelOperator]) -> None:
        self.hierarchy = hierarchy
        self.levels = list(levels)

    @property
    def beta(self) -> float:
        return self.levels[0].beta

    def apply(self, x: np.ndarray) -> np.ndarray:
        arrays = self.hierarchy.unpack_scalar(x, fill=0.0)
        synchronize(self.hierarchy, arrays)
        for index, op in enumerate(self.levels):
            if op.stencil is not None:
                fill_coarse_fine(arrays[index], arrays[index - 1], op.stencil)
            op.fill_physical(arrays[index])
        fluxes = [op.fluxes(arrays[index]) for index, op in enumerate(self.levels)]
        reflux(self.hierarchy, fluxes)
        parts = []
        for index, op in enumerate(self.levels):
            level = op.level
            values = interior(arrays[index])[level.core] - op.beta * level_divergence(level, fluxes[index])
            parts.append(values[level.valid_core])
        return np.concatenate(parts)

    def residual(self, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
        return rhs - self.apply(x)

    def restrict_composite(self, r: np.ndarray, level_index: int) -> np.ndarray:
        """Composite residual seen by one level: valid values, averages over covered cells."""
        arrays = self.hierarchy.unpack_scalar(r, fill=0.0)
        synchronize(self.hierarchy, arrays)
        level = self.hierarchy[level_index]
        out = np.zeros(level.shape)
        out[level.core] = np.where(level.region[level.core], interior(arrays[level_index])[level.core], 0.0)
        return out

    def prolong_composite(self, e: np.ndarray, level_index: int) -> np.ndarray:
        """Composite correction from a level correction: interpolated into every finer level."""
        parts = []
        current = e
        for index, level in enumerate(self.hierarchy.levels):
            if index < level_index:
                parts.append(np.zeros(level.n_valid))
                continue
            if index > level_index:
                box = level.bounding_box
                fine = np.zeros(level.shape)
                fine[level.core] = prolong_correction(current, box.coarsen())
                current = fine
            parts.append(current[level.core][level.valid_core])
        return np.concatenate(parts)


def fac_vcycle(
    composite: CompositeOperator,
    rhs: np.ndarray,
    u: np.ndarray,
    config: FacConfig,
) -> np.ndarray:
    """One V(m, n) FAC cycle on ``A u = rhs`` over valid cells; returns the improved ``u``."""
    u = u.copy()
    finest = composite.hierarchy.num_levels - 1

    def correct(level_index: int, sweeps: int) -> None:
        nonlocal u
        if sweeps == 0:
            return
        op = composite.levels[level_index]
        f = composite.restrict_composite(composite.residual(rhs, u), level_index)
        e = op.new_padded()
        _smooth(op, e, f, sweeps, config)
        u = u + composite.prolong_composite(interior(e), level_index)

    for level_index in range(finest, 0, -1):
        correct(level_index, config.pre_sweeps)
    correct(0, config.coarse_sweeps)
    for level_index in range(1, finest + 1):
        correct(level_index, config.post_sweeps)
    return u


def fac_solve(
    composite: CompositeOperator,
    rhs: np.ndarray,
    config: FacConfig,
    cycles: int = 1,
    u0: np.ndarray | None = None,
    trace: list[float] | None = None,
) -> np.ndarray:
    """Run ``cycles`` V-cycles from ``u0`` (zero by default).

    When ``trace`` is given, the composite residual norm before the first
    cycle and after every cycle is appended to it.
    """

    u = np.zeros_like(rhs) if u0 is None else u0.copy()
    if trace is not None:
        trace.append(float(np.linalg.norm(composite.residual(rhs, u))))
    for _ in range(cycles):
        u = fac_vcycle(composite, rhs, u, config)
        if trace is not None:
            trace.append(float(np.linalg.norm(composite.residual(rhs, u))))
    return u


def _smooth(op: LevelOperator, e: np.ndarray, f: np.ndarray, sweeps: int, config: FacConfig) -> None:
    if config.smoother == "jacobi":
        smooth_jacobi(op, e, f, sweeps, config.jacobi_weight)
    else:
        smooth_redblack(op, e, f, sweeps)


def build_operators(
    hierarchy: PatchHierarchy,
    d_faces: Sequence[FaceArrays],
    beta: float,
    stencils: Sequence[GhostStencil | None],
    robin: bool = False,
) -> CompositeOperator:
    """Level and composite operators of one scalar block."""
    levels = [
        LevelOperator(hierarchy, index, d_faces[index], beta, robin, stencils[index])
        for index in range(hierarchy.num_levels)
    ]
    return CompositeOperator(hierarchy, levels)
