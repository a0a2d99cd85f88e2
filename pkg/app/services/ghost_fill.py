"""
Coarse-fine ghost interpolation.

Face ghosts use the two-stage scheme: bilinear interpolation of four coarse
values in the coarse plane holding the ghost's parent, then linear
interpolation along the normal between that value and the adjacent fine
interior cell (``g = 2/3 i + 1/3 f``). Edge and corner ghosts use trilinear
interpolation of the eight surrounding coarse cells. Where a tangential
donor would fall outside the physical domain the coarse interpolant is
extrapolated one-sidedly from the parent and its inward neighbour, so
linear fields are reproduced next to the boundary too.

Stencils are precomputed once per level as flat padded indices and weights so
a fill is a single gather-and-sum.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from app.core.errors import MissingDonorError
from app.services.samr import PAD, RATIO, Level, PatchHierarchy, coarse_fine_fragments

FACE_FINE_WEIGHT = 1.0 / 3.0
FACE_COARSE_WEIGHT = 2.0 / 3.0

BoundaryFill = Callable[[np.ndarray, Level], None]


@dataclass
class GhostStencil:
    """Precomputed coarse-fine interpolation for all ghosts of one level.

    Attributes:
        ghosts: Flat padded indices of the ghost cells on the fine level.
        fine_donors: Flat padded indices of the adjacent fine interior cells.
        fine_weights: 1/3 for face ghosts, 0 for edge and corner ghosts.
        coarse_donors: (G, 8) flat padded indices on the coarser level.
        coarse_weights: (G, 8) weights matching ``coarse_donors``.
        face_cells: (F, 3) interior indices of fine cells that donate to a face ghost.
        face_axis: Normal axis of each of those face ghosts.
        face_side: +1 if the ghost sits on the high side of its donor, else -1.
    """

    ghosts: np.ndarray
    fine_donors: np.ndarray
    fine_weights: np.ndarray
    coarse_donors: np.ndarray
    coarse_weights: np.ndarray
    face_cells: np.ndarray
    face_axis: np.ndarray
    face_side: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ghosts.size)


def _axis_weights(
    fine_index: np.ndarray, coarse_extent: int, normal: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Two-point interpolation weights of fine centres from coarse centres along one axis.

    Returns parent index, second donor index and their weights. ``normal``
    marks ghosts for which this axis is the face normal (parent only). When
    the nearer neighbour lies outside the domain the value is extrapolated
    linearly from the parent and its inward neighbour.
    """

    parent = fine_index // RATIO
    step = np.where(fine_index % RATIO == 1, 1, -1)
    neighbour = parent + step
    outside = (neighbour < 0) | (neighbour >= coarse_extent)
    extrapolate = outside & ~normal
    w_parent = np.where(normal, 1.0, np.where(extrapolate, 1.25, 0.75))
    w_neighbour = np.where(normal, 0.0, np.where(extrapolate, -0.25, 0.25))
    neighbour = np.where(normal, parent, np.where(extrapolate, parent - step, neighbour))
    return parent, neighbour, w_parent, w_neighbour


def build_ghost_stencil(hierarchy: PatchHierarchy, level_index: int) -> GhostStencil:
    """Classify the coarse-fine ghosts of a level and build their interpolation stencil.

    Raises:
        MissingDonorError: If a coarse donor lies outside the coarser level's
            footprint (the hierarchy is not properly nested).
    """

    if level_index < 1:
        raise ValueError("the base level has no coarse-fine ghosts")
    fine = hierarchy[level_index]
    coarse = hierarchy[level_index - 1]
    fragments = coarse_fine_fragments(fine.region)
    if not fragments:
        empty_i = np.zeros(0, dtype=np.intp)
        return GhostStencil(
            empty_i,
            empty_i,
            np.zeros(0),
            np.zeros((0, 8), dtype=np.intp),
            np.zeros((0, 8)),
            np.zeros((0, 3), dtype=np.intp),
            empty_i,
            empty_i,
        )

    cells = np.concatenate([f.fine_cells for f in fragments])
    donors = np.concatenate([f.fine_donors for f in fragments])
    is_face = np.concatenate([np.full(len(f.fine_cells), f.kind == "face") for f in fragments])
    normal_axis = np.concatenate(
        [
            np.full(
                len(f.fine_cells),
                int(np.flatnonzero(f.orientation)[0]) if f.kind == "face" else -1,
            )
            for f in fragments
        ]
    )

    per_axis = [
        _axis_weights(cells[:, axis], coarse.shape[axis], normal_axis == axis) for axis in range(3)
    ]
    coarse_idx = np.empty((len(cells), 8), dtype=np.intp)
    coarse_w = np.empty((len(cells), 8))
    column = 0
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                ix = per_axis[0][cx]
                iy = per_axis[1][cy]
                iz = per_axis[2][cz]
                weight = per_axis[0][2 + cx] * per_axis[1][2 + cy] * per_axis[2][2 + cz]
                live = weight != 0.0
                bad = live & ~coarse.region[ix, iy, iz]
                if bad.any():
                    ghost = tuple(int(c) for c in cells[np.flatnonzero(bad)[0]])
                    raise MissingDonorError(
                        f"coarse donor for ghost {ghost} on level {level_index} lies outside "
                        f"level {level_index - 1}"
                    )
                coarse_idx[:, column] = np.ravel_multi_index(
                    (ix + PAD, iy + PAD, iz + PAD), coarse.padded_shape
                )
                coarse_w[:, column] = weight
                column += 1

    coarse_w *= np.where(is_face, FACE_COARSE_WEIGHT, 1.0)[:, None]
    fine_w = np.where(is_face, FACE_FINE_WEIGHT, 0.0)
    ghosts = np.ravel_multi_index(tuple((cells + PAD).T), fine.padded_shape)
    fine_donors = np.ravel_multi_index(tuple((donors + PAD).T), fine.padded_shape)

    face_axis = normal_axis[is_face]
    face_cells = donors[is_face]
    face_side = (cells - donors)[is_face, face_axis] if is_face.any() else np.zeros(0, dtype=np.intp)
    return GhostStencil(
        ghosts=ghosts,
        fine_donors=fine_donors,
        fine_weights=fine_w,
        coarse_donors=coarse_idx,
        coarse_weights=coarse_w,
        face_cells=face_cells,
        face_axis=face_axis,
        face_side=np.asarray(face_side, dtype=np.intp),
    )


def fill_coarse_fine(
    fine: np.ndarray,
    coarse: np.ndarray | None,
    stencil: GhostStencil,
) -> None:
    """Fill the coarse-fine ghosts of a padded fine array in place.

    With ``coarse=None`` the coarse contribution is dropped (homogeneous fill
    used by the level smoothers).
    """

    if stencil.size == 0:
        return
    values = stencil.fine_weights * np.take(fine, stencil.fine_donors)
    if coarse is not None:
        values = values + (stencil.coarse_weights * np.take(coarse, stencil.coarse_donors)).sum(axis=1)
    np.put(fine, stencil.ghosts, values)


def fill_neumann(array: np.ndarray, level: Level | None = None) -> None:
    """Zero-gradient fill of the six physical pad faces (ghost = adjacent interior)."""
    array[0, :, :] = array[1, :, :]
    array[-1, :, :] = array[-2, :, :]
    array[:, 0, :] = array[:, 1, :]
    array[:, -1, :] = array[:, -2, :]
    array[:, :, 0] = array[:, :, 1]
    array[:, :, -1] = array[:, :, -2]


class GhostFiller:
    """Caches the per-level stencils of a hierarchy."""

    def __init__(self, hierarchy: PatchHierarchy) -> None:
        self.hierarchy = hierarchy
        self.stencils: list[GhostStencil | None] = [None] + [
            build_ghost_stencil(hierarchy, index) for index in range(1, hierarchy.num_levels)
        ]

    def fill(
        self,
        level_index: int,
        field: Sequence[np.ndarray],
        boundary: BoundaryFill | None = None,
    ) -> None:
        """Fill every ghost of one level: coarse-fine cells, then the physical pad."""
        stencil = self.stencils[level_index]
        if stencil is not None:
            fill_coarse_fine(field[level_index], field[level_index - 1], stencil)
        (boundary or fill_neumann)(field[level_index], self.hierarchy[level_index])

    def fill_all(self, field: Sequence[np.ndarray], boundary: BoundaryFill | None = None) -> None:
        for index in range(self.hierarchy.num_levels):
            self.fill(index, field, boundary)


def fill_ghost(
    hierarchy: PatchHierarchy,
    level_index: int,
    field: Sequence[np.ndarray],
    boundary: BoundaryFill | None = None,
) -> None:
    """Fill the ghost frame of every patch on ``level_index``.

    Same-level ghosts already hold sibling data (shared level storage);
    coarse-fine ghosts are interpolated from ``field[level_index - 1]``, which
    must be synchronized on covered cells; the physical pad is filled by
    ``boundary`` (zero-gradient when omitted).

    Raises:
        MissingDonorError: If the hierarchy is not properly nested.
    """

    if level_index > 0:
        fill_coarse_fine(
            field[level_index], field[level_index - 1], build_ghost_stencil(hierarchy, level_index)
        )
    (boundary or fill_neumann)(field[level_index], hierarchy[level_index])
