"""
Inter-level transfer operators and coarse-fine flux matching.

All operators work on interior arrays covering a whole level (shape
``level.shape``) unless stated otherwise; face arrays follow the padded
layout used by the discretization: along their axis they hold ``n + 1``
faces (face ``f`` separates padded cells ``f`` and ``f + 1``), across it the
full padded extent ``n + 2``.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from app.services.samr import RATIO, IndexBox, PatchHierarchy, interior


def restrict(fine: np.ndarray) -> np.ndarray:
    """Mean of the ``2x2x2`` children of every coarse cell."""
    nx, ny, nz = (s // RATIO for s in fine.shape)
    return fine.reshape(nx, RATIO, ny, RATIO, nz, RATIO).mean(axis=(1, 3, 5))


def synchronize(hierarchy: PatchHierarchy, arrays: Sequence[np.ndarray]) -> None:
    """Overwrite covered coarse cells with the average of their fine children, finest first."""
    for index in range(hierarchy.num_levels - 1, 0, -1):
        coarse_level = hierarchy[index - 1]
        box = hierarchy[index].bounding_box
        parents = box.coarsen().slices()
        averaged = restrict(interior(arrays[index])[box.slices()])
        target = interior(arrays[index - 1])[parents]
        covered = coarse_level.covered[parents]
        target[covered] = averaged[covered]


def _refine_axis(padded: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation to the two children along one axis; drops the pad on that axis."""
    moved = np.moveaxis(padded, axis, 0)
    centre = moved[1:-1]
    out = np.empty((2 * centre.shape[0],) + centre.shape[1:])
    out[0::2] = 0.75 * centre + 0.25 * moved[:-2]
    out[1::2] = 0.75 * centre + 0.25 * moved[2:]
    return np.moveaxis(out, 0, axis)


def prolong_correction(coarse: np.ndarray, box: IndexBox | None = None) -> np.ndarray:
    """Trilinear interpolation of coarse cell values to fine cell centres.

    Only the children of ``box`` (coarse indices, whole array by default) are
    produced; the result has shape ``box.refine().shape``. Neighbours inside
    the array are read from ``coarse``, physical-boundary neighbours are
    linearly extrapolated, so linear fields are reproduced everywhere.
    """

    if box is None:
        box = IndexBox.from_shape(coarse.shape)
    lower = [max(lo - 1, 0) for lo in box.lower]
    upper = [min(up + 1, n - 1) for up, n in zip(box.upper, coarse.shape, strict=True)]
    source = coarse[lower[0] : upper[0] + 1, lower[1] : upper[1] + 1, lower[2] : upper[2] + 1]
    widths = [
        (int(box.lower[axis] == 0), int(box.upper[axis] == coarse.shape[axis] - 1)) for axis in range(3)
    ]
    padded = np.pad(source, widths, mode="reflect", reflect_type="odd")
    for axis in range(3):
        padded = _refine_axis(padded, axis)
    return padded


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def prolong_conservative(coarse: np.ndarray) -> np.ndarray:
    """Slope-limited linear refinement.

    Each fine child gets ``c + sum_a (+-) s_a / 4`` with a minmod slope per
    axis, so children average back to the coarse value and never leave the
    min/max of the coarse cell and its face neighbours.

    Cells on the physical boundary see a mirrored neighbour, which gives a
    zero slope across that boundary: their children along the boundary
    normal are flat, and linear fields are reproduced only in cells away from
    the boundary. A one-sided slope there would overshoot the data, which
    the positivity of transferred states does not allow.
    """

    padded = np.pad(coarse, 1, mode="edge")
    fine = np.repeat(np.repeat(np.repeat(coarse, RATIO, axis=0), RATIO, axis=1), RATIO, axis=2)
    for axis in range(3):
        moved = np.moveaxis(padded, axis, 0)
        centre = moved[1:-1]
        slope = _minmod(moved[2:] - centre, centre - moved[:-2])
        slope = np.moveaxis(slope, 0, axis)
        inner = [slice(1, -1)] * 3
        inner[axis] = slice(None)
        slope = slope[tuple(inner)]
        signs = np.tile(np.array([-0.25, 0.25]), coarse.shape[axis])
        shape = [1, 1, 1]
        shape[axis] = signs.size
        expanded = slope
        for other in range(3):
            expanded = np.repeat(expanded, RATIO, axis=other)
        fine = fine + expanded * signs.reshape(shape)
    return fine


# flux matching ----------------------------------------------------------


def _face_pair(mask: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return padded[tuple(lo)], padded[tuple(hi)]


def coarse_fine_faces(hierarchy: PatchHierarchy, level_index: int, axis: int) -> np.ndarray:
    """Faces of ``level_index`` separating a valid cell from a cell covered by the next level."""
    level = hierarchy[level_index]
    valid_lo, valid_hi = _face_pair(level.valid, axis)
    covered_lo, covered_hi = _face_pair(level.covered, axis)
    return (valid_lo & covered_hi) | (covered_lo & valid_hi)


def coarsen_face_flux(fine_faces: np.ndarray, axis: int) -> np.ndarray:
    """Average the four fine faces under every coarse face (per unit area).

    The result has the coarse face-array shape; entries away from coincident
    faces are meaningless and only used through a mask.
    """

    moved = np.moveaxis(fine_faces, axis, 0)[::RATIO]
    inner = moved[:, 1:-1, 1:-1]
    m, a, b = inner.shape
    averaged = inner.reshape(m, a // RATIO, RATIO, b // RATIO, RATIO).mean(axis=(2, 4))
    out = np.zeros((m, a // RATIO + 2, b // RATIO + 2))
    out[:, 1:-1, 1:-1] = averaged
    return np.moveaxis(out, 0, axis)


def match_fluxes(
    hierarchy: PatchHierarchy,
    level_index: int,
    face_fluxes: Sequence[Sequence[np.ndarray]],
) -> list[np.ndarray]:
    """Replace coarse fluxes on the coarse-fine boundary with averaged fine fluxes.

    Args:
        hierarchy: Patch hierarchy.
        level_index: Coarse level to correct from ``level_index + 1``.
        face_fluxes: Per level, per axis face fluxes per unit area.

    Returns:
        list[np.ndarray]: Corrected face fluxes of ``level_index`` (one per axis).
    """

    corrected = []
    for axis in range(3):
        coarse_faces = face_fluxes[level_index][axis]
        mask = coarse_fine_faces(hierarchy, level_index, axis)
        averaged = coarsen_face_flux(face_fluxes[level_index + 1][axis], axis)
        corrected.append(np.where(mask, averaged, coarse_faces))
    return corrected


def reflux(hierarchy: PatchHierarchy, face_fluxes: list[list[np.ndarray]]) -> None:
    """Apply :func:`match_fluxes` in place on every level pair, finest first."""
    for index in range(hierarchy.num_levels - 2, -1, -1):
        face_fluxes[index] = match_fluxes(hierarchy, index, face_fluxes)
