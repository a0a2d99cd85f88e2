"""
Structured AMR patch hierarchy.

Every level indexes its fields as one padded array over the whole domain at
that level's resolution (interior cell ``i`` lives at padded index ``i + 1``).
Patches are index boxes into those arrays, so same-level ghost exchange is
implicit: a patch's ghost frame that overlaps a sibling patch already holds
the sibling's interior values. Masks mark the level footprint (``region``)
and the cells not covered by a finer level (``valid``); the discrete problem
lives on the valid cells of all levels. Arithmetic on a level is confined to
the bounding box of its patches (``Level.core``) plus one ghost layer
(``Level.window``), so a small fine level costs what its patches cost.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import product
from typing import Literal

import numpy as np

from app.core.errors import HierarchyError, NestingError

logger = logging.getLogger(__name__)

Index3 = tuple[int, int, int]
Real3 = tuple[float, float, float]

RATIO = 2
PAD = 1

FragmentKind = Literal["face", "edge", "corner"]


@dataclass(frozen=True, order=True)
class IndexBox:
    """Inclusive box of cell indices on one level."""

    lower: Index3
    upper: Index3

    def __post_init__(self) -> None:
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise ValueError("IndexBox needs 3D lower/upper corners")
        if any(lo > up for lo, up in zip(self.lower, self.upper, strict=True)):
            raise ValueError(f"empty box {self.lower}..{self.upper}")

    def __str__(self) -> str:
        return f"[{self.lower}..{self.upper}]"

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> IndexBox:
        return cls((0, 0, 0), (shape[0] - 1, shape[1] - 1, shape[2] - 1))

    @property
    def shape(self) -> Index3:
        return (
            self.upper[0] - self.lower[0] + 1,
            self.upper[1] - self.lower[1] + 1,
            self.upper[2] - self.lower[2] + 1,
        )

    @property
    def volume(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def slices(self, offset: int = 0) -> tuple[slice, slice, slice]:
        """Array slices selecting the box, shifted by ``offset`` (use ``PAD`` for padded arrays)."""
        return (
            slice(self.lower[0] + offset, self.upper[0] + offset + 1),
            slice(self.lower[1] + offset, self.upper[1] + offset + 1),
            slice(self.lower[2] + offset, self.upper[2] + offset + 1),
        )

    def grow(self, width: int) -> IndexBox:
        return IndexBox(
            (self.lower[0] - width, self.lower[1] - width, self.lower[2] - width),
            (self.upper[0] + width, self.upper[1] + width, self.upper[2] + width),
        )

    def refine(self, ratio: int = RATIO) -> IndexBox:
        return IndexBox(
            (self.lower[0] * ratio, self.lower[1] * ratio, self.lower[2] * ratio),
            (
                (self.upper[0] + 1) * ratio - 1,
                (self.upper[1] + 1) * ratio - 1,
                (self.upper[2] + 1) * ratio - 1,
            ),
        )

    def coarsen(self, ratio: int = RATIO) -> IndexBox:
        return IndexBox(
            (self.lower[0] // ratio, self.lower[1] // ratio, self.lower[2] // ratio),
            (self.upper[0] // ratio, self.upper[1] // ratio, self.upper[2] // ratio),
        )

    def intersection(self, other: IndexBox) -> IndexBox | None:
        lower = tuple(max(a, b) for a, b in zip(self.lower, other.lower, strict=True))
        upper = tuple(min(a, b) for a, b in zip(self.upper, other.upper, strict=True))
        if any(lo > up for lo, up in zip(lower, upper, strict=True)):
            return None
        return IndexBox(lower, upper)  # type: ignore[arg-type]

    def intersects(self, other: IndexBox) -> bool:
        return self.intersection(other) is not None

    def contains(self, other: IndexBox) -> bool:
        return all(a <= b for a, b in zip(self.lower, other.lower, strict=True)) and all(
            a >= b for a, b in zip(self.upper, other.upper, strict=True)
        )


@dataclass
class Patch:
    """A rectangular block of cells on one level, viewed through its ghost frame."""

    box: IndexBox
    level_index: int
    ghost_width: int = PAD

    def __post_init__(self) -> None:
        if self.ghost_width < 1 or self.ghost_width > PAD:
            raise ValueError(f"ghost_width must be 1..{PAD}")

    def window(self, array: np.ndarray) -> np.ndarray:
        """View of the patch interior plus ghost frame inside a padded level array."""
        return array[self.box.grow(self.ghost_width).slices(offset=PAD)]

    def interior(self, array: np.ndarray) -> np.ndarray:
        return array[self.box.slices(offset=PAD)]


@dataclass
class Level:
    """One refinement level: patches, spacing, and footprint masks."""

    index: int
    shape: Index3
    spacing: Real3
    ratio_to_coarser: int
    patches: list[Patch]
    region: np.ndarray
    covered: np.ndarray = field(init=False)
    valid: np.ndarray = field(init=False)
    bounding_box: IndexBox = field(init=False)

    def __post_init__(self) -> None:
        self.covered = np.zeros(self.shape, dtype=bool)
        self.valid = self.region.copy()
        cells = np.argwhere(self.region)
        if cells.size:
            lower = cells.min(axis=0)
            upper = cells.max(axis=0)
            self.bounding_box = IndexBox(
                (int(lower[0]), int(lower[1]), int(lower[2])),
                (int(upper[0]), int(upper[1]), int(upper[2])),
            )
        else:
            self.bounding_box = IndexBox.from_shape(self.shape)

    @property
    def core(self) -> tuple[slice, slice, slice]:
        """Interior-array slices of the bounding box of the level's patches."""
        return self.bounding_box.slices()

    @property
    def window(self) -> tuple[slice, slice, slice]:
        """Padded-array slices of the bounding box plus one ghost layer."""
        return self.bounding_box.grow(PAD).slices(offset=PAD)

    def face_window(self, axis: int) -> tuple[slice, slice, slice]:
        """Slices of a padded face array along ``axis`` holding the faces inside :attr:`window`."""
        window = list(self.window)
        window[axis] = slice(window[axis].start, window[axis].stop - 1)
        return window[0], window[1], window[2]

    @property
    def valid_core(self) -> np.ndarray:
        """``valid`` restricted to :attr:`core` (same cell order as ``valid``)."""
        return self.valid[self.core]

    @property
    def padded_shape(self) -> Index3:
        return (self.shape[0] + 2 * PAD, self.shape[1] + 2 * PAD, self.shape[2] + 2 * PAD)

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def boxes(self) -> list[IndexBox]:
        return [patch.box for patch in self.patches]

    @property
    def domain_box(self) -> IndexBox:
        return IndexBox.from_shape(self.shape)

    def cell_centers(self, lower: Real3, padded: bool = False) -> tuple[np.ndarray, ...]:
        """1D cell-center coordinates per axis (optionally including the pad cells)."""
        start = -PAD if padded else 0
        centers = []
        for axis in range(3):
            count = self.shape[axis] + (2 * PAD if padded else 0)
            idx = np.arange(start, start + count, dtype=float)
            centers.append(lower[axis] + (idx + 0.5) * self.spacing[axis])
        return tuple(centers)


def _region_from_boxes(shape: Index3, boxes: Sequence[IndexBox]) -> np.ndarray:
    region = np.zeros(shape, dtype=bool)
    for box in boxes:
        region[box.slices()] = True
    return region


def coarsen_mask(mask: np.ndarray, ratio: int = RATIO) -> np.ndarray:
    """Coarse cells that contain at least one marked fine cell."""
    nx, ny, nz = (s // ratio for s in mask.shape)
    return mask.reshape(nx, ratio, ny, ratio, nz, ratio).any(axis=(1, 3, 5))


def refine_mask(mask: np.ndarray, ratio: int = RATIO) -> np.ndarray:
    out = np.repeat(mask, ratio, axis=0)
    out = np.repeat(out, ratio, axis=1)
    return np.repeat(out, ratio, axis=2)


def dilate_mask(mask: np.ndarray, width: int = 1) -> np.ndarray:
    """Dilate by ``width`` cells in every direction (including diagonals), clipped to the array."""
    out = mask.copy()
    for _ in range(width):
        padded = np.pad(out, 1, mode="constant", constant_values=False)
        grown = np.zeros_like(out)
        nx, ny, nz = out.shape
        for dx, dy, dz in product((0, 1, 2), repeat=3):
            grown |= padded[dx : dx + nx, dy : dy + ny, dz : dz + nz]
        out = grown
    return out


class PatchHierarchy:
    """Nested levels of patches over a box-shaped physical domain."""

    def __init__(
        self,
        domain_lower: Real3,
        domain_upper: Real3,
        levels: list[Level],
        max_levels: int,
    ) -> None:
        if not levels:
            raise HierarchyError("a hierarchy needs at least the base level")
        if len(levels) > max_levels:
            raise HierarchyError(f"{len(levels)} levels exceed max_levels={max_levels}")
        self.domain_lower = domain_lower
        self.domain_upper = domain_upper
        self.levels = levels
        self.max_levels = max_levels
        for coarse, fine in zip(levels[:-1], levels[1:], strict=False):
            coarse.covered = coarsen_mask(fine.region)
            coarse.valid = coarse.region & ~coarse.covered
        levels[-1].covered = np.zeros(levels[-1].shape, dtype=bool)
        levels[-1].valid = levels[-1].region.copy()
        self._counts = [level.n_valid for level in levels]
        self._offsets = np.concatenate([[0], np.cumsum(self._counts)]).astype(int)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> Level:
        return self.levels[index]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def base_shape(self) -> Index3:
        return self.levels[0].shape

    @property
    def n_valid(self) -> int:
        """Number of valid cells (unknowns per variable)."""
        return int(self._offsets[-1])

    @property
    def valid_counts(self) -> list[int]:
        return list(self._counts)

    def level_slice(self, level_index: int) -> slice:
        return slice(int(self._offsets[level_index]), int(self._offsets[level_index + 1]))

    def finest_uniform_cells(self) -> int:
        """Cells of a uniform grid at the finest resolution this hierarchy may reach."""
        scale = RATIO ** (self.max_levels - 1)
        nx, ny, nz = self.base_shape
        return nx * ny * nz * scale**3

    def equivalent_resolution(self) -> int:
        """Finest resolution (cells along x) reachable with ``max_levels``."""
        return self.base_shape[0] * RATIO ** (self.max_levels - 1)

    def footprints(self) -> list[np.ndarray]:
        return [level.region for level in self.levels]

    def same_layout(self, other: PatchHierarchy) -> bool:
        if self.num_levels != other.num_levels or self.base_shape != other.base_shape:
            return False
        return all(
            np.array_equal(a.region, b.region)
            for a, b in zip(self.levels, other.levels, strict=True)
        )

    # level arrays -------------------------------------------------------

    def new_arrays(self, fill: float = 1.0) -> list[np.ndarray]:
        """Fresh padded arrays, one per level, filled with ``fill``."""
        return [np.full(level.padded_shape, fill, dtype=float) for level in self.levels]

    def gather(self, arrays: Sequence[np.ndarray]) -> np.ndarray:
        """Valid-cell values of one scalar, concatenated coarsest level first."""
        return np.concatenate(
            [interior(arr)[level.core][level.valid_core] for level, arr in zip(self.levels, arrays, strict=True)]
        )

    def scatter(self, values: np.ndarray, arrays: Sequence[np.ndarray]) -> None:
        """Write valid-cell values into the padded level arrays."""
        for index, (level, arr) in enumerate(zip(self.levels, arrays, strict=True)):
            core = interior(arr)[level.core]
            core[level.valid_core] = values[self.level_slice(index)]

    def unpack_scalar(self, values: np.ndarray, fill: float = 1.0) -> list[np.ndarray]:
        arrays = self.new_arrays(fill)
        self.scatter(values, arrays)
        return arrays

    def pack(self, energy: Sequence[np.ndarray], temperature: Sequence[np.ndarray]) -> np.ndarray:
        """State vector: E on all valid cells, then T on all valid cells."""
        return np.concatenate([self.gather(energy), self.gather(temperature)])

    def unpack(self, state: np.ndarray, fill: float = 1.0) -> tuple[list[np.ndarray], list[np.ndarray]]:
        n = self.n_valid
        if state.shape != (2 * n,):
            raise HierarchyError(f"state of size {state.size} does not match 2x{n} valid cells")
        return self.unpack_scalar(state[:n], fill), self.unpack_scalar(state[n:], fill)

    def cell_volumes(self) -> np.ndarray:
        """Volume of every valid cell, in state order (one variable)."""
        return np.concatenate(
            [np.full(count, level.cell_volume) for level, count in zip(self.levels, self._counts, strict=True)]
        )

    def locate(self, index: int) -> tuple[int, Index3]:
        """Level and interior cell of a single-variable state index."""
        index = index % self.n_valid
        level_index = int(np.searchsorted(self._offsets, index, side="right") - 1)
        cells = np.argwhere(self.levels[level_index].valid)
        cell = cells[index - self._offsets[level_index]]
        return level_index, (int(cell[0]), int(cell[1]), int(cell[2]))

    def describe(self) -> str:
        parts = []
        for level in self.levels:
            parts.append(
                f"L{level.index}: {len(level.patches)} patches, {level.n_valid} valid cells, "
                f"h={level.spacing[0]:.5g}"
            )
        return "; ".join(parts)


def interior(array: np.ndarray) -> np.ndarray:
    """Interior view of a padded level array."""
    return array[PAD:-PAD, PAD:-PAD, PAD:-PAD]


def make_hierarchy(
    domain_lower: Real3,
    domain_upper: Real3,
    base_shape: Index3,
    level_boxes: Sequence[Sequence[IndexBox]],
    max_levels: int | None = None,
) -> PatchHierarchy:
    """Assemble a hierarchy from boxes given in each level's own index space.

    ``level_boxes[0]`` is ignored (the base level always covers the domain).
    Finer levels must be properly nested with a one-coarse-cell buffer.

    Raises:
        NestingError: If a box leaves the domain, overlaps a sibling, or is not
            properly nested in the next coarser level.
    """

    if any(n <= 0 for n in base_shape):
        raise ValueError(f"base resolution must be positive, got {base_shape}")
    lengths = [u - lo for lo, u in zip(domain_lower, domain_upper, strict=True)]
    if any(length <= 0 for length in lengths):
        raise ValueError("domain upper corner must exceed the lower corner")

    base_box = IndexBox.from_shape(base_shape)
    spacing: Real3 = (
        lengths[0] / base_shape[0],
        lengths[1] / base_shape[1],
        lengths[2] / base_shape[2],
    )
    levels = [
        Level(
            index=0,
            shape=base_shape,
            spacing=spacing,
            ratio_to_coarser=1,
            patches=[Patch(base_box, 0)],
            region=np.ones(base_shape, dtype=bool),
        )
    ]
    for index, boxes in enumerate(level_boxes[1:], start=1):
        if not boxes:
            break
        coarse = levels[-1]
        shape: Index3 = (
            coarse.shape[0] * RATIO,
            coarse.shape[1] * RATIO,
            coarse.shape[2] * RATIO,
        )
        domain = IndexBox.from_shape(shape)
        allowed = ~dilate_mask(~coarse.region, 1)
        for box in boxes:
            if not domain.contains(box):
                raise NestingError(box, index, "outside the domain")
            if (box.lower[0] % RATIO, box.lower[1] % RATIO, box.lower[2] % RATIO) != (0, 0, 0) or any(
                s % RATIO for s in box.shape
            ):
                raise NestingError(box, index, "not aligned with the coarser level")
            if not allowed[box.coarsen().slices()].all():
                raise NestingError(box, index)
        region = _region_from_boxes(shape, boxes)
        if int(region.sum()) != sum(box.volume for box in boxes):
            overlapping = _first_overlap(boxes)
            raise NestingError(overlapping, index, "overlapping another patch")
        levels.append(
            Level(
                index=index,
                shape=shape,
                spacing=(coarse.spacing[0] / RATIO, coarse.spacing[1] / RATIO, coarse.spacing[2] / RATIO),
                ratio_to_coarser=RATIO,
                patches=[Patch(box, index) for box in boxes],
                region=region,
            )
        )
    hierarchy = PatchHierarchy(
        domain_lower, domain_upper, levels, max_levels=max_levels or len(levels)
    )
    logger.debug("built hierarchy: %s", hierarchy.describe())
    return hierarchy


def _first_overlap(boxes: Sequence[IndexBox]) -> IndexBox:
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            if a.intersects(b):
                return b
    return boxes[-1]


def build_hierarchy(
    domain: tuple[Real3, Real3],
    base_resolution: int | Index3,
    refine_boxes: Sequence[Sequence[IndexBox]] = (),
    ratio: int = RATIO,
    max_levels: int | None = None,
) -> PatchHierarchy:
    """Build a hierarchy from per-level refinement boxes.

    Args:
        domain: ``(lower, upper)`` physical corners.
        base_resolution: Cells per axis on the base level (int for a cube).
        refine_boxes: ``refine_boxes[l]`` lists boxes in level ``l`` index
            space that are refined to form level ``l + 1``.
        ratio: Refinement ratio; only 2 is supported.
        max_levels: Upper bound on levels (defaults to the levels built).

    Returns:
        PatchHierarchy: The nested hierarchy.

    Raises:
        NestingError: With the offending box when nesting is violated.
    """

    if ratio != RATIO:
        raise ValueError(f"only refinement ratio {RATIO} is supported")
    if isinstance(base_resolution, int):
        base_shape: Index3 = (base_resolution, base_resolution, base_resolution)
    else:
        base_shape = tuple(base_resolution)  # type: ignore[assignment]
    level_boxes: list[list[IndexBox]] = [[IndexBox.from_shape(base_shape)]]
    shape = base_shape
    for index, boxes in enumerate(refine_boxes):
        domain_box = IndexBox.from_shape(shape)
        for box in boxes:
            if not domain_box.contains(box):
                raise NestingError(box, index + 1, "outside the coarser level's domain")
        level_boxes.append([box.refine(ratio) for box in boxes])
        shape = (shape[0] * ratio, shape[1] * ratio, shape[2] * ratio)
    lower, upper = domain
    return make_hierarchy(lower, upper, base_shape, level_boxes, max_levels)


# ghost classification -------------------------------------------------

FACE_OFFSETS: tuple[Index3, ...] = (
    (-1, 0, 0),
    (1, 0, 0),
    (0, -1, 0),
    (0, 1, 0),
    (0, 0, -1),
    (0, 0, 1),
)
EDGE_OFFSETS: tuple[Index3, ...] = tuple(
    d for d in product((-1, 0, 1), repeat=3) if sum(abs(c) for c in d) == 2
)
CORNER_OFFSETS: tuple[Index3, ...] = tuple(
    d for d in product((-1, 0, 1), repeat=3) if sum(abs(c) for c in d) == 3
)


@dataclass
class CoarseFineFragment:
    """Ghost cells of one level sharing a coarse-fine boundary kind and orientation.

    Attributes:
        kind: face, edge or corner.
        orientation: Offset from each ghost to the fine interior cell it borders.
        fine_cells: (G, 3) interior indices of the ghost cells on the fine level.
        fine_donors: (G, 3) fine interior cells adjacent to the ghosts.
    """

    kind: FragmentKind
    orientation: Index3
    fine_cells: np.ndarray
    fine_donors: np.ndarray


def _shifted(mask: np.ndarray, offset: Index3) -> np.ndarray:
    """``out[c] = mask[c + offset]`` with False outside the array."""
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    nx, ny, nz = mask.shape
    dx, dy, dz = offset
    return padded[1 + dx : 1 + dx + nx, 1 + dy : 1 + dy + ny, 1 + dz : 1 + dz + nz]


def coarse_fine_fragments(region: np.ndarray) -> list[CoarseFineFragment]:
    """Classify the in-domain ghost cells around ``region`` into CF fragments.

    A ghost is a face ghost if any face neighbour is in the region (the first
    such offset in x, y, z order with the low side first wins), otherwise an
    edge ghost, otherwise a corner ghost. Each ghost lands in exactly one
    fragment.
    """

    unclaimed = ~region
    fragments: list[CoarseFineFragment] = []
    for kind, offsets in (("face", FACE_OFFSETS), ("edge", EDGE_OFFSETS), ("corner", CORNER_OFFSETS)):
        for offset in offsets:
            hit = unclaimed & _shifted(region, offset)
            if not hit.any():
                continue
            unclaimed &= ~hit
            cells = np.argwhere(hit)
            fragments.append(
                CoarseFineFragment(
                    kind=kind,  # type: ignore[arg-type]
                    orientation=offset,
                    fine_cells=cells,
                    fine_donors=cells + np.asarray(offset),
                )
            )
    return fragments


@dataclass
class GhostCensus:
    """Per-patch ghost classification counts."""

    same_level: int = 0
    physical: int = 0
    coarse_fine: int = 0

    @property
    def total(self) -> int:
        return self.same_level + self.physical + self.coarse_fine


def classify_patch_ghosts(hierarchy: PatchHierarchy, level_index: int) -> list[GhostCensus]:
    """Classify every ghost cell of every patch on a level.

    Each ghost goes to exactly one class: a copy from a sibling patch's
    interior, a physical-boundary cell, or a coarse-fine cell.
    """

    level = hierarchy[level_index]
    cf_mask = np.zeros(level.shape, dtype=bool)
    for fragment in coarse_fine_fragments(level.region):
        cf_mask[tuple(fragment.fine_cells.T)] = True
    census = []
    domain = level.domain_box
    for patch in level.patches:
        result = GhostCensus()
        frame = patch.box.grow(patch.ghost_width)
        for cell in product(*(range(lo, up + 1) for lo, up in zip(frame.lower, frame.upper, strict=True))):
            if all(lo <= c <= up for c, lo, up in zip(cell, patch.box.lower, patch.box.upper, strict=True)):
                continue
            if not all(lo <= c <= up for c, lo, up in zip(cell, domain.lower, domain.upper, strict=True)):
                result.physical += 1
            elif level.region[cell]:
                result.same_level += 1
            elif cf_mask[cell]:
                result.coarse_fine += 1
            else:
                raise HierarchyError(f"unclassified ghost {cell} on level {level_index}")
        census.append(result)
    return census
