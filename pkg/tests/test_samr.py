import numpy as np
import pytest

from app.core.errors import HierarchyError, NestingError
from app.services.samr import (
    IndexBox,
    PatchHierarchy,
    build_hierarchy,
    classify_patch_ghosts,
    coarse_fine_fragments,
    coarsen_mask,
    dilate_mask,
    interior,
    make_hierarchy,
    refine_mask,
)

UNIT_CUBE = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def test_base_grid_only() -> None:
    """No refine boxes gives one level with a single full-domain patch."""
    hierarchy = build_hierarchy(UNIT_CUBE, 16)
    assert hierarchy.num_levels == 1
    level = hierarchy[0]
    assert len(level.patches) == 1
    assert level.patches[0].box == IndexBox((0, 0, 0), (15, 15, 15))
    assert level.spacing == pytest.approx((1 / 16, 1 / 16, 1 / 16))
    assert hierarchy.n_valid == 16**3


def test_uniform_refinement_of_whole_domain() -> None:
    """Refining every base cell gives a 32^3 second level and no valid base cells."""
    hierarchy = build_hierarchy(UNIT_CUBE, 16, [[IndexBox((0, 0, 0), (15, 15, 15))]])
    assert hierarchy.num_levels == 2
    assert hierarchy[1].shape == (32, 32, 32)
    assert int(hierarchy[1].region.sum()) == 32**3
    assert hierarchy[0].n_valid == 0
    assert hierarchy.n_valid == 32**3


def test_equivalent_resolution_of_four_levels() -> None:
    """A 16^3 base with 4 levels reaches the spacing of a 128^3 grid."""
    hierarchy = build_hierarchy(UNIT_CUBE, 16, max_levels=4)
    assert hierarchy.equivalent_resolution() == 128
    assert hierarchy.finest_uniform_cells() == 128**3


def test_valid_cells_tile_the_domain(two_level_hierarchy: PatchHierarchy) -> None:
    """Valid cell volumes add up to the domain volume."""
    h = two_level_hierarchy
    assert h.valid_counts == [8**3 - 4**3, 8**3]
    assert h[0].covered.sum() == 64
    assert h.cell_volumes().sum() == pytest.approx(1.0)


def test_pack_unpack_restores_valid_cells(two_level_hierarchy: PatchHierarchy, rng: np.random.Generator) -> None:
    """Unpacking a state and packing it again gives the same vector."""
    state = rng.uniform(0.5, 1.5, size=2 * two_level_hierarchy.n_valid)
    energy, temperature = two_level_hierarchy.unpack(state)
    assert np.array_equal(two_level_hierarchy.pack(energy, temperature), state)


def test_unpack_rejects_wrong_size(two_level_hierarchy: PatchHierarchy) -> None:
    """A state of the wrong size is a hierarchy error."""
    with pytest.raises(HierarchyError):
        two_level_hierarchy.unpack(np.ones(10))


def test_locate_maps_state_index_to_cell(two_level_hierarchy: PatchHierarchy) -> None:
    """State indices map to their level and interior cell."""
    h = two_level_hierarchy
    assert h.locate(0) == (0, (0, 0, 0))
    assert h.locate(h.valid_counts[0]) == (1, (4, 4, 4))
    # T entries map like E entries
    assert h.locate(h.n_valid) == (0, (0, 0, 0))


def test_refine_box_outside_domain_is_rejected() -> None:
    """A box leaving the coarser level's domain raises NestingError carrying the box."""
    box = IndexBox((6, 6, 6), (8, 8, 8))
    with pytest.raises(NestingError) as excinfo:
        build_hierarchy(UNIT_CUBE, 8, [[box]])
    assert excinfo.value.box == box


def test_improperly_nested_box_is_rejected() -> None:
    """A level-2 box without a one-cell buffer inside level 1 is rejected."""
    with pytest.raises(NestingError) as excinfo:
        build_hierarchy(
            UNIT_CUBE,
            8,
            [[IndexBox((2, 2, 2), (5, 5, 5))], [IndexBox((4, 4, 4), (7, 7, 7))]],
        )
    assert excinfo.value.level_index == 2


def test_properly_nested_three_levels() -> None:
    """A buffered level-2 box is accepted."""
    hierarchy = build_hierarchy(
        UNIT_CUBE,
        8,
        [[IndexBox((2, 2, 2), (5, 5, 5))], [IndexBox((5, 5, 5), (10, 10, 10))]],
    )
    assert hierarchy.num_levels == 3
    assert hierarchy[2].shape == (32, 32, 32)
    assert int(hierarchy[2].region.sum()) == 12**3


def test_overlapping_patches_are_rejected() -> None:
    """Two boxes of one level must not overlap."""
    boxes = [IndexBox((4, 4, 4), (9, 9, 9)), IndexBox((8, 4, 4), (11, 11, 11))]
    with pytest.raises(NestingError):
        make_hierarchy((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (8, 8, 8), [[], boxes])


def test_index_box_refine_and_coarsen() -> None:
    """Refining then coarsening a box gives the box back."""
    box = IndexBox((1, 2, 3), (2, 3, 4))
    assert box.refine() == IndexBox((2, 4, 6), (5, 7, 9))
    assert box.refine().coarsen() == box
    assert box.volume == 8


def test_index_box_rejects_empty_box() -> None:
    """Lower corner beyond upper corner is invalid."""
    with pytest.raises(ValueError):
        IndexBox((2, 0, 0), (1, 0, 0))


def test_mask_helpers() -> None:
    """coarsen/refine/dilate behave on a single marked cell."""
    mask = np.zeros((4, 4, 4), dtype=bool)
    mask[1, 1, 1] = True
    assert coarsen_mask(mask).sum() == 1
    assert refine_mask(mask).sum() == 8
    assert dilate_mask(mask).sum() == 27


def test_coarse_fine_fragments_of_one_box(two_level_hierarchy: PatchHierarchy) -> None:
    """Ghosts around a cube split into 6 faces, 12 edges and 8 corners."""
    fragments = coarse_fine_fragments(two_level_hierarchy[1].region)
    counts = {"face": 0, "edge": 0, "corner": 0}
    cells = {"face": 0, "edge": 0, "corner": 0}
    for fragment in fragments:
        counts[fragment.kind] += 1
        cells[fragment.kind] += len(fragment.fine_cells)
    assert counts == {"face": 6, "edge": 12, "corner": 8}
    assert cells == {"face": 6 * 64, "edge": 12 * 8, "corner": 8}


def test_every_ghost_is_classified_once(two_level_hierarchy: PatchHierarchy) -> None:
    """Base-level ghosts are physical, fine-level ghosts of a lone patch are coarse-fine."""
    (base,) = classify_patch_ghosts(two_level_hierarchy, 0)
    (fine,) = classify_patch_ghosts(two_level_hierarchy, 1)
    assert base.physical == base.total == 10**3 - 8**3
    assert fine.coarse_fine == fine.total == 10**3 - 8**3


def test_sibling_ghosts_are_same_level() -> None:
    """Two touching patches see each other's interior in their ghost frames."""
    boxes = [IndexBox((4, 4, 4), (7, 11, 11)), IndexBox((8, 4, 4), (11, 11, 11))]
    hierarchy = make_hierarchy((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (8, 8, 8), [[], boxes])
    left, right = classify_patch_ghosts(hierarchy, 1)
    assert left.same_level == right.same_level == 64
    assert left.total == 6 * 10 * 10 - 4 * 8 * 8
    assert left.physical == 0


def test_new_arrays_are_padded(two_level_hierarchy: PatchHierarchy) -> None:
    """Level arrays carry one ghost layer on every side."""
    arrays = two_level_hierarchy.new_arrays(fill=2.0)
    assert [a.shape for a in arrays] == [(10, 10, 10), (18, 18, 18)]
    assert interior(arrays[1]).shape == (16, 16, 16)
