from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from app.core.errors import StudyError
from app.schemas.run_config import MeshConfig, RunConfig
from app.services.presets import get_preset
from app.services.samr import PatchHierarchy, build_hierarchy
from app.services.study import (
    StudyTable,
    average_onto,
    efficiency_study,
    l2_difference,
    spatial_study,
    temporal_study,
)

UNIT_CUBE = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def test_table_text_and_csv(tmp_path: Path) -> None:
    """Missing values print as dashes and stay empty in the CSV."""
    table = StudyTable("Errors", ["dt=1", "dt=0.5"], ["E", "T"], [[1.0e-3, None], [2.5e-4, 1.0e-5]])
    text = table.to_text().splitlines()
    assert text[0] == "Errors"
    assert "-" in text[2]
    assert table.column("E") == [1.0e-3, 2.5e-4]

    path = tmp_path / "errors.csv"
    table.write_csv(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",E,T"
    assert lines[1] == "dt=1,0.001,"


def test_l2_difference_is_volume_weighted(two_level_hierarchy: PatchHierarchy) -> None:
    """A unit difference everywhere has norm sqrt(|domain|) = 1 for both variables."""
    n = two_level_hierarchy.n_valid
    err_e, err_t = l2_difference(two_level_hierarchy, np.ones(2 * n), np.zeros(2 * n))
    assert err_e == pytest.approx(1.0)
    assert err_t == pytest.approx(1.0)


def test_average_onto_composite(two_level_hierarchy: PatchHierarchy) -> None:
    """A linear field on a 32^3 reference averages to the cell-centre values of every level."""
    reference = build_hierarchy(UNIT_CUBE, 32)
    x = reference[0].cell_centers(reference.domain_lower)[0]
    field = np.broadcast_to(x[:, None, None], reference[0].shape)[reference[0].valid]
    state = np.concatenate([field, 2.0 * field])

    projected = average_onto(reference, state, two_level_hierarchy)
    expected = []
    for level in two_level_hierarchy.levels:
        centres = level.cell_centers(two_level_hierarchy.domain_lower)[0]
        expected.append(np.broadcast_to(centres[:, None, None], level.shape)[level.valid])
    e = np.concatenate(expected)
    assert np.allclose(projected, np.concatenate([e, 2.0 * e]))


def test_average_onto_rejects_coarse_reference(two_level_hierarchy: PatchHierarchy) -> None:
    """The reference must be at least as fine as the finest target level."""
    reference = build_hierarchy(UNIT_CUBE, 8)
    with pytest.raises(StudyError, match="coarser"):
        average_onto(reference, np.ones(2 * reference.n_valid), two_level_hierarchy)


def test_average_onto_rejects_refined_reference(two_level_hierarchy: PatchHierarchy) -> None:
    """Only a single uniform level can serve as reference."""
    with pytest.raises(StudyError, match="single uniform level"):
        average_onto(two_level_hierarchy, np.ones(2 * two_level_hierarchy.n_valid), two_level_hierarchy)


def test_temporal_errors_shrink_with_dt(make_config: Callable[..., RunConfig]) -> None:
    """Halving the fixed step reduces the error against the fine-step reference."""
    table = temporal_study(make_config(), [1.0e-4, 5.0e-5], 1.25e-5, [2.0e-4])
    assert table.column_labels == ["E@0.0002", "T@0.0002"]
    assert table.row_labels == ["dt=0.0001", "dt=5e-05"]
    coarse, fine = table.column("E@0.0002")
    assert coarse is not None and fine is not None
    assert coarse > fine > 0.0


def test_spatial_study_table(make_config: Callable[..., RunConfig]) -> None:
    """Each grid row holds finite, non-negative E and T errors."""
    table = spatial_study(make_config(), [(4, 1), (4, 2)], 8, 5.0e-5)
    assert table.row_labels == ["4b1l", "4b2l"]
    assert table.column_labels == ["E", "T"]
    for row in table.values:
        assert all(v is not None and np.isfinite(v) and v >= 0.0 for v in row)
    first = table.values[0][0]
    assert first is not None and first > 0.0


def test_efficiency_study_tables(make_config: Callable[..., RunConfig]) -> None:
    """Three tables with one row per level count and one column per base size."""
    tables = efficiency_study(make_config(t_final=5.0e-5), [4], [1])
    assert set(tables) == {"gmres", "newton", "steps"}
    assert tables["steps"].column_labels == ["4^3"]
    assert tables["steps"].row_labels == ["1 level"]
    (steps,) = tables["steps"].column("4^3")
    assert steps is not None and steps >= 1.0
    (newton,) = tables["newton"].column("4^3")
    assert newton is not None and newton > 0.0


def _single_material(base_resolution: int, max_levels: int) -> RunConfig:
    config = get_preset("marshak-single")
    mesh = MeshConfig(base_resolution=base_resolution, max_levels=max_levels)
    return config.model_copy(update={"mesh": mesh, "dump_interval": None})


@pytest.mark.slow
def test_temporal_convergence_is_second_order() -> None:
    """Halving dt cuts the E and T errors by at least 3.7."""
    table = temporal_study(_single_material(8, 1), [2.0e-4, 1.0e-4, 5.0e-5], 2.5e-5, [0.02])
    for label in table.column_labels:
        errors = table.column(label)
        assert all(e is not None and e > 0.0 for e in errors)
        for coarse, fine in zip(errors, errors[1:], strict=False):
            assert coarse is not None and fine is not None
            assert coarse / fine >= 3.7


@pytest.mark.slow
def test_refinement_matches_uniform_fine_grid() -> None:
    """Two levels on an 8^3 base are about as accurate as a uniform 16^3 grid, and beat 8^3."""
    table = spatial_study(_single_material(8, 1), [(8, 1), (8, 2), (16, 1)], 32, 5.0e-3)
    (coarse_e, _), (amr_e, _), (uniform_e, _) = table.values
    assert coarse_e is not None and amr_e is not None and uniform_e is not None
    assert amr_e < coarse_e
    assert abs(amr_e - uniform_e) <= 0.1 * uniform_e


@pytest.mark.slow
def test_linear_iterations_do_not_grow_with_levels() -> None:
    """At the same effective resolution a refined hierarchy needs about as many GMRES iterations."""
    config = _single_material(8, 1).model_copy(update={"t_final": 0.01})
    tables = efficiency_study(config, [8, 16], [1, 2])
    gmres = tables["gmres"]
    amr = gmres.values[1][0]
    uniform = gmres.values[0][1]
    assert amr is not None and uniform is not None
    assert abs(amr - uniform) <= 0.2 * uniform
    newton = [v for row in tables["newton"].values for v in row]
    assert all(v is not None and 2.0 <= v <= 4.0 for v in newton)
