import numpy as np
import pytest

from app.core.errors import SingularBlockError
from app.schemas.run_config import FacConfig, MaterialMap, PhysicsParams
from app.services.discretization import RadiationDiffusion
from app.services.integrator import TimeHistory, step_residual
from app.services.fac import fac_solve
from app.services.jfnk import dense_jacobian
from app.services.preconditioner import PhysicsPreconditioner, invert_p2_cell
from app.services.samr import PatchHierarchy, build_hierarchy

UNIT_CUBE = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def _state(hierarchy: PatchHierarchy, rng: np.random.Generator) -> np.ndarray:
    n = hierarchy.n_valid
    return np.concatenate([rng.uniform(0.5, 1.5, size=n), rng.uniform(0.8, 1.2, size=n)])


def test_p2_hand_solve() -> None:
    """sigma beta = 1, T^3 = 1: [[2, -1], [-1, 2]] y = (1, 0) gives (2/3, 1/3)."""
    y_e, y_t, det = invert_p2_cell(np.array([1.0]), np.array([1.0]), np.array([1.0]), np.array([0.0]))
    assert y_e[0] == pytest.approx(2.0 / 3.0)
    assert y_t[0] == pytest.approx(1.0 / 3.0)
    assert det[0] == pytest.approx(3.0)


def test_p2_without_coupling_is_identity() -> None:
    """sigma beta = 0 returns the right-hand side."""
    y_e, y_t, _ = invert_p2_cell(np.zeros(2), np.array([1.0, 8.0]), np.array([0.3, 0.4]), np.array([0.5, 0.6]))
    assert y_e.tolist() == [0.3, 0.4]
    assert y_t.tolist() == [0.5, 0.6]


def test_p2_inversion_is_exact(rng: np.random.Generator) -> None:
    """Multiplying the solution back by the block reproduces the right-hand side."""
    sb = rng.uniform(0.0, 100.0, size=50)
    t3 = rng.uniform(0.01, 10.0, size=50)
    re = rng.normal(size=50)
    rt = rng.normal(size=50)
    y_e, y_t, det = invert_p2_cell(sb, t3, re, rt)
    assert np.allclose((1 + sb) * y_e - sb * t3 * y_t, re, rtol=1e-12, atol=1e-11)
    assert np.allclose(-sb * y_e + (1 + sb * t3) * y_t, rt, rtol=1e-12, atol=1e-11)
    assert np.all(det >= 1.0)


def _preconditioner(hierarchy: PatchHierarchy, threads: int = 1) -> PhysicsPreconditioner:
    operator = RadiationDiffusion(hierarchy, MaterialMap(), PhysicsParams())
    return PhysicsPreconditioner(operator, FacConfig(), threads=threads)


def test_zero_beta_is_identity(two_level_hierarchy: PatchHierarchy, rng: np.random.Generator) -> None:
    """In the dt -> 0 limit the preconditioner returns its input."""
    precond = _preconditioner(two_level_hierarchy).setup(_state(two_level_hierarchy, rng), 0.0)
    w = rng.normal(size=2 * two_level_hierarchy.n_valid)
    assert np.allclose(precond(w), w)
    assert precond.applications == 1


def test_preconditioner_is_linear(two_level_hierarchy: PatchHierarchy, rng: np.random.Generator) -> None:
    """Frozen coefficients make P^-1 a linear map."""
    precond = _preconditioner(two_level_hierarchy).setup(_state(two_level_hierarchy, rng), 1.0e-2)
    w1 = rng.normal(size=2 * two_level_hierarchy.n_valid)
    w2 = rng.normal(size=2 * two_level_hierarchy.n_valid)
    combined = precond(2.0 * w1 - 0.5 * w2)
    assert np.allclose(combined, 2.0 * precond(w1) - 0.5 * precond(w2), atol=1e-12)


def test_approximates_inverse_of_step_jacobian(rng: np.random.Generator) -> None:
    """J P^-1 is close to the identity for a backward Euler step on a 4^3 grid."""
    hierarchy = build_hierarchy(UNIT_CUBE, 4)
    operator = RadiationDiffusion(hierarchy, MaterialMap(), PhysicsParams())
    t = rng.uniform(0.8, 1.2, size=hierarchy.n_valid)
    u = np.concatenate([t**4 * rng.uniform(0.9, 1.1, size=t.size), t])
    dt = 0.02
    residual = step_residual(TimeHistory.start(u, operator), dt, operator)
    jacobian = dense_jacobian(residual, u)
    precond = PhysicsPreconditioner(operator, FacConfig()).setup(u, dt)

    w = rng.normal(size=u.size)
    unpreconditioned = np.linalg.norm(jacobian @ w - w)
    preconditioned = np.linalg.norm(jacobian @ precond(w) - w)
    assert preconditioned < 0.5 * np.linalg.norm(w)
    assert preconditioned < unpreconditioned


def test_threads_do_not_change_result(two_level_hierarchy: PatchHierarchy, rng: np.random.Generator) -> None:
    """Solving the two blocks concurrently gives bitwise the same result."""
    state = _state(two_level_hierarchy, rng)
    w = rng.normal(size=state.size)
    serial = _preconditioner(two_level_hierarchy, threads=1).setup(state, 1.0e-2)(w)
    threaded = _preconditioner(two_level_hierarchy, threads=2).setup(state, 1.0e-2)(w)
    assert np.array_equal(serial, threaded)


def test_singular_block_is_located(uniform_hierarchy: PatchHierarchy, rng: np.random.Generator) -> None:
    """A zero determinant names the level and cell."""
    n = uniform_hierarchy.n_valid
    state = np.ones(2 * n)
    precond = _preconditioner(uniform_hierarchy).setup(state, 0.0)
    precond.sigma_beta = np.full(n, -0.5)
    with pytest.raises(SingularBlockError) as excinfo:
        precond(rng.normal(size=2 * n))
    assert excinfo.value.level_index == 0
    assert excinfo.value.cell == (0, 0, 0)


def test_use_before_setup(uniform_hierarchy: PatchHierarchy) -> None:
    """Applying an unset preconditioner is a programming error."""
    with pytest.raises(RuntimeError):
        _preconditioner(uniform_hierarchy)(np.ones(2 * uniform_hierarchy.n_valid))


def test_more_cycles_invert_the_diffusion_block_better(
    two_level_hierarchy: PatchHierarchy, rng: np.random.Generator
) -> None:
    """Raising FacConfig.cycles shrinks the energy-block residual of P1^-1."""
    operator = RadiationDiffusion(two_level_hierarchy, MaterialMap(), PhysicsParams())
    state = _state(two_level_hierarchy, rng)
    n = two_level_hierarchy.n_valid
    w = rng.normal(size=2 * n)
    residuals = []
    for cycles in (1, 4):
        precond = PhysicsPreconditioner(operator, FacConfig(cycles=cycles)).setup(state, 1.0e-2)
        precond.sigma_beta = np.zeros(n)
        y = precond(w)
        assert precond.energy_block is not None
        residuals.append(float(np.linalg.norm(precond.energy_block.apply(y[:n]) - w[:n])))
    assert residuals[1] < 0.5 * residuals[0]


def test_fac_blocks_come_before_the_exchange_solve(
    two_level_hierarchy: PatchHierarchy, rng: np.random.Generator
) -> None:
    """y = P2^-1 P1^-1 w: both diffusion blocks first, then the cellwise 2x2 solve."""
    precond = _preconditioner(two_level_hierarchy).setup(_state(two_level_hierarchy, rng), 1.0e-2)
    assert precond.energy_block is not None and precond.temperature_block is not None
    n = two_level_hierarchy.n_valid
    w = rng.normal(size=2 * n)
    z_e = fac_solve(precond.energy_block, w[:n], FacConfig())
    z_t = fac_solve(precond.temperature_block, w[n:], FacConfig())
    y_e, y_t, _ = invert_p2_cell(precond.sigma_beta, precond.t_cubed, z_e, z_t)
    assert np.allclose(precond(w), np.concatenate([y_e, y_t]), rtol=1e-13, atol=1e-14)
