"""
Physics-based preconditioner ``P = P1 P2``.

``P1`` holds the two frozen-coefficient diffusion blocks ``I - beta div D grad``
(inverted approximately with ``FacConfig.cycles`` FAC V-cycles each, one by
default); ``P2`` holds the cell-local exchange coupling, inverted exactly as a
2x2 system per cell.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.core.errors import SingularBlockError
from app.schemas.run_config import FacConfig
from app.services.discretization import RadiationDiffusion
from app.services.fac import CompositeOperator, build_operators, fac_solve

logger = logging.getLogger(__name__)

SINGULAR_TOLERANCE = 1.0e-14


def invert_p2_cell(
    sigma_beta: np.ndarray,
    t_cubed: np.ndarray,
    rhs_e: np.ndarray,
    rhs_t: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve ``[[1 + sb, -sb T^3], [-sb, 1 + sb T^3]] y = rhs`` cell by cell.

    Returns:
        tuple: ``(y_e, y_t, det)``; callers check ``det`` for singular blocks.
    """

    det = 1.0 + sigma_beta * (1.0 + t_cubed)
    y_e = ((1.0 + sigma_beta * t_cubed) * rhs_e + sigma_beta * t_cubed * rhs_t) / det
    y_t = (sigma_beta * rhs_e + (1.0 + sigma_beta) * rhs_t) / det
    return y_e, y_t, det


class PhysicsPreconditioner:
    """Approximate inverse of the step Jacobian ``I - beta f'(u)``.

    Call :meth:`setup` at every Newton iterate; the result is a linear map.
    """

    def __init__(self, operator: RadiationDiffusion, config: FacConfig, threads: int = 1) -> None:
        self.operator = operator
        self.hierarchy = operator.hierarchy
        self.config = config
        self.threads = threads
        self.beta = 0.0
        self.energy_block: CompositeOperator | None = None
        self.temperature_block: CompositeOperator | None = None
        self.sigma_beta = np.zeros(0)
        self.t_cubed = np.zeros(0)
        self.applications = 0

    def setup(self, state: np.ndarray, beta: float) -> PhysicsPreconditioner:
        """Freeze coefficients at ``state`` and build both FAC blocks."""
        frozen = self.operator.frozen_state(state)
        stencils = self.operator.ghosts.stencils
        self.beta = beta
        self.energy_block = build_operators(
            self.hierarchy, frozen.d_energy, beta, stencils, robin=self.operator.params.robin_boundaries
        )
        self.temperature_block = build_operators(self.hierarchy, frozen.d_temperature, beta, stencils)
        self.sigma_beta = frozen.sigma * beta
        self.t_cubed = frozen.t_cubed
        return self

    def _solve_block(self, block: CompositeOperator, rhs: np.ndarray) -> np.ndarray:
        if block.beta == 0.0:
            return rhs.copy()
        return fac_solve(block, rhs, self.config, cycles=self.config.cycles)

    def apply(self, w: np.ndarray) -> np.ndarray:
        """``y = P2^-1 P1^-1 w``.

        Raises:
            SingularBlockError: If a cell's 2x2 exchange block is singular.
        """

        if self.energy_block is None or self.temperature_block is None:
            raise RuntimeError("preconditioner used before setup()")
        self.applications += 1
        n = self.hierarchy.n_valid
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=2) as pool:
                future_e = pool.submit(self._solve_block, self.energy_block, w[:n])
                future_t = pool.submit(self._solve_block, self.temperature_block, w[n:])
                z_e, z_t = future_e.result(), future_t.result()
        else:
            z_e = self._solve_block(self.energy_block, w[:n])
            z_t = self._solve_block(self.temperature_block, w[n:])

        y_e, y_t, det = invert_p2_cell(self.sigma_beta, self.t_cubed, z_e, z_t)
        scale = np.maximum(1.0, np.abs(self.sigma_beta) * (1.0 + self.t_cubed))
        singular = np.abs(det) < SINGULAR_TOLERANCE * scale
        if np.any(singular):
            bad = int(np.flatnonzero(singular)[0])
            level_index, cell = self.hierarchy.locate(bad)
            raise SingularBlockError(level_index, cell, float(det[bad]))
        return np.concatenate([y_e, y_t])

    def __call__(self, w: np.ndarray) -> np.ndarray:
        return self.apply(w)
