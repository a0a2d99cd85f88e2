"""
Jacobian-free Newton-Krylov solver.

Inexact Newton with Eisenstat-Walker forcing terms; each Newton step is solved
by right-preconditioned GMRES whose matvecs are finite-difference directional
derivatives of the residual. Newton updates are damped only to keep every
component strictly positive.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from app.core.errors import LinearSolverError, PositivityError, SolverError
from app.schemas.reports import SolverReport
from app.schemas.run_config import NewtonConfig

logger = logging.getLogger(__name__)

Residual = Callable[[np.ndarray], np.ndarray]
LinearMap = Callable[[np.ndarray], np.ndarray]
PreconditionerFactory = Callable[[np.ndarray], LinearMap | None]

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))
MAX_HALVINGS = 60


def choose_epsilon(u: np.ndarray, v: np.ndarray, u_min: float, b: float = 1.0) -> float:
    """Finite-difference step for the directional derivative along ``v``.

    ``sqrt(eps) <u, v> / |v|^2`` when ``<u, v> > b u_min |v|_1``, otherwise
    ``sqrt(eps) u_min sign(<u, v>) |v|_1 / |v|^2`` with ``sign(0) = +1``. The
    step is then halved until ``u + eps v`` is strictly positive.

    Raises:
        SolverError: If ``v`` is zero or no positive perturbation is found.
    """

    v_sq = float(v @ v)
    if v_sq == 0.0:
        raise SolverError("finite-difference direction is zero")
    dot = float(u @ v)
    v_one = float(np.abs(v).sum())
    if dot > b * u_min * v_one:
        eps = SQRT_EPS * dot / v_sq
    else:
        sign = -1.0 if dot < 0.0 else 1.0
        eps = SQRT_EPS * u_min * sign * v_one / v_sq
    for _ in range(MAX_HALVINGS):
        if np.all(u + eps * v > 0.0):
            return eps
        eps *= 0.5
    raise SolverError(f"no positive finite-difference perturbation found (last eps={eps:.3e})")


def jacobian_vector(
    residual: Residual,
    u: np.ndarray,
    v: np.ndarray,
    residual_at_u: np.ndarray,
    u_min: float = 1.0e-6,
    b: float = 1.0,
) -> np.ndarray:
    """Forward-difference approximation of ``F'(u) v`` using the cached ``F(u)``."""
    if not np.any(v):
        return np.zeros_like(v)
    eps = choose_epsilon(u, v, u_min, b)
    try:
        perturbed = residual(u + eps * v)
    except PositivityError as exc:
        raise SolverError(f"residual failed at perturbed point (eps={eps:.3e}): {exc}") from exc
    return (perturbed - residual_at_u) / eps


def enforce_positivity(u: np.ndarray, step: np.ndarray, theta: float = 0.01) -> float:
    """Largest ``lam`` in (0, 1] with ``u + lam step >= theta u`` componentwise."""
    decreasing = step < 0.0
    if not np.any(decreasing):
        return 1.0
    limits = (1.0 - theta) * u[decreasing] / (-step[decreasing])
    return float(min(1.0, limits.min()))


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual_norms: list[float] = field(default_factory=list)
    converged: bool = False


def gmres(
    operator: LinearMap,
    rhs: np.ndarray,
    preconditioner: LinearMap | None = None,
    tol: float = 1.0e-8,
    max_dim: int = 50,
) -> GmresResult:
    """Right-preconditioned GMRES without restarts, from a zero initial guess.

    Solves ``A M^-1 y = rhs`` and returns ``x = M^-1 y``. Preconditioned
    directions are stored, so ``M`` may change between iterations. Stops when
    ``|rhs - A x| <= tol |rhs|`` or after ``max_dim`` iterations.
    """

    precond = preconditioner or (lambda w: w)
    n = rhs.size
    beta = float(np.linalg.norm(rhs))
    if beta == 0.0:
        return GmresResult(np.zeros(n), 0, [0.0], True)
    target = tol * beta

    basis = np.zeros((max_dim + 1, n))
    directions = np.zeros((max_dim, n))
    hess = np.zeros((max_dim + 1, max_dim))
    cs = np.zeros(max_dim)
    sn = np.zeros(max_dim)
    g = np.zeros(max_dim + 1)
    g[0] = beta
    basis[0] = rhs / beta
    norms = [beta]
    converged = False
    k = 0

    for j in range(max_dim):
        directions[j] = precond(basis[j])
        w = operator(directions[j])
        # modified Gram-Schmidt
        for i in range(j + 1):
            hess[i, j] = float(w @ basis[i])
            w = w - hess[i, j] * basis[i]
        hess[j + 1, j] = float(np.linalg.norm(w))
        breakdown = hess[j + 1, j] <= 1.0e-14 * beta
        if not breakdown:
            basis[j + 1] = w / hess[j + 1, j]

        for i in range(j):
            tmp = cs[i] * hess[i, j] + sn[i] * hess[i + 1, j]
            hess[i + 1, j] = -sn[i] * hess[i, j] + cs[i] * hess[i + 1, j]
            hess[i, j] = tmp
        denom = float(np.hypot(hess[j, j], hess[j + 1, j]))
        if denom == 0.0:
            raise LinearSolverError("GMRES breakdown with a singular Hessenberg column")
        cs[j] = hess[j, j] / denom
        sn[j] = hess[j + 1, j] / denom
        hess[j, j] = denom
        hess[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        k = j + 1
        norms.append(abs(float(g[j + 1])))
        if norms[-1] <= target or breakdown:
            converged = True
            break

    y = np.linalg.solve(np.triu(hess[:k, :k]), g[:k])
    x = directions[:k].T @ y
    return GmresResult(x, k, norms, converged)


def forcing_term(
    config: NewtonConfig,
    norm: float,
    norm_prev: float | None,
    eta_prev: float | None,
    stop_tol: float,
) -> float:
    """Eisenstat-Walker choice 2 with the usual safeguards, or the fixed forcing term."""
    if config.forcing == "fixed":
        return config.fixed_eta
    if norm_prev is None or eta_prev is None:
        eta = config.eta_max
    else:
        eta = config.ew_gamma * (norm / norm_prev) ** config.ew_exponent
        guard = config.ew_gamma * eta_prev**config.ew_exponent
        if guard > 0.1:
            eta = max(eta, guard)
        eta = min(eta, config.eta_max)
    return min(config.eta_max, max(eta, 0.5 * stop_tol / norm))


def newton_solve(
    residual: Residual,
    u0: np.ndarray,
    preconditioner_factory: PreconditionerFactory | None,
    config: NewtonConfig,
) -> tuple[np.ndarray, SolverReport]:
    """Solve ``F(u) = 0`` from a strictly positive ``u0``.

    Args:
        residual: Nonlinear residual ``F``.
        u0: Initial iterate.
        preconditioner_factory: Builds ``P^-1`` at the current iterate; ``None`` for no preconditioning.
        config: Tolerances, forcing policy and positivity controls.

    Returns:
        tuple[np.ndarray, SolverReport]: Last iterate and diagnostics;
        ``report.converged`` is False when the tolerance was not reached.
    """

    report = SolverReport()
    u = u0.copy()
    try:
        fu = residual(u)
    except PositivityError as exc:
        report.failure_reason = f"initial residual: {exc}"
        return u, report
    norm = float(np.linalg.norm(fu))
    stop = max(config.rel_tol * norm, config.abs_tol)
    report.residual_norms.append(norm)
    if norm <= stop:
        report.converged = True
        return u, report

    norm_prev: float | None = None
    eta_prev: float | None = None
    for _ in range(config.max_newton_iters):
        eta = forcing_term(config, norm, norm_prev, eta_prev, stop)
        report.forcing_terms.append(eta)
        precond = preconditioner_factory(u) if preconditioner_factory is not None else None
        u_k, fu_k = u, fu

        def matvec(v: np.ndarray, u_k: np.ndarray = u_k, fu_k: np.ndarray = fu_k) -> np.ndarray:
            return jacobian_vector(residual, u_k, v, fu_k, config.u_min, config.epsilon_b)

        try:
            linear = gmres(matvec, -fu, precond, eta, config.max_krylov_dim)
        except SolverError as exc:
            report.failure_reason = str(exc)
            return u, report
        report.total_gmres_iters += linear.iterations
        report.newton_iters += 1
        if not linear.converged:
            logger.debug("GMRES hit max dimension %d (|r|=%.3e)", config.max_krylov_dim, linear.residual_norms[-1])

        lam = enforce_positivity(u, linear.x, config.positivity_theta)
        report.min_step_scale = min(report.min_step_scale, lam)
        if lam < 1.0:
            report.positivity_scalings += 1
            logger.warning("Newton update scaled by %.3e for positivity", lam)
        if lam < config.min_step_scale:
            report.failure_reason = f"positivity scaling {lam:.3e} below {config.min_step_scale:.1e}"
            return u, report

        u = u + lam * linear.x
        try:
            fu = residual(u)
        except PositivityError as exc:
            report.failure_reason = str(exc)
            return u, report
        norm_prev, eta_prev = norm, eta
        norm = float(np.linalg.norm(fu))
        report.residual_norms.append(norm)
        if not np.isfinite(norm):
            report.failure_reason = "non-finite residual"
            return u, report
        if norm <= stop:
            report.converged = True
            return u, report

    report.failure_reason = f"no convergence in {config.max_newton_iters} Newton iterations"
    return u, report


def dense_jacobian(residual: Residual, u: np.ndarray, rel_step: float = 1.0e-7) -> np.ndarray:
    """Column-by-column forward-difference Jacobian; only for small test systems."""
    fu = residual(u)
    jac = np.empty((fu.size, u.size))
    for j in range(u.size):
        h = rel_step * max(abs(u[j]), 1.0)
        shifted = u.copy()
        shifted[j] += h
        jac[:, j] = (residual(shifted) - fu) / h
    return jac
