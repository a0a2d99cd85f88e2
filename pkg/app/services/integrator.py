"""
Variable-step BDF2 time integration with a generalized leapfrog predictor.

The stepping loop itself lives in the simulation driver; this module holds the
pieces it composes: the time history, the implicit residual of one step, the
predictor, the local truncation error estimate and the derivative update.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

SpatialOperator = Callable[[np.ndarray], np.ndarray]


@dataclass
class TimeHistory:
    """Solution history needed by the predictor-corrector pair.

    Attributes:
        u_n: Solution at ``t_n``.
        udot_n: Time derivative at ``t_n``.
        t_n: Current time.
        dt_n: Step size that reached ``t_n`` (``None`` before the first step).
        u_nm1: Solution at ``t_{n-1}`` (``None`` before the first step).
        dt_nm1: Step size that reached ``t_{n-1}``.
        u_nm2: Solution at ``t_{n-2}``; only used to re-solve the last step after a regrid.
        dt_nm2: Step size that reached ``t_{n-2}``.
    """

    u_n: np.ndarray
    udot_n: np.ndarray
    t_n: float = 0.0
    dt_n: float | None = None
    u_nm1: np.ndarray | None = None
    dt_nm1: float | None = None
    u_nm2: np.ndarray | None = None
    dt_nm2: float | None = None

    @classmethod
    def start(cls, u0: np.ndarray, f: SpatialOperator, t0: float = 0.0) -> TimeHistory:
        """History at the initial time with ``udot_0 = f(u_0)``."""
        return cls(u_n=u0.copy(), udot_n=f(u0), t_n=t0)

    @property
    def has_previous(self) -> bool:
        return self.u_nm1 is not None and self.dt_n is not None

    def ratio(self, dt: float) -> float:
        """Step ratio ``dt / dt_n`` of the next step (0 when it is the first)."""
        if self.dt_n is None or not self.has_previous:
            return 0.0
        return dt / self.dt_n

    def advance(self, u_new: np.ndarray, udot_new: np.ndarray, dt: float) -> None:
        """Shift the history after an accepted step of size ``dt``."""
        self.u_nm2, self.dt_nm2 = self.u_nm1, self.dt_nm1
        self.u_nm1, self.dt_nm1 = self.u_n, self.dt_n
        self.u_n = u_new
        self.udot_n = udot_new
        self.dt_n = dt
        self.t_n += dt

    def vectors(self) -> dict[str, np.ndarray]:
        """Every stored state vector by attribute name (for transfer across regrids)."""
        named = {"u_n": self.u_n, "udot_n": self.udot_n, "u_nm1": self.u_nm1, "u_nm2": self.u_nm2}
        return {name: vec for name, vec in named.items() if vec is not None}


@dataclass(frozen=True)
class NormScaling:
    """Absolute floors of the weighted max norm, per variable."""

    eta_e: float = 1.0e-2
    eta_t: float = 1.0e-2


def bdf2_coefficients(alpha: float) -> tuple[float, float, float]:
    """Coefficients ``(c0, c1, c2)`` of ``c0 u_{n+1} - c1 u_n + c2 u_{n-1}``.

    With ``alpha = 0`` they reduce to backward Euler ``(1, 1, 0)``.
    """

    return (1.0 + 2.0 * alpha) / (1.0 + alpha), 1.0 + alpha, alpha**2 / (1.0 + alpha)


def beta_scale(dt: float, alpha: float) -> float:
    """Diagonal scaling ``beta`` of the Jacobian ``I - beta f'(u)`` of the step residual."""
    c0 = bdf2_coefficients(alpha)[0]
    return dt / c0


def bdf2_residual(
    u: np.ndarray,
    history: TimeHistory,
    dt: float,
    f: SpatialOperator,
) -> np.ndarray:
    """Nonlinear residual of a variable-step BDF2 step of size ``dt``.

    Falls back to backward Euler when the history has no previous step.
    """

    if not history.has_previous:
        return bdf1_residual(u, history.u_n, dt, f)
    assert history.u_nm1 is not None
    alpha = history.ratio(dt)
    c0, c1, c2 = bdf2_coefficients(alpha)
    return c0 * u - c1 * history.u_n + c2 * history.u_nm1 - dt * f(u)


def bdf1_residual(u: np.ndarray, u_n: np.ndarray, dt: float, f: SpatialOperator) -> np.ndarray:
    """Backward Euler residual ``u - u_n - dt f(u)``."""
    return u - u_n - dt * f(u)


def step_residual(
    history: TimeHistory,
    dt: float,
    f: SpatialOperator,
    first_order: bool = False,
) -> Callable[[np.ndarray], np.ndarray]:
    """Residual function of the next step, ready for the nonlinear solver."""
    if first_order or not history.has_previous:
        u_n = history.u_n
        return lambda u: bdf1_residual(u, u_n, dt, f)
    return lambda u: bdf2_residual(u, history, dt, f)


def step_beta(history: TimeHistory, dt: float, first_order: bool = False) -> float:
    if first_order or not history.has_previous:
        return dt
    return beta_scale(dt, history.ratio(dt))


def predict(history: TimeHistory, dt: float) -> np.ndarray:
    """Generalized leapfrog predictor ``u_n + (1 + a) dt udot_n - a^2 (u_n - u_{n-1})``.

    With no previous step this is forward Euler.
    """

    if not history.has_previous:
        return history.u_n + dt * history.udot_n
    assert history.u_nm1 is not None
    alpha = history.ratio(dt)
    return history.u_n + (1.0 + alpha) * dt * history.udot_n - alpha**2 * (history.u_n - history.u_nm1)


def initial_guess(prediction: np.ndarray, u_n: np.ndarray) -> np.ndarray:
    """Newton starting point: the prediction, with non-positive entries replaced by ``u_n``."""
    return np.where(prediction > 0.0, prediction, u_n)


def estimate_local_error(u_new: np.ndarray, u_pred: np.ndarray, alpha: float) -> np.ndarray:
    """Milne-device estimate ``(a + 1) / (3a + 2) (u_{n+1} - u_p)``."""
    return (alpha + 1.0) / (3.0 * alpha + 2.0) * (u_new - u_pred)


def error_norm(error: np.ndarray, u: np.ndarray, scaling: NormScaling) -> float:
    """Weighted max norm: max over both variables of ``|e| / (|u| + eta)``."""
    n = u.size // 2
    e_part = np.abs(error[:n]) / (np.abs(u[:n]) + scaling.eta_e)
    t_part = np.abs(error[n:]) / (np.abs(u[n:]) + scaling.eta_t)
    return float(max(e_part.max(initial=0.0), t_part.max(initial=0.0)))


def update_derivative(
    u_new: np.ndarray,
    history: TimeHistory,
    dt: float,
    first_order: bool = False,
) -> np.ndarray:
    """``udot_{n+1}`` from the BDF formula just solved (no extra ``f`` evaluation)."""
    if first_order or not history.has_previous:
        return (u_new - history.u_n) / dt
    assert history.u_nm1 is not None
    c0, c1, c2 = bdf2_coefficients(history.ratio(dt))
    return (c0 * u_new - c1 * history.u_n + c2 * history.u_nm1) / dt
