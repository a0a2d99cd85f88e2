"""
Step-size selection: the EPS controller, the PC.4.7 PI controller, step
rejection and regrid-aware suppression of the error estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum

from app.core.errors import StepSizeCollapseError
from app.schemas.run_config import ControllerConfig

logger = logging.getLogger(__name__)


class Decision(StrEnum):
    ACCEPT = "accept"
    REJECT = "reject"
    HOLD = "hold"
    FAIL = "fail"


@dataclass
class ControllerState:
    """Mutable controller memory.

    Attributes:
        err_norm_prev: Norm fed at the previous accepted step (``None`` after a regrid).
        err_norm_curr: Last norm fed to the controller.
        alpha_curr: Ratio ``dt_n / dt_{n-1}`` of the last accepted step.
        last_dt: Size of the last accepted step.
        steps_since_regrid: Accepted steps since the last regrid.
        suppress_next: Discard the next estimate and hold dt.
    """

    err_norm_prev: float | None = None
    err_norm_curr: float | None = None
    alpha_curr: float = 1.0
    last_dt: float | None = None
    steps_since_regrid: int = 0
    suppress_next: bool = False


@dataclass(frozen=True)
class ControllerDecision:
    decision: Decision
    next_dt: float
    err_norm: float | None = None

    @property
    def accepted(self) -> bool:
        return self.decision in (Decision.ACCEPT, Decision.HOLD)


def _floored(err_norm: float, config: ControllerConfig) -> float:
    return max(err_norm, config.error_floor)


def clamp_dt(dt_new: float, dt_n: float, config: ControllerConfig) -> float:
    """Clamp to the ratio window around ``dt_n``, then to ``[dt_min, dt_max]``."""
    dt_new = min(max(dt_new, config.ratio_min * dt_n), config.ratio_max * dt_n)
    return min(max(dt_new, config.dt_min), config.dt_max)


def eps_factor(err_norm: float, eps_t: float, config: ControllerConfig) -> float:
    return (eps_t / _floored(err_norm, config)) ** (1.0 / config.k_order)


def eps_next_dt(err_norm: float, dt_n: float, eps_t: float, config: ControllerConfig) -> float:
    """EPS controller ``dt (eps_t / |e|)^(1/k)`` with clamps."""
    return clamp_dt(dt_n * eps_factor(err_norm, eps_t, config), dt_n, config)


def pi47_next_ratio(
    err_norm: float,
    err_norm_prev: float,
    alpha_n: float,
    eps_t: float,
    config: ControllerConfig,
) -> float:
    """PC.4.7 ratio ``(eps/e_n)^kI (e_{n-1}/e_n)^kP alpha_n`` clamped to the ratio window."""
    e_n = _floored(err_norm, config)
    e_prev = _floored(err_norm_prev, config)
    alpha = (eps_t / e_n) ** config.k_i * (e_prev / e_n) ** config.k_p * alpha_n
    return min(max(alpha, config.ratio_min), config.ratio_max)


class StepController:
    """Turns local error norms into accept/reject decisions and the next step size."""

    def __init__(self, config: ControllerConfig, eps_t: float) -> None:
        if eps_t <= 0.0:
            raise ValueError("eps_t must be positive")
        self.config = config
        self.eps_t = eps_t
        self.state = ControllerState()
        self.fed_norms: list[float] = []
        self.discarded_norms: list[float | None] = []

    @property
    def kind(self) -> str:
        return self.config.kind

    def initial_dt(self) -> float:
        return min(max(self.config.initial_dt, self.config.dt_min), self.config.dt_max)

    def accept_or_reject(self, err_norm: float, dt: float) -> ControllerDecision:
        """Accept when ``|e| <= reject_factor * eps_t``; otherwise retry with the EPS step.

        Raises:
            StepSizeCollapseError: If the retry step falls below ``dt_min``.
        """

        if err_norm <= self.config.reject_factor * self.eps_t:
            return ControllerDecision(Decision.ACCEPT, dt, err_norm)
        retry = dt * eps_factor(err_norm, self.eps_t, self.config)
        if retry < self.config.dt_min:
            raise StepSizeCollapseError(retry, self.config.dt_min)
        retry = clamp_dt(retry, dt, self.config)
        logger.info("step rejected: |e|=%.3e > %.1f eps_t, dt %.3e -> %.3e", err_norm, self.config.reject_factor, dt, retry)
        return ControllerDecision(Decision.REJECT, retry, err_norm)

    def decide(self, err_norm: float | None, dt: float) -> ControllerDecision:
        """Decision for a solved step of size ``dt``.

        ``err_norm=None`` (no usable estimate, e.g. the first step) holds dt.
        """

        if err_norm is None or self.state.suppress_next:
            self.discarded_norms.append(err_norm)
            self.state.suppress_next = False
            self.state.err_norm_prev = None
            self._record_accept(dt)
            return ControllerDecision(Decision.HOLD, clamp_dt(dt, dt, self.config), err_norm)

        decision = self.accept_or_reject(err_norm, dt)
        if not decision.accepted:
            return decision

        self.fed_norms.append(err_norm)
        self.state.err_norm_curr = err_norm
        if self.config.kind == "EPS" or self.state.err_norm_prev is None:
            next_dt = eps_next_dt(err_norm, dt, self.eps_t, self.config)
        else:
            last = self.state.last_dt
            alpha_n = dt / last if last is not None else self.state.alpha_curr
            ratio = pi47_next_ratio(err_norm, self.state.err_norm_prev, alpha_n, self.eps_t, self.config)
            next_dt = clamp_dt(ratio * dt, dt, self.config)
        self.state.err_norm_prev = err_norm
        self._record_accept(dt)
        return ControllerDecision(Decision.ACCEPT, next_dt, err_norm)

    def _record_accept(self, dt: float) -> None:
        if self.state.last_dt is not None:
            self.state.alpha_curr = dt / self.state.last_dt
        self.state.last_dt = dt
        self.state.steps_since_regrid += 1

    def on_failure(self, dt: float, t: float | None = None) -> float:
        """Step size after a failed nonlinear solve.

        Raises:
            StepSizeCollapseError: If the cut step falls below ``dt_min``.
        """

        cut = dt * self.config.failure_cut
        if cut < self.config.dt_min:
            raise StepSizeCollapseError(cut, self.config.dt_min, t)
        logger.info("nonlinear solve failed, dt %.3e -> %.3e", dt, cut)
        return cut

    def notify_regrid(self) -> None:
        """Discard the next estimate and re-prime the PI memory with post-regrid norms only."""
        self.state.suppress_next = True
        self.state.err_norm_prev = None
        self.state.steps_since_regrid = 0


@dataclass
class ControllerTrace:
    """Step-size history, used by tests and the run summary."""

    times: list[float] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)

    def append(self, t: float, dt: float) -> None:
        self.times.append(t)
        self.dts.append(dt)

    def local_maxima(self) -> int:
        d = self.dts
        return sum(1 for i in range(1, len(d) - 1) if d[i] > d[i - 1] and d[i] >= d[i + 1])
