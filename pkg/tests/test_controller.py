import pytest
from pydantic import ValidationError

from app.core.errors import StepSizeCollapseError
from app.schemas.run_config import ControllerConfig
from app.services.controller import (
    ControllerTrace,
    Decision,
    StepController,
    clamp_dt,
    eps_next_dt,
    pi47_next_ratio,
)

EPS = 1.0e-3


@pytest.mark.parametrize(("factor", "expected"), [(1.0 / 8.0, 2.0), (8.0, 0.5), (1.0, 1.0)])
def test_eps_controller(factor: float, expected: float) -> None:
    """With k = 3 an error of eps/8 doubles dt and 8 eps halves it."""
    assert eps_next_dt(factor * EPS, 1.0e-3, EPS, ControllerConfig()) == pytest.approx(expected * 1.0e-3)


def test_eps_controller_is_clamped() -> None:
    """A tiny error grows dt by at most ratio_max."""
    assert eps_next_dt(1.0e-20, 1.0e-3, EPS, ControllerConfig()) == pytest.approx(2.5e-3)


def test_pi47_ratio() -> None:
    """Steady error eps/8 and alpha_n = 1 give 8^(0.4/3) = 2^0.4."""
    ratio = pi47_next_ratio(EPS / 8.0, EPS / 8.0, 1.0, EPS, ControllerConfig())
    assert ratio == pytest.approx(1.31951, rel=1e-5)


def test_pi47_ratio_reacts_to_growing_error() -> None:
    """An error that doubled since the last step shrinks the ratio below the pure I part."""
    config = ControllerConfig()
    steady = pi47_next_ratio(EPS / 2.0, EPS / 2.0, 1.0, EPS, config)
    growing = pi47_next_ratio(EPS / 2.0, EPS / 4.0, 1.0, EPS, config)
    assert growing == pytest.approx(steady * 0.5 ** (0.7 / 3.0))


def test_clamp_dt_respects_bounds() -> None:
    """Ratio window first, then the absolute limits."""
    config = ControllerConfig(dt_max=1.0e-3)
    assert clamp_dt(1.0, 1.0e-3, config) == pytest.approx(1.0e-3)
    assert clamp_dt(1.0e-9, 1.0e-4, config) == pytest.approx(2.0e-5)


@pytest.mark.parametrize("factor", [0.5, 2.0])
def test_accepts_up_to_reject_factor(factor: float) -> None:
    """Errors up to twice the tolerance are accepted."""
    controller = StepController(ControllerConfig(), EPS)
    assert controller.accept_or_reject(factor * EPS, 1.0e-3).decision is Decision.ACCEPT


def test_rejects_large_error() -> None:
    """An error of 3 eps is retried with dt (1/3)^(1/3)."""
    controller = StepController(ControllerConfig(), EPS)
    decision = controller.accept_or_reject(3.0 * EPS, 1.0e-3)
    assert decision.decision is Decision.REJECT
    assert not decision.accepted
    assert decision.next_dt == pytest.approx(0.693361e-3, rel=1e-5)


def test_first_estimate_is_held() -> None:
    """No estimate keeps dt and counts as accepted."""
    controller = StepController(ControllerConfig(), EPS)
    decision = controller.decide(None, 1.0e-6)
    assert decision.decision is Decision.HOLD
    assert decision.accepted
    assert decision.next_dt == pytest.approx(1.0e-6)


def test_pi_controller_needs_two_norms() -> None:
    """The first fed norm uses the EPS rule; the second uses the PI rule with alpha_n = 2."""
    controller = StepController(ControllerConfig(), EPS)
    first = controller.decide(EPS / 8.0, 1.0e-3)
    assert first.next_dt == pytest.approx(2.0e-3)
    second = controller.decide(EPS, 2.0e-3)
    # (1/8)^(0.7/3) * 2 = 2^0.3
    assert second.next_dt == pytest.approx(2.0e-3 * 2.0**0.3)
    assert controller.fed_norms == [EPS / 8.0, EPS]


def test_eps_kind_ignores_history() -> None:
    """The EPS controller never uses the previous norm."""
    controller = StepController(ControllerConfig(kind="EPS"), EPS)
    controller.decide(EPS / 8.0, 1.0e-3)
    assert controller.decide(EPS / 8.0, 2.0e-3).next_dt == pytest.approx(4.0e-3)


def test_regrid_discards_next_estimate() -> None:
    """After a regrid the next estimate is dropped and dt is held."""
    controller = StepController(ControllerConfig(), EPS)
    controller.decide(EPS / 8.0, 1.0e-3)
    controller.notify_regrid()
    held = controller.decide(100.0 * EPS, 2.0e-3)
    assert held.decision is Decision.HOLD
    assert held.next_dt == pytest.approx(2.0e-3)
    assert controller.discarded_norms == [100.0 * EPS]
    assert controller.fed_norms == [EPS / 8.0]
    assert controller.state.err_norm_prev is None
    assert not controller.state.suppress_next


def test_rejection_below_dt_min_collapses() -> None:
    """A retry step below dt_min is fatal."""
    controller = StepController(ControllerConfig(), EPS)
    with pytest.raises(StepSizeCollapseError):
        controller.accept_or_reject(1.0e6 * EPS, 2.0e-12)


def test_failure_cut() -> None:
    """A failed solve halves dt until it would fall below dt_min."""
    controller = StepController(ControllerConfig(), EPS)
    assert controller.on_failure(1.0e-3) == pytest.approx(5.0e-4)
    with pytest.raises(StepSizeCollapseError) as excinfo:
        controller.on_failure(1.5e-12, t=0.25)
    assert excinfo.value.t == 0.25
    assert "t=2.5" in str(excinfo.value)


def test_tolerance_scales_with_resolution() -> None:
    """Unset eps_t halves for every doubling past 32."""
    assert ControllerConfig().tolerance(32) == pytest.approx(5.0e-4)
    assert ControllerConfig().tolerance(128) == pytest.approx(1.25e-4)
    assert ControllerConfig(eps_t=1.0e-3).tolerance(128) == pytest.approx(1.0e-3)


def test_gains_are_divided_by_order() -> None:
    """kk_I = 0.4 and kk_P = 0.7 with k = 3."""
    config = ControllerConfig()
    assert config.k_i == pytest.approx(0.4 / 3.0)
    assert config.k_p == pytest.approx(0.7 / 3.0)


def test_invalid_ratio_window() -> None:
    """ratio_min must lie below one."""
    with pytest.raises(ValidationError):
        ControllerConfig(ratio_min=1.5)


def test_non_positive_tolerance() -> None:
    """A controller needs a positive tolerance."""
    with pytest.raises(ValueError):
        StepController(ControllerConfig(), 0.0)


def test_trace_counts_local_maxima() -> None:
    """Peaks (ties to the right allowed) are counted once."""
    trace = ControllerTrace()
    for i, dt in enumerate([1.0, 2.0, 1.0, 3.0, 3.0, 1.0]):
        trace.append(float(i), dt)
    assert trace.local_maxima() == 2
