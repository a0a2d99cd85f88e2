"""
Time loop of the adaptive radiation diffusion simulator.

One :class:`Simulation` wires the hierarchy, the spatial operator, the JFNK
solver with its physics-based preconditioner, the step controller and the
regridder into the loop: predict, solve, estimate, accept or reject, update,
and periodically regrid with a warm restart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.errors import NewtonDivergedError, PositivityError, RadDiffError
from app.schemas.reports import RunSummary, SolverReport, StepRecord
from app.schemas.run_config import RunConfig, dump_run_config
from app.services.controller import ControllerDecision, ControllerTrace, Decision, StepController
from app.services.discretization import RadiationDiffusion
from app.services.integrator import (
    NormScaling,
    TimeHistory,
    error_norm,
    estimate_local_error,
    initial_guess,
    predict,
    step_beta,
    step_residual,
    update_derivative,
)
from app.services.jfnk import newton_solve
from app.services.output import RunWriter
from app.services.preconditioner import PhysicsPreconditioner
from app.services.regridder import Regridder, regrid_record, warm_restart
from app.services.samr import IndexBox, PatchHierarchy, build_hierarchy

logger = logging.getLogger(__name__)

TIME_EPS = 1.0e-12


@dataclass
class Sample:
    """Solution captured at a requested sample time."""

    t: float
    hierarchy: PatchHierarchy
    state: np.ndarray


@dataclass
class RunStats:
    accepted: int = 0
    rejected: int = 0
    failed: int = 0
    regrids: int = 0
    newton_iters: int = 0
    gmres_iters: int = 0
    accepted_dts: list[float] = field(default_factory=list)


def initial_state(hierarchy: PatchHierarchy, e0: float) -> np.ndarray:
    """Uniform ``E = e0``, ``T = e0^(1/4)`` on every valid cell."""
    n = hierarchy.n_valid
    return np.concatenate([np.full(n, e0), np.full(n, e0**0.25)])


def initial_hierarchy(config: RunConfig) -> PatchHierarchy:
    mesh = config.mesh
    refine_boxes = [
        [IndexBox(box.lower, box.upper) for box in boxes] for boxes in mesh.refine_boxes
    ]
    return build_hierarchy(
        (mesh.domain_lower, mesh.domain_upper),
        mesh.base_resolution,
        refine_boxes,
        max_levels=mesh.max_levels,
    )


class Simulation:
    """One simulation run.

    Args:
        config: Complete run configuration.
        out_dir: Directory for the run artifacts; nothing is written when ``None``.
    """

    def __init__(self, config: RunConfig, out_dir: str | Path | None = None) -> None:
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.hierarchy = initial_hierarchy(config)
        self.operator = RadiationDiffusion(self.hierarchy, config.material, config.physics)
        self.preconditioner = PhysicsPreconditioner(self.operator, config.fac, config.threads)
        self.regridder = Regridder(config.regrid)
        self.scaling = NormScaling(config.controller.eta_e, config.controller.eta_t)
        self.eps_t = config.controller.tolerance(self.hierarchy.equivalent_resolution())
        self.controller = StepController(config.controller, self.eps_t)
        self.trace = ControllerTrace()
        self.stats = RunStats()
        self.samples: list[Sample] = []
        self.history = TimeHistory.start(initial_state(self.hierarchy, config.e0), self.operator)
        self.writer: RunWriter | None = None
        self.step_index = 0

    # assembly ----------------------------------------------------------

    def _rebuild(self, hierarchy: PatchHierarchy) -> None:
        self.hierarchy = hierarchy
        self.operator = RadiationDiffusion(hierarchy, self.config.material, self.config.physics)
        self.preconditioner = PhysicsPreconditioner(self.operator, self.config.fac, self.config.threads)

    def solve_step(
        self,
        history: TimeHistory,
        dt: float,
        guess: np.ndarray,
        first_order: bool = False,
    ) -> tuple[np.ndarray, SolverReport]:
        """Solve the implicit system of one step of size ``dt`` from ``history``."""
        residual = step_residual(history, dt, self.operator, first_order)
        beta = step_beta(history, dt, first_order)

        def factory(u: np.ndarray) -> PhysicsPreconditioner:
            return self.preconditioner.setup(u, beta)

        return newton_solve(residual, guess, factory, self.config.newton)

    # regridding --------------------------------------------------------

    def _initial_regrids(self) -> None:
        policy = self.config.regrid
        if not policy.enabled or self.hierarchy.max_levels < 2:
            return
        passes = policy.initial_regrids
        if passes is None:
            passes = self.hierarchy.max_levels - 1
        for _ in range(passes):
            outcome = self.regridder.regrid(self.hierarchy, self.history)
            if not outcome.changed:
                break
            self._rebuild(outcome.hierarchy)
            self.history = outcome.history
            self.history.udot_n = self.operator(self.history.u_n)
            self.stats.regrids += 1
            self._record_regrid("initial", None)

    def _regrid(self) -> None:
        outcome = self.regridder.regrid(self.hierarchy, self.history)
        if not outcome.changed:
            return
        self._rebuild(outcome.hierarchy)
        self.history, restart, report = warm_restart(
            outcome.history, self.solve_step, self.controller, self.config.regrid.restart
        )
        self.stats.regrids += 1
        if report is not None:
            self.stats.newton_iters += report.newton_iters
        self._record_regrid(restart, report)

    def _record_regrid(self, restart: str, report: SolverReport | None) -> None:
        record = regrid_record(self.step_index, self.hierarchy, self.history.t_n, restart, report)
        logger.info(
            "regrid step=%d levels=%d valid=%d fraction=%.3f restart=%s",
            record.step,
            record.levels,
            record.valid_dofs,
            record.dof_fraction,
            restart,
        )
        if self.writer is not None:
            self.writer.regrid(record)

    # stepping ------------------------------------------------------------

    @property
    def fixed_stepping(self) -> bool:
        return self.config.fixed_dt is not None or self.config.dt_schedule is not None

    def _scheduled_dt(self) -> float:
        if self.config.dt_schedule is not None:
            schedule = self.config.dt_schedule
            return schedule[min(self.stats.accepted, len(schedule) - 1)]
        assert self.config.fixed_dt is not None
        return self.config.fixed_dt

    def _next_stop(self, t: float) -> float:
        stops = [self.config.t_final]
        stops.extend(s for s in self.config.sample_times if s > t + TIME_EPS)
        interval = self.config.dump_interval
        if interval is not None:
            stops.append((np.floor(t / interval + TIME_EPS) + 1.0) * interval)
        return min(stops)

    def _record_step(self, dt: float, decision: ControllerDecision, report: SolverReport, regrid: bool) -> None:
        record = StepRecord(
            step=self.step_index,
            t=self.history.t_n,
            dt=dt,
            err_norm=decision.err_norm,
            newton_iters=report.newton_iters,
            gmres_iters=report.total_gmres_iters,
            valid_dofs=self.hierarchy.n_valid,
            levels=self.hierarchy.num_levels,
            regrid_flag=regrid,
            accepted=decision.accepted,
            decision=decision.decision.value,
            controller="fixed" if self.fixed_stepping else self.controller.kind,
        )
        if self.writer is not None:
            self.writer.step(record)

    def take_step(self, dt: float) -> tuple[bool, float]:
        """Attempt one step; returns ``(accepted, next_dt)``."""
        history = self.history
        first_order = not history.has_previous
        prediction = predict(history, dt)
        u, report = self.solve_step(history, dt, initial_guess(prediction, history.u_n))
        self.stats.newton_iters += report.newton_iters
        self.stats.gmres_iters += report.total_gmres_iters

        if not report.converged:
            self.stats.failed += 1
            logger.info("step at t=%.6e dt=%.3e failed: %s", history.t_n, dt, report.failure_reason)
            failed = ControllerDecision(Decision.FAIL, dt, None)
            self._record_step(dt, failed, report, regrid=False)
            if self.fixed_stepping:
                raise NewtonDivergedError(f"fixed step dt={dt:.3e} at t={history.t_n:.6e}: {report.failure_reason}")
            return False, self.controller.on_failure(dt, history.t_n)

        err = None
        if not first_order:
            estimate = estimate_local_error(u, prediction, history.ratio(dt))
            err = error_norm(estimate, u, self.scaling)
        if self.fixed_stepping:
            decision = ControllerDecision(Decision.ACCEPT, dt, err)
        else:
            decision = self.controller.decide(err, dt)
        if not decision.accepted:
            self.stats.rejected += 1
            self._record_step(dt, decision, report, regrid=False)
            return False, decision.next_dt

        udot = update_derivative(u, history, dt)
        history.advance(u, udot, dt)
        if not np.all(u > 0.0):
            raise PositivityError(f"non-positive solution accepted at t={history.t_n:.6e}")
        self.stats.accepted += 1
        self.stats.accepted_dts.append(dt)
        self.step_index += 1
        self.trace.append(history.t_n, dt)

        regrid_due = (
            self.config.regrid.enabled
            and self.hierarchy.max_levels > 1
            and self.step_index % self.config.regrid.interval == 0
        )
        self._record_step(dt, decision, report, regrid=regrid_due)
        if regrid_due:
            self._regrid()
        return True, decision.next_dt

    # driver --------------------------------------------------------------

    def _snapshot(self) -> None:
        if self.writer is not None:
            self.writer.snapshot(self.hierarchy, self.history.u_n, self.history.t_n, self.step_index)

    def _capture_samples(self, pending: list[float]) -> list[float]:
        t = self.history.t_n
        remaining = []
        for s in pending:
            if abs(t - s) <= TIME_EPS * max(1.0, s):
                self.samples.append(Sample(s, self.hierarchy, self.history.u_n.copy()))
            elif s > t:
                remaining.append(s)
        return remaining

    def run(self) -> RunSummary:
        """Run to ``t_final`` and return the summary.

        Raises:
            RadDiffError: On a fatal solver error, after the last good state was written.
        """

        config = self.config
        if self.out_dir is not None:
            self.writer = RunWriter(self.out_dir)
            (self.out_dir / "config.env").write_text(dump_run_config(config), encoding="utf-8")
        logger.info("run %s: eps_t=%.3e, hierarchy %s", config.problem, self.eps_t, self.hierarchy.describe())
        logger.info("effective configuration:\n%s", dump_run_config(config))
        try:
            return self._run()
        except RadDiffError as exc:
            logger.error("run aborted at t=%.6e: %s", self.history.t_n, exc)
            self._snapshot()
            self._finish(status="failed", message=str(exc))
            raise
        finally:
            if self.writer is not None:
                self.writer.close()

    def _run(self) -> RunSummary:
        config = self.config
        self._initial_regrids()
        pending = sorted(s for s in config.sample_times if s >= 0.0)
        pending = self._capture_samples(pending)
        self._snapshot()
        last_snapshot_step = self.step_index

        dt = self._scheduled_dt() if self.fixed_stepping else self.controller.initial_dt()
        t_final = config.t_final
        while self.history.t_n < t_final - TIME_EPS * max(1.0, t_final):
            stop = self._next_stop(self.history.t_n)
            dt_step = min(dt, stop - self.history.t_n)
            accepted, dt = self.take_step(dt_step)
            if not accepted:
                continue
            if self.fixed_stepping:
                dt = self._scheduled_dt()
            pending = self._capture_samples(pending)
            interval = config.dump_interval
            if interval is not None and _on_multiple(self.history.t_n, interval):
                self._snapshot()
                last_snapshot_step = self.step_index

        if last_snapshot_step != self.step_index:
            self._snapshot()
        return self._finish()

    def _finish(self, status: str = "ok", message: str | None = None) -> RunSummary:
        stats = self.stats
        attempts = max(stats.accepted, 1)
        summary = RunSummary(
            run_dir=str(self.out_dir) if self.out_dir is not None else "",
            problem=self.config.problem,
            t_final=self.config.t_final,
            t_reached=self.history.t_n,
            accepted_steps=stats.accepted,
            rejected_steps=stats.rejected,
            failed_solves=stats.failed,
            regrids=stats.regrids,
            avg_newton_iters=stats.newton_iters / attempts,
            avg_gmres_iters=stats.gmres_iters / attempts,
            final_levels=self.hierarchy.num_levels,
            final_valid_dofs=self.hierarchy.n_valid,
            final_dof_fraction=self.hierarchy.n_valid / self.hierarchy.finest_uniform_cells(),
            eps_t=self.eps_t,
            snapshots=len(self.writer.snapshots) if self.writer is not None else 0,
            status=status,
            message=message,
        )
        if self.writer is not None:
            self.writer.summary(summary)
        logger.info(
            "finished t=%.6e: %d accepted, %d rejected, avg newton %.2f, avg gmres %.2f",
            summary.t_reached,
            summary.accepted_steps,
            summary.rejected_steps,
            summary.avg_newton_iters,
            summary.avg_gmres_iters,
        )
        return summary


def _on_multiple(t: float, interval: float) -> bool:
    k = round(t / interval)
    return k > 0 and abs(t - k * interval) <= TIME_EPS * max(1.0, t)


def run_simulation(config: RunConfig, out_dir: str | Path | None = None) -> RunSummary:
    """Run one simulation; artifacts go to ``out_dir`` when given."""
    return Simulation(config, out_dir).run()
