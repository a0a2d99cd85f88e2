"""
Adaptive regridding: error-indicator tagging, Berger-Rigoutsos clustering,
nested hierarchy reconstruction, conservative data transfer and the
warm-restart re-solve of the current step.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from app.schemas.reports import RegridRecord, SolverReport
from app.schemas.run_config import RegridPolicy
from app.services.controller import StepController
from app.services.ghost_fill import GhostFiller
from app.services.integrator import TimeHistory, update_derivative
from app.services.samr import (
    RATIO,
    IndexBox,
    PatchHierarchy,
    build_hierarchy,
    coarsen_mask,
    dilate_mask,
    interior,
)
from app.services.transfer import prolong_conservative, synchronize

logger = logging.getLogger(__name__)

StepSolver = Callable[[TimeHistory, float, np.ndarray], tuple[np.ndarray, SolverReport]]


# indicators -------------------------------------------------------------


def compute_indicators(energy: np.ndarray, max_energy: float) -> tuple[np.ndarray, np.ndarray]:
    """Curvature and gradient indicators of a ghost-filled padded E array.

    ``tau_c = sum_a |E_{i+1} - 2 E_i + E_{i-1}| / (0.1 max E)`` and
    ``tau_g = sum_a |E_{i+1} - E_{i-1}| / 2 / (0.1 max E)``, i.e. the
    ``h^2 |E_aa|`` and ``h |E_a|`` centered differences summed over axes.
    """

    scale = 0.1 * max_energy
    centre = interior(energy)
    tau_c = np.zeros(centre.shape)
    tau_g = np.zeros(centre.shape)
    for axis in range(3):
        inner = [slice(1, -1)] * 3
        lo = list(inner)
        hi = list(inner)
        lo[axis] = slice(None, -2)
        hi[axis] = slice(2, None)
        low = energy[tuple(lo)]
        high = energy[tuple(hi)]
        tau_c += np.abs(high - 2.0 * centre + low)
        tau_g += 0.5 * np.abs(high - low)
    return tau_c / scale, tau_g / scale


def tag_cells(hierarchy: PatchHierarchy, state: np.ndarray, policy: RegridPolicy) -> list[np.ndarray]:
    """Tag cells of every level whose curvature or gradient indicator exceeds its threshold.

    Indicators use E synchronized onto covered cells, coarse-fine ghosts, and
    mirrored physical ghosts, scaled by the largest |E| over the level's valid
    cells (the whole footprint when a finer level covers all of it).
    """

    energy, _ = hierarchy.unpack(state)
    synchronize(hierarchy, energy)
    GhostFiller(hierarchy).fill_all(energy)
    tags = []
    for level, field in zip(hierarchy.levels, energy, strict=True):
        owned = level.valid if level.valid.any() else level.region
        max_energy = float(np.abs(interior(field)[owned]).max())
        if max_energy == 0.0:
            tags.append(np.zeros(level.shape, dtype=bool))
            continue
        tau_c, tau_g = compute_indicators(field, max_energy)
        tags.append(level.region & ((tau_c > policy.tau_c) | (tau_g > policy.tau_g)))
    return tags


# Berger-Rigoutsos ---------------------------------------------------------


def _bounding_box(tags: np.ndarray, box: IndexBox) -> IndexBox | None:
    cells = np.argwhere(tags[box.slices()])
    if cells.size == 0:
        return None
    lower = cells.min(axis=0) + np.asarray(box.lower)
    upper = cells.max(axis=0) + np.asarray(box.lower)
    return IndexBox(tuple(int(v) for v in lower), tuple(int(v) for v in upper))  # type: ignore[arg-type]


def _signature(sub: np.ndarray, axis: int) -> np.ndarray:
    others = tuple(a for a in range(3) if a != axis)
    return sub.sum(axis=others)


def _find_cut(sub: np.ndarray, min_width: int) -> tuple[int, int] | None:
    """Choose ``(axis, c)``: split into ``[0, c)`` and ``[c, n)`` along ``axis``.

    Zero-signature holes nearest the box centre come first, then the
    strongest sign change of the signature's second difference, then a
    bisection of the longest axis.
    """

    signatures = [_signature(sub, axis) for axis in range(3)]

    best_hole: tuple[float, int, int] | None = None
    for axis, sig in enumerate(signatures):
        holes = np.flatnonzero(sig == 0)
        for hole in holes:
            distance = abs(hole + 0.5 - sig.size / 2.0)
            if best_hole is None or distance < best_hole[0]:
                best_hole = (distance, axis, int(hole))
    if best_hole is not None:
        return best_hole[1], best_hole[2]

    best_edge: tuple[float, float, int, int] | None = None
    for axis, sig in enumerate(signatures):
        n = sig.size
        if n < 2 * min_width or n < 4:
            continue
        lap = sig[:-2] - 2 * sig[1:-1] + sig[2:]
        for i in range(lap.size - 1):
            if lap[i] * lap[i + 1] >= 0:
                continue
            cut = i + 2
            if cut < min_width or n - cut < min_width:
                continue
            strength = float(abs(lap[i + 1] - lap[i]))
            distance = abs(cut - n / 2.0)
            if best_edge is None or (strength, -distance) > (best_edge[0], -best_edge[1]):
                best_edge = (strength, distance, axis, cut)
    if best_edge is not None:
        return best_edge[2], best_edge[3]

    axis = int(np.argmax(sub.shape))
    if sub.shape[axis] >= 2 * min_width and sub.shape[axis] >= 2:
        return axis, sub.shape[axis] // 2
    return None


def _split_box(box: IndexBox, axis: int, cut: int) -> tuple[IndexBox, IndexBox]:
    left_upper = list(box.upper)
    right_lower = list(box.lower)
    left_upper[axis] = box.lower[axis] + cut - 1
    right_lower[axis] = box.lower[axis] + cut
    return (
        IndexBox(box.lower, tuple(left_upper)),  # type: ignore[arg-type]
        IndexBox(tuple(right_lower), box.upper),  # type: ignore[arg-type]
    )


def cluster_tags(tags: np.ndarray, efficiency: float = 0.8, min_width: int = 2) -> list[IndexBox]:
    """Cover the tagged cells with disjoint boxes (Berger-Rigoutsos).

    A box is accepted when its tagged fraction reaches ``efficiency``, when no
    side exceeds ``min_width``, or when no admissible cut exists.
    """

    if not tags.any():
        return []
    boxes: list[IndexBox] = []
    pending = [IndexBox.from_shape(tags.shape)]
    while pending:
        box = _bounding_box(tags, pending.pop())
        if box is None:
            continue
        sub = tags[box.slices()]
        if sub.sum() >= efficiency * box.volume or all(s <= min_width for s in box.shape):
            boxes.append(box)
            continue
        cut = _find_cut(sub, min_width)
        if cut is None:
            boxes.append(box)
            continue
        left, right = _split_box(box, *cut)
        # right first so the left half is processed next
        pending.extend([right, left])
    return boxes


def boxes_mask(shape: tuple[int, int, int], boxes: list[IndexBox]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for box in boxes:
        mask[box.slices()] = True
    return mask


def propose_refinement(
    hierarchy: PatchHierarchy,
    tags: list[np.ndarray],
    policy: RegridPolicy,
) -> list[list[IndexBox]]:
    """Refine boxes per level (coarser-level index space), built finest first so nesting holds."""
    min_width = max(1, policy.min_patch_size // RATIO)
    nx, ny, nz = hierarchy.base_shape
    refine_boxes: list[list[IndexBox]] = [[] for _ in range(hierarchy.max_levels - 1)]
    required: np.ndarray | None = None
    for index in range(hierarchy.max_levels - 2, -1, -1):
        scale = RATIO**index
        shape = (nx * scale, ny * scale, nz * scale)
        mask = np.zeros(shape, dtype=bool)
        if index < len(tags):
            mask |= dilate_mask(tags[index], policy.buffer_cells)
        if required is not None:
            mask |= required
        if not mask.any():
            required = None
            continue
        boxes = cluster_tags(mask, policy.efficiency, min_width)
        refine_boxes[index] = boxes
        if index > 0:
            required = coarsen_mask(dilate_mask(boxes_mask(shape, boxes), 1))
    while refine_boxes and not refine_boxes[-1]:
        refine_boxes.pop()
    return refine_boxes


# data transfer ------------------------------------------------------------


def transfer_scalar(old: PatchHierarchy, new: PatchHierarchy, values: np.ndarray) -> np.ndarray:
    """Move one variable onto a new hierarchy.

    Same-resolution data is copied wherever the old level existed; newly
    refined cells get the slope-limited conservative prolongation of the new
    coarser level.
    """

    arrays = old.unpack_scalar(values)
    synchronize(old, arrays)
    current = interior(arrays[0]).copy()
    parts = [current[new[0].valid]]
    for index in range(1, new.num_levels):
        prolonged = prolong_conservative(current)
        if index < old.num_levels:
            current = np.where(old[index].region, interior(arrays[index]), prolonged)
        else:
            current = prolonged
        parts.append(current[new[index].valid])
    return np.concatenate(parts)


def transfer_state(old: PatchHierarchy, new: PatchHierarchy, state: np.ndarray) -> np.ndarray:
    n = old.n_valid
    return np.concatenate(
        [transfer_scalar(old, new, state[:n]), transfer_scalar(old, new, state[n:])]
    )


def transfer_history(old: PatchHierarchy, new: PatchHierarchy, history: TimeHistory) -> TimeHistory:
    """Every history vector moved onto ``new``; times and step sizes are kept."""
    moved = {name: transfer_state(old, new, vec) for name, vec in history.vectors().items()}
    return TimeHistory(
        u_n=moved["u_n"],
        udot_n=moved["udot_n"],
        t_n=history.t_n,
        dt_n=history.dt_n,
        u_nm1=moved.get("u_nm1"),
        dt_nm1=history.dt_nm1,
        u_nm2=moved.get("u_nm2"),
        dt_nm2=history.dt_nm2,
    )


def previous_history(history: TimeHistory) -> TimeHistory | None:
    """History as it was before the last step (``None`` if no step was taken)."""
    if history.u_nm1 is None or history.dt_n is None:
        return None
    return TimeHistory(
        u_n=history.u_nm1,
        udot_n=np.zeros_like(history.u_nm1),
        t_n=history.t_n - history.dt_n,
        dt_n=history.dt_nm1,
        u_nm1=history.u_nm2,
        dt_nm1=history.dt_nm2,
    )


def warm_restart(
    history: TimeHistory,
    solve_step: StepSolver,
    controller: StepController,
    mode: str = "warm",
) -> tuple[TimeHistory, str, SolverReport | None]:
    """Re-solve the last step on the new hierarchy from the transferred state.

    On success ``u_n`` and ``udot_n`` are replaced by the re-solved values; on
    failure (or with ``mode="cold"``) the older history is dropped so the next
    step is backward Euler. The controller discards its next estimate either way.

    Returns:
        tuple: Updated history, restart kind actually used, and the re-solve report.
    """

    controller.notify_regrid()
    previous = previous_history(history)
    if previous is None:
        return history, "none", None
    if mode == "cold":
        _drop_old(history)
        return history, "cold", None

    assert history.dt_n is not None
    u, report = solve_step(previous, history.dt_n, history.u_n)
    if not report.converged:
        logger.warning("warm restart failed (%s); falling back to a cold restart", report.failure_reason)
        _drop_old(history)
        return history, "cold", report
    history.udot_n = update_derivative(u, previous, history.dt_n)
    history.u_n = u
    return history, "warm", report


def _drop_old(history: TimeHistory) -> None:
    history.u_nm1 = None
    history.u_nm2 = None
    history.dt_nm1 = None
    history.dt_nm2 = None


# driver-facing ------------------------------------------------------------


@dataclass
class RegridOutcome:
    hierarchy: PatchHierarchy
    history: TimeHistory
    changed: bool


class Regridder:
    """Tags, clusters and rebuilds hierarchies under one policy."""

    def __init__(self, policy: RegridPolicy) -> None:
        self.policy = policy

    def regrid(self, hierarchy: PatchHierarchy, history: TimeHistory) -> RegridOutcome:
        """Rebuild the hierarchy from the current solution; unchanged footprints skip the transfer."""
        tags = tag_cells(hierarchy, history.u_n, self.policy)
        refine_boxes = propose_refinement(hierarchy, tags, self.policy)
        new = build_hierarchy(
            (hierarchy.domain_lower, hierarchy.domain_upper),
            hierarchy.base_shape,
            refine_boxes,
            max_levels=hierarchy.max_levels,
        )
        if new.same_layout(hierarchy):
            return RegridOutcome(hierarchy, history, changed=False)
        logger.info(
            "regrid at t=%.6e: %d -> %d levels, %d -> %d valid cells",
            history.t_n,
            hierarchy.num_levels,
            new.num_levels,
            hierarchy.n_valid,
            new.n_valid,
        )
        return RegridOutcome(new, transfer_history(hierarchy, new, history), changed=True)


def regrid_record(
    step: int,
    hierarchy: PatchHierarchy,
    t: float,
    restart: str,
    report: SolverReport | None,
) -> RegridRecord:
    return RegridRecord(
        step=step,
        t=t,
        levels=hierarchy.num_levels,
        valid_dofs=hierarchy.n_valid,
        dof_fraction=hierarchy.n_valid / hierarchy.finest_uniform_cells(),
        restart=restart,
        resolve_newton_iters=0 if report is None else report.newton_iters,
    )
