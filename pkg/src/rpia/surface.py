"""Doubly randomized block iteration for the stacked tensor surface system.

Each iteration draws one row block and one column block independently (each
with probability proportional to the squared Frobenius norm of the matching
column block of its stacked factor), updates the selected control subgrid,
and patches the residual with the same low-rank product. The three point
coordinates evolve under identical block draws.

The Kronecker product of the two factors is never formed; every update works
on the small factors directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AugmentedSurfaceSystem, BlockPartition
from .curve import StoppingRule, TrajectorySample
from .errors import DimensionMismatch


@dataclass
class SurfaceFitState:
    """Mutable iteration state; arrays are coordinate-first internally."""

    system: AugmentedSurfaceSystem
    control_grid: np.ndarray      # (ncoord, n1 + 1, n2 + 1)
    residual: np.ndarray          # (ncoord, rows(A)+rows(Lu), rows(B)+rows(Lv))
    fitted_points: np.ndarray     # (ncoord, m + 1, p + 1)
    iteration: int
    rng: np.random.Generator
    last_move_norm: float = 0.0


@dataclass(frozen=True)
class SurfaceFitResult:
    control_grid: np.ndarray      # (n1 + 1, n2 + 1, ncoord)
    iterations: int
    converged: bool
    stop_reason: str
    trajectory: tuple[TrajectorySample, ...] = field(default_factory=tuple)


def _make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def init_state(system: AugmentedSurfaceSystem, grid0, seed) -> SurfaceFitState:
    """Fresh state at iterate 0 with residual and fitted points from scratch."""
    grid = np.asarray(grid0, dtype=float)
    ncoord = system.targets.shape[2]
    n_u, n_v = system.n_controls
    if grid.shape != (n_u, n_v, ncoord):
        raise DimensionMismatch(
            f"initial control grid has shape {grid.shape}, expected {(n_u, n_v, ncoord)}"
        )
    controls = np.ascontiguousarray(np.moveaxis(grid, -1, 0))
    a_hat = system.row_stacked
    b_hat = system.col_stacked
    residual = np.empty((ncoord, a_hat.shape[0], b_hat.shape[0]))
    fitted = np.empty((ncoord, system.data_rows, system.data_cols))
    design_u = system.design_u
    design_v = system.design_v
    for f in range(ncoord):
        residual[f] = system.targets[:, :, f] - a_hat @ controls[f] @ b_hat.T
        fitted[f] = design_u @ controls[f] @ design_v.T
    return SurfaceFitState(system, controls, residual, fitted, 0, _make_rng(seed))


def select_blocks(
    state: SurfaceFitState,
    row_partition: BlockPartition,
    col_partition: BlockPartition,
) -> tuple[int, int]:
    """Two independent categorical draws: row block first, then column block."""
    u = state.rng.random()
    v = state.rng.random()
    t = int(np.searchsorted(row_partition.cumulative, u, side="right"))
    s = int(np.searchsorted(col_partition.cumulative, v, side="right"))
    return t, s


def step(
    state: SurfaceFitState,
    row_partition: BlockPartition,
    col_partition: BlockPartition,
) -> SurfaceFitState:
    """One randomized subgrid update, applied in place."""
    t, s = select_blocks(state, row_partition, col_partition)
    row_span = row_partition.spans[t]
    col_span = col_partition.spans[s]
    row_index = row_span if row_span is not None else row_partition.blocks[t]
    col_index = col_span if col_span is not None else col_partition.blocks[s]
    a_cols = state.system.row_stacked[:, row_index]
    b_cols = state.system.col_stacked[:, col_index]
    scale = row_partition.norms_sq[t] * col_partition.norms_sq[s]
    m_rows = state.system.data_rows
    p_cols = state.system.data_cols
    move_sq = 0.0
    for f in range(state.control_grid.shape[0]):
        delta = a_cols.T @ state.residual[f] @ b_cols
        delta /= scale
        if row_span is not None and col_span is not None:
            state.control_grid[f, row_span, col_span] += delta
        else:
            state.control_grid[f][np.ix_(np.atleast_1d(row_index), np.atleast_1d(col_index))] += delta
        move = (a_cols @ delta) @ b_cols.T
        state.residual[f] -= move
        top = move[:m_rows, :p_cols]
        state.fitted_points[f] += top
        move_sq += float(np.sum(top * top))
    state.last_move_norm = float(np.sqrt(move_sq))
    state.iteration += 1
    return state


def _refresh(state: SurfaceFitState) -> None:
    # Recompute the incrementally maintained quantities to shed float drift.
    system = state.system
    for f in range(state.control_grid.shape[0]):
        state.residual[f] = (
            system.targets[:, :, f]
            - system.row_stacked @ state.control_grid[f] @ system.col_stacked.T
        )
        state.fitted_points[f] = (
            system.design_u @ state.control_grid[f] @ system.design_v.T
        )


def run(
    system: AugmentedSurfaceSystem,
    row_partition: BlockPartition,
    col_partition: BlockPartition,
    grid0,
    stop: StoppingRule,
    seed,
    trajectory_stride: int = 10,
    refresh_every: int = 500,
) -> SurfaceFitResult:
    """Iterate until the fitted surface points settle or the cap is hit.

    Mirrors the curve runner: the change criterion uses the unpenalized
    fitted points (design_u @ P @ design_v^T over all coordinates), with an
    absolute fallback when the previous fitted points have zero norm.
    """
    state = init_state(system, grid0, seed)
    trajectory: list[TrajectorySample] = []
    converged = False
    reason = "max_iter"
    quiet_steps = 0
    for _ in range(stop.max_iter):
        previous_norm = float(np.linalg.norm(state.fitted_points))
        step(state, row_partition, col_partition)
        if previous_norm > 0.0:
            rel = state.last_move_norm / previous_norm
        else:
            rel = state.last_move_norm
        if trajectory_stride and state.iteration % trajectory_stride == 0:
            trajectory.append(
                TrajectorySample(
                    state.iteration, rel, float(np.linalg.norm(state.residual))
                )
            )
        quiet_steps = quiet_steps + 1 if rel < stop.tol else 0
        if quiet_steps >= stop.patience:
            converged = True
            reason = "tol"
            break
        if refresh_every and state.iteration % refresh_every == 0:
            _refresh(state)
    return SurfaceFitResult(
        np.moveaxis(state.control_grid, 0, -1).copy(),
        state.iteration,
        converged,
        reason,
        tuple(trajectory),
    )
