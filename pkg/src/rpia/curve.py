"""Randomized block-coordinate iteration for the stacked curve system.

Each iteration draws one column block with probability proportional to its
squared Frobenius norm, moves the corresponding control points along the
block correlation with the residual, and patches the residual incrementally.
All point coordinates share the same block draw.

Randomness comes from the Philox counter-based generator seeded per fit, so
a fit is a pure function of ``(system, partition, p0, stop, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AugmentedCurveSystem, BlockPartition
from .errors import DimensionMismatch


@dataclass(frozen=True)
class StoppingRule:
    """Relative-change tolerance on the fitted points plus an iteration cap.

    The change is measured on the unpenalized fitted points (design times
    controls), not on the stacked residual. When the previous fitted points
    have zero norm the criterion falls back to the absolute change.

    ``patience`` is the number of consecutive iterations the criterion must
    hold before stopping. A single block update can land exactly on its own
    block's stationary point (a one-column block drawn twice with no
    overlapping update in between has exactly zero move), so a single-hit
    rule stops far from convergence; a few consecutive hits filter that out.
    """

    tol: float = 1e-8
    max_iter: int = 8000
    patience: int = 3


@dataclass(frozen=True)
class TrajectorySample:
    iteration: int
    rel_change: float
    residual_norm: float


@dataclass
class CurveFitState:
    """Mutable iteration state: controls, residual, cached fitted points, RNG."""

    system: AugmentedCurveSystem
    control_points: np.ndarray
    residual: np.ndarray
    fitted_points: np.ndarray
    iteration: int
    rng: np.random.Generator
    last_move_norm: float = 0.0


@dataclass(frozen=True)
class CurveFitResult:
    control_points: np.ndarray
    iterations: int
    converged: bool
    stop_reason: str
    trajectory: tuple[TrajectorySample, ...] = field(default_factory=tuple)


def _make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def init_state(system: AugmentedCurveSystem, p0, seed) -> CurveFitState:
    """Fresh state at iterate 0 with the residual computed from scratch."""
    controls = np.array(p0, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    expected = (system.n_controls, system.targets.shape[1])
    if controls.shape != expected:
        raise DimensionMismatch(
            f"initial controls have shape {controls.shape}, expected {expected}"
        )
    residual = system.targets - system.stacked @ controls
    fitted = system.design @ controls
    return CurveFitState(system, controls, residual, fitted, 0, _make_rng(seed))


def select_block(state: CurveFitState, partition: BlockPartition) -> int:
    """Draw a block index from the partition's norm-weighted distribution."""
    u = state.rng.random()
    return int(np.searchsorted(partition.cumulative, u, side="right"))


def step(state: CurveFitState, partition: BlockPartition) -> CurveFitState:
    """One randomized block update, applied in place.

    Only the drawn block of control points changes; the residual and the
    cached fitted points are patched with the same column-block product.
    """
    t = select_block(state, partition)
    span = partition.spans[t]
    index = span if span is not None else partition.blocks[t]
    cols = state.system.stacked[:, index]
    delta = cols.T @ state.residual
    delta /= partition.norms_sq[t]
    state.control_points[index] += delta
    move = cols @ delta
    state.residual -= move
    top = move[: state.system.data_rows]
    state.fitted_points += top
    state.last_move_norm = float(np.linalg.norm(top))
    state.iteration += 1
    return state


def _refresh(state: CurveFitState) -> None:
    # Recompute the incrementally maintained quantities to shed float drift.
    state.residual = state.system.targets - state.system.stacked @ state.control_points
    state.fitted_points = state.system.design @ state.control_points


def run(
    system: AugmentedCurveSystem,
    partition: BlockPartition,
    p0,
    stop: StoppingRule,
    seed,
    trajectory_stride: int = 10,
    refresh_every: int = 500,
) -> CurveFitResult:
    """Iterate until the fitted points settle or the iteration cap is hit.

    Parameters
    ----------
    system, partition : the stacked problem and its column blocks.
    p0 : array_like
        Initial control points, shape (n_controls, ncoord).
    stop : StoppingRule
    seed : int or numpy.random.Generator
        Philox key for the block draws.
    trajectory_stride : int
        Record a trajectory sample every this many iterations (0 disables).
    refresh_every : int
        Recompute the residual from scratch at this period (0 disables).
    """
    state = init_state(system, p0, seed)
    trajectory: list[TrajectorySample] = []
    converged = False
    reason = "max_iter"
    quiet_steps = 0
    for _ in range(stop.max_iter):
        previous_norm = float(np.linalg.norm(state.fitted_points))
        step(state, partition)
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
    return CurveFitResult(
        state.control_points,
        state.iteration,
        converged,
        reason,
        tuple(trajectory),
    )
