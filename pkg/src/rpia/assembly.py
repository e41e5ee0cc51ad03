"""Collocation matrices, difference penalties, stacked systems, column partitions.

The penalized fitting problems are carried around in their stacked
("augmented") form: the design matrix with ``sqrt(lam)`` times the penalty
matrix appended below it, and zero-padded targets. Ordinary least squares on
the stacked system is algebraically identical to the penalized problem, which
is what lets one randomized solver cover both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import KnotVector, eval_basis
from .errors import DimensionMismatch, InvalidConfig, ZeroColumnBlock


def assemble_collocation(knots: KnotVector, params) -> np.ndarray:
    """Dense matrix of basis values: entry (j, i) is basis i at parameter j.

    Rows sum to 1 and carry at most ``degree + 1`` nonzeros each.
    """
    x = np.asarray(params, dtype=float)
    matrix = np.zeros((x.size, knots.n_basis))
    width = knots.degree + 1
    for row, xj in enumerate(x):
        span = eval_basis(knots, xj)
        matrix[row, span.start: span.start + width] = span.values
    return matrix


def difference_matrix(size: int, scale: float) -> np.ndarray:
    """Scaled second-order difference matrix with Dirichlet boundaries.

    ``scale * tridiag(1, -2, 1)`` of the given size; symmetric and negative
    definite, so its Gram matrix is positive definite and it is invertible.
    """
    if size < 2:
        raise InvalidConfig("difference matrix needs size >= 2")
    if scale <= 0.0:
        raise InvalidConfig("difference matrix scale must be positive")
    matrix = -2.0 * np.eye(size) + np.eye(size, k=1) + np.eye(size, k=-1)
    return scale * matrix


@dataclass(frozen=True)
class AugmentedCurveSystem:
    """Design matrix stacked over the scaled penalty, with zero-padded targets.

    ``stacked`` is ((m+1)+(n+1)) x (n+1) in Fortran order so column blocks
    slice to views; ``targets`` carries one column per point coordinate and is
    zero below row ``data_rows``.
    """

    stacked: np.ndarray
    targets: np.ndarray
    lam: float
    data_rows: int

    @property
    def design(self) -> np.ndarray:
        """The unpenalized top block (the plain collocation matrix)."""
        return self.stacked[: self.data_rows]

    @property
    def data(self) -> np.ndarray:
        return self.targets[: self.data_rows]

    @property
    def n_controls(self) -> int:
        return self.stacked.shape[1]


@dataclass(frozen=True)
class AugmentedSurfaceSystem:
    """Stacked row/column factors and zero-padded target grid.

    ``row_stacked`` is [A; sqrt(lam) Lu], ``col_stacked`` is [B; sqrt(lam) Lv],
    and ``targets`` puts the data grid in the top-left block of an otherwise
    zero array of shape (rows(A)+rows(Lu), rows(B)+rows(Lv), ncoord).
    """

    row_stacked: np.ndarray
    col_stacked: np.ndarray
    targets: np.ndarray
    lam: float
    data_rows: int
    data_cols: int

    @property
    def design_u(self) -> np.ndarray:
        return self.row_stacked[: self.data_rows]

    @property
    def design_v(self) -> np.ndarray:
        return self.col_stacked[: self.data_cols]

    @property
    def data(self) -> np.ndarray:
        return self.targets[: self.data_rows, : self.data_cols]

    @property
    def n_controls(self) -> tuple[int, int]:
        return self.row_stacked.shape[1], self.col_stacked.shape[1]


def augment_curve(design, penalty, data, lam: float) -> AugmentedCurveSystem:
    """Stack ``[design; sqrt(lam) * penalty]`` with zero-padded targets.

    Solving least squares on the stacked pair is identical to minimizing
    ``|design p - data|^2 + lam * |penalty p|^2``.
    """
    a = np.asarray(design, dtype=float)
    g = np.asarray(penalty, dtype=float)
    q = np.asarray(data, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    if lam < 0.0:
        raise InvalidConfig("penalty weight must be nonnegative")
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionMismatch("penalty matrix must be square")
    if g.shape[1] != a.shape[1]:
        raise DimensionMismatch(
            f"penalty size {g.shape} does not match {a.shape[1]} columns of the design"
        )
    if q.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"{q.shape[0]} target rows for {a.shape[0]} design rows"
        )
    stacked = np.asfortranarray(np.vstack([a, math.sqrt(lam) * g]))
    targets = np.vstack([q, np.zeros((g.shape[0], q.shape[1]))])
    return AugmentedCurveSystem(stacked, targets, float(lam), a.shape[0])


def augment_surface(design_u, design_v, penalty_u, penalty_v, data, lam: float) -> AugmentedSurfaceSystem:
    """Stack both direction factors and zero-pad the target grid.

    The squared residual of the stacked tensor system expands into the
    four-term objective: data misfit, the two singly weighted cross penalty
    terms, and the ``lam**2`` doubly penalized term.
    """
    a = np.asarray(design_u, dtype=float)
    b = np.asarray(design_v, dtype=float)
    lu = np.asarray(penalty_u, dtype=float)
    lv = np.asarray(penalty_v, dtype=float)
    grid = np.asarray(data, dtype=float)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    if lam < 0.0:
        raise InvalidConfig("penalty weight must be nonnegative")
    for mat, cols, name in ((lu, a.shape[1], "row penalty"), (lv, b.shape[1], "column penalty")):
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[1] != cols:
            raise DimensionMismatch(f"{name} must be square of size {cols}")
    if grid.shape[0] != a.shape[0] or grid.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"data grid {grid.shape[:2]} does not match design rows "
            f"({a.shape[0]}, {b.shape[0]})"
        )
    root = math.sqrt(lam)
    row_stacked = np.asfortranarray(np.vstack([a, root * lu]))
    col_stacked = np.asfortranarray(np.vstack([b, root * lv]))
    targets = np.zeros((row_stacked.shape[0], col_stacked.shape[0], grid.shape[2]))
    targets[: grid.shape[0], : grid.shape[1]] = grid
    return AugmentedSurfaceSystem(
        row_stacked, col_stacked, targets, float(lam), a.shape[0], b.shape[0]
    )


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint column blocks with selection weights.

    ``blocks`` are sorted index arrays covering every column exactly once;
    ``probabilities`` are the squared Frobenius norms of the corresponding
    column blocks normalized to sum to one.
    """

    blocks: tuple[np.ndarray, ...]
    norms_sq: np.ndarray
    probabilities: np.ndarray
    spans: tuple = field(init=False, repr=False)
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        spans = []
        for block in self.blocks:
            if block.size and np.array_equal(block, np.arange(block[0], block[-1] + 1)):
                spans.append(slice(int(block[0]), int(block[-1]) + 1))
            else:
                spans.append(None)
        cumulative = np.cumsum(self.probabilities)
        cumulative[-1] = 1.0
        object.__setattr__(self, "spans", tuple(spans))
        object.__setattr__(self, "cumulative", cumulative)

    def __len__(self) -> int:
        return len(self.blocks)


def make_partition(matrix, block_size: int) -> BlockPartition:
    """Contiguous column blocks of ``block_size`` (ragged tail allowed).

    Selection weights are the squared Frobenius norms of the column blocks of
    ``matrix``, normalized by the total squared norm.

    Raises
    ------
    ZeroColumnBlock
        If any block has zero norm (it could never be selected).
    """
    mat = np.asarray(matrix, dtype=float)
    if block_size < 1:
        raise InvalidConfig("block size must be >= 1")
    n_cols = mat.shape[1]
    col_norms = np.einsum("ij,ij->j", mat, mat)
    blocks = []
    norms = []
    for start in range(0, n_cols, block_size):
        stop = min(start + block_size, n_cols)
        blocks.append(np.arange(start, stop))
        norms.append(float(col_norms[start:stop].sum()))
    norms = np.asarray(norms)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroColumnBlock(f"column block {bad} has zero norm")
    return BlockPartition(tuple(blocks), norms, norms / norms.sum())


def partition_from_blocks(matrix, blocks) -> BlockPartition:
    """Partition with caller-chosen index sets (used by reference checks)."""
    mat = np.asarray(matrix, dtype=float)
    index_sets = tuple(np.asarray(b, dtype=int) for b in blocks)
    covered = np.sort(np.concatenate(index_sets))
    if not np.array_equal(covered, np.arange(mat.shape[1])):
        raise InvalidConfig("blocks must cover every column exactly once")
    norms = np.asarray(
        [float(np.sum(mat[:, b] ** 2)) for b in index_sets]
    )
    if np.any(norms == 0.0):
        raise ZeroColumnBlock("a column block has zero norm")
    return BlockPartition(index_sets, norms, norms / norms.sum())
