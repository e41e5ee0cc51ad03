"""Cubic B-spline basis evaluation, chord-length parametrization, knot construction.

The basis is clamped on [0, 1]: the first and last ``degree + 1`` knots are
pinned to 0 and 1, interior knots are placed by floor-interpolation into the
data parameter sequence. Evaluation uses the standard triangular recurrence,
which returns only the ``degree + 1`` basis values that can be nonzero at a
given parameter.

All functions here are pure; none hold state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, DuplicatePointWarning, InvalidConfig, OutOfDomain

DEGREE = 3


@dataclass(frozen=True)
class KnotVector:
    """Clamped, nondecreasing knot sequence on [0, 1].

    For ``n + 1`` basis functions of degree ``d`` the sequence has
    ``n + d + 2`` entries, the first and last ``d + 1`` of which are 0 and 1.
    """

    knots: np.ndarray
    degree: int = DEGREE

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        d = self.degree
        if knots.ndim != 1 or knots.size < 2 * (d + 1):
            raise InvalidConfig(f"knot vector needs at least {2 * (d + 1)} entries")
        if np.any(np.diff(knots) < 0.0):
            raise InvalidConfig("knot vector must be nondecreasing")
        if np.any(knots[: d + 1] != 0.0) or np.any(knots[-(d + 1):] != 1.0):
            raise InvalidConfig("knot vector must be clamped to [0, 1]")
        interior = knots[d + 1: -(d + 1)]
        if interior.size and (interior[0] <= 0.0 or interior[-1] >= 1.0):
            raise InvalidConfig("interior knots must lie strictly inside (0, 1)")

    @property
    def n_basis(self) -> int:
        """Number of basis functions supported by this sequence."""
        return self.knots.size - self.degree - 1


@dataclass(frozen=True)
class BasisSpan:
    """The contiguous run of basis values that are nonzero at one parameter.

    ``values[j]`` is the value of basis function ``start + j``; the run has
    ``degree + 1`` entries, some of which may be zero at clamped ends.
    """

    start: int
    values: np.ndarray

    def items(self):
        return [(self.start + j, float(v)) for j, v in enumerate(self.values)]


def chord_length_params(points) -> np.ndarray:
    """Normalized accumulated chord-length parameters for an ordered point list.

    Parameters
    ----------
    points : array_like, shape (m + 1, d)
        Ordered data points, d >= 1.

    Returns
    -------
    numpy.ndarray, shape (m + 1,)
        Strictly increasing parameters with first entry 0 and last entry 1.
        Each interior step is the chord length to the previous point divided
        by the total chord length.

    Raises
    ------
    DegenerateData
        If fewer than two points are given or the total chord length is zero.

    Warns
    -----
    DuplicatePointWarning
        Consecutive duplicate points give zero-length chords; the later
        parameter is nudged by one representable step to restore strict
        monotonicity.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateData("need at least two points to parametrize")
    chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return _normalize_chords(chords)


def surface_params(grid) -> tuple[np.ndarray, np.ndarray]:
    """Chord-length parameters for both directions of a surface grid.

    Row-direction parameters accumulate, for each row step, the summed chord
    lengths across all columns; column-direction parameters do the transpose.

    Parameters
    ----------
    grid : array_like, shape (m + 1, p + 1, d)
        Gridded data points.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        Row parameters of length m + 1 and column parameters of length p + 1,
        each spanning [0, 1].
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim != 3 or pts.shape[0] < 2 or pts.shape[1] < 2:
        raise DegenerateData("surface grid must be at least 2x2 points")
    row_chords = np.linalg.norm(np.diff(pts, axis=0), axis=2).sum(axis=1)
    col_chords = np.linalg.norm(np.diff(pts, axis=1), axis=2).sum(axis=0)
    return _normalize_chords(row_chords), _normalize_chords(col_chords)


def _normalize_chords(chords: np.ndarray) -> np.ndarray:
    total = float(chords.sum())
    if total <= 0.0:
        raise DegenerateData("total chord length is zero")
    params = np.empty(chords.size + 1)
    params[0] = 0.0
    np.cumsum(chords / total, out=params[1:])
    params[-1] = 1.0
    return _strictify(params)


def _strictify(params: np.ndarray) -> np.ndarray:
    if not np.any(np.diff(params) <= 0.0):
        return params
    warnings.warn(
        "duplicate consecutive points produced equal parameters; "
        "nudging the later parameter by one representable step",
        DuplicatePointWarning,
        stacklevel=3,
    )
    for j in range(1, params.size):
        if params[j] <= params[j - 1]:
            params[j] = np.nextafter(params[j - 1], np.inf)
    # Keep the right end anchored at 1; push any overflow back down.
    params[-1] = min(params[-1], 1.0)
    for j in range(params.size - 1, 0, -1):
        if params[j - 1] >= params[j]:
            params[j - 1] = np.nextafter(params[j], -np.inf)
    return params


def build_knots(params, n_ctrl_minus1: int, degree: int = DEGREE) -> KnotVector:
    """Clamped knot vector whose interior knots track the data parameters.

    With ``n1 = n_ctrl_minus1`` and ``m + 1`` parameters, interior knot ``j``
    (for ``j = 1 .. n1 - 3``) interpolates between neighbouring parameters:
    ``i = floor(j * d)``, ``frac = j * d - i``, ``d = (m + 1) / (n1 - 2)``,
    giving knot ``(1 - frac) * params[i - 1] + frac * params[i]``.

    Raises
    ------
    InvalidConfig
        If ``n1 < 3``, if the parameters are too few (``d < 1``), or if the
        placement degenerates onto the domain boundary.
    """
    x = np.asarray(params, dtype=float)
    n1 = int(n_ctrl_minus1)
    if n1 < 3:
        raise InvalidConfig("need n_ctrl_minus1 >= 3 for a clamped cubic basis")
    m = x.size - 1
    d = (m + 1) / (n1 - 2)
    if d < 1.0:
        raise InvalidConfig(
            f"too few parameters ({m + 1}) for {n1 + 1} control points (need d >= 1)"
        )
    knots = np.zeros(n1 + degree + 2)
    knots[-(degree + 1):] = 1.0
    for j in range(1, n1 - 2):
        i = int(np.floor(j * d))
        frac = j * d - i
        knots[degree + j] = (1.0 - frac) * x[i - 1] + frac * x[i]
    return KnotVector(knots, degree)


def _find_span(knots: np.ndarray, degree: int, x: float) -> int:
    """Index of the knot span containing ``x`` (right-continuous convention).

    Returns the largest index ``s`` with ``knots[s] <= x < knots[s + 1]``;
    ``x`` at the right end of the domain falls into the last nontrivial span.
    """
    last = knots.size - degree - 2
    if x >= knots[last + 1]:
        return last
    span = int(np.searchsorted(knots, x, side="right")) - 1
    return max(span, degree)


def _basis_values(knots: np.ndarray, degree: int, span: int, x: float) -> np.ndarray:
    """Nonzero basis values at ``x`` via the triangular recurrence."""
    values = np.empty(degree + 1)
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    values[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            temp = values[r] / (right[r + 1] + left[j - r])
            values[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        values[j] = saved
    return values


def eval_basis(knots: KnotVector, x: float) -> BasisSpan:
    """Evaluate all basis functions that are nonzero at ``x``.

    Parameters
    ----------
    knots : KnotVector
    x : float
        Parameter in [0, 1].

    Returns
    -------
    BasisSpan
        At most ``degree + 1`` contiguous values, nonnegative and summing to 1.

    Raises
    ------
    OutOfDomain
        If ``x`` lies outside [0, 1].
    """
    if not 0.0 <= x <= 1.0:
        raise OutOfDomain(f"parameter {x!r} outside [0, 1]")
    span = _find_span(knots.knots, knots.degree, float(x))
    values = _basis_values(knots.knots, knots.degree, span, float(x))
    return BasisSpan(span - knots.degree, values)


def eval_curve_point(knots: KnotVector, control_points: np.ndarray, x: float) -> np.ndarray:
    """Point on the spline curve defined by ``control_points`` at parameter ``x``."""
    s = eval_basis(knots, x)
    return s.values @ control_points[s.start: s.start + s.values.size]


def eval_surface_point(
    knots_u: KnotVector,
    knots_v: KnotVector,
    control_grid: np.ndarray,
    x: float,
    y: float,
) -> np.ndarray:
    """Point on the tensor-product spline surface at parameters ``(x, y)``.

    ``control_grid`` has shape (n1 + 1, n2 + 1, d).
    """
    su = eval_basis(knots_u, x)
    sv = eval_basis(knots_v, y)
    block = control_grid[
        su.start: su.start + su.values.size,
        sv.start: sv.start + sv.values.size,
    ]
    return np.einsum("i,ijd,j->d", su.values, block, sv.values)
