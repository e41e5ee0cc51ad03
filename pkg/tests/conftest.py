"""Shared helpers: independent basis recursion and small random systems."""

import numpy as np
import pytest

from rpia.assembly import augment_curve, augment_surface, difference_matrix


def naive_basis_value(knots, degree, i, x):
    """Textbook two-term recursion for one basis function, 0/0 taken as 0.

    Deliberately independent of the package's triangular evaluator. Uses the
    half-open span convention, with the final knot's interval closed on the
    right so the domain endpoint is covered.
    """
    if degree == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        if x == knots[-1] and knots[i + 1] == knots[-1] and knots[i] < knots[i + 1]:
            return 1.0
        return 0.0
    total = 0.0
    left_den = knots[i + degree] - knots[i]
    if left_den > 0.0:
        total += (x - knots[i]) / left_den * naive_basis_value(knots, degree - 1, i, x)
    right_den = knots[i + degree + 1] - knots[i + 1]
    if right_den > 0.0:
        total += (
            (knots[i + degree + 1] - x)
            / right_den
            * naive_basis_value(knots, degree - 1, i + 1, x)
        )
    return total


def naive_all_basis(knots, degree, x):
    n_basis = len(knots) - degree - 1
    return np.array([naive_basis_value(knots, degree, i, x) for i in range(n_basis)])


def random_curve_system(rng, m_rows=8, n_cols=4, lam=0.3, scale=2.0):
    """Small random stacked curve system with a difference penalty."""
    design = rng.standard_normal((m_rows - n_cols, n_cols))
    penalty = difference_matrix(n_cols, scale)
    data = rng.standard_normal((m_rows - n_cols, 2))
    return augment_curve(design, penalty, data, lam)


def random_surface_system(rng, rows=(3, 3), cols=(2, 3), lam=0.2):
    """Small random stacked surface system; rows/cols give (data, control) sizes."""
    m_data, n_u = rows
    p_data, n_v = cols
    design_u = rng.standard_normal((m_data, n_u))
    design_v = rng.standard_normal((p_data, n_v))
    penalty_u = difference_matrix(n_u, 1.5)
    penalty_v = difference_matrix(n_v, 2.5)
    grid = rng.standard_normal((m_data, p_data, 3))
    return augment_surface(design_u, design_v, penalty_u, penalty_v, grid, lam)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
