"""Synthetic example geometries, the Gaussian noise model, and the fit error.

The noise model adds an i.i.d. standard normal draw rescaled to a prescribed
total Frobenius energy, so the perturbation magnitude is exact by
construction rather than in expectation. Draws use the Philox counter-based
generator, which makes every dataset a pure function of ``(shape, seed)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, SingularSample, ZeroReference

_ROOT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class SampledCurve:
    """Planar sample points plus the generator they came from."""

    points: np.ndarray
    generator_tag: str
    parameter_range: tuple[float, float]


@dataclass(frozen=True)
class SampledSurface:
    """Gridded 3-d sample points plus the generator they came from."""

    grid: np.ndarray
    generator_tag: str
    parameter_ranges: tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class NoiseSpec:
    """Total perturbation energy and the seed of the draw."""

    amplitude: float
    seed: int

    def __post_init__(self):
        if self.amplitude <= 0.0:
            raise InvalidConfig("noise amplitude must be positive")

    def per_entry_variance(self, n_entries: int) -> float:
        """Variance each scalar entry receives when the energy is spread out."""
        return self.amplitude**2 / n_entries


def rose_curve(m: int) -> SampledCurve:
    """Rose-type curve ``r = sin(theta/4)`` sampled at m + 1 uniform angles.

    The angle runs over [0, 8*pi], so the radius completes one full sine
    cycle (two large petals traced through the origin).
    """
    theta = np.linspace(0.0, 8.0 * np.pi, m + 1)
    r = np.sin(theta / 4.0)
    points = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return SampledCurve(points, "rose", (0.0, 8.0 * np.pi))


def blob_curve(m: int) -> SampledCurve:
    """Blob-shaped curve ``r = 1 + 2 cos(2t + 1/2) + 2 cos(3t + 1/2)`` on [0, 2*pi]."""
    theta = np.linspace(0.0, 2.0 * np.pi, m + 1)
    r = 1.0 + 2.0 * np.cos(2.0 * theta + 0.5) + 2.0 * np.cos(3.0 * theta + 0.5)
    points = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return SampledCurve(points, "blob", (0.0, 2.0 * np.pi))


def boy_surface(m: int, p: int) -> SampledSurface:
    """Boy-surface parametrization sampled on an (m+1) x (p+1) grid over [-pi, pi]^2.

    Raises
    ------
    SingularSample
        If a grid point lands within 1e-9 of the shared denominator's zero
        set. The standard grids stay well clear of it.
    """
    t = np.linspace(-np.pi, np.pi, m + 1)[:, None]
    s = np.linspace(-np.pi, np.pi, p + 1)[None, :]
    denom = _ROOT2 - np.sin(2.0 * t) * np.sin(3.0 * s)
    if np.min(np.abs(denom)) < 1e-9:
        raise SingularSample("grid point hits the parametrization's singular set")
    cos_t = np.cos(t)
    x = (2.0 / 3.0) * (cos_t * np.cos(2.0 * t) + _ROOT2 * np.sin(t) * np.cos(s)) * cos_t / denom
    y = (2.0 / 3.0) * (cos_t * np.sin(2.0 * t) - _ROOT2 * np.sin(t) * np.sin(s)) * cos_t / denom
    z = _ROOT2 * cos_t * cos_t / denom
    grid = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    return SampledSurface(grid, "boy", ((-np.pi, np.pi), (-np.pi, np.pi)))


def add_noise(data, spec: NoiseSpec) -> np.ndarray:
    """Data plus a normalized Gaussian perturbation of exact total energy.

    The draw is element-wise standard normal over the full array, rescaled so
    its Frobenius norm equals ``spec.amplitude`` exactly.
    """
    clean = np.asarray(data, dtype=float)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    draw = rng.standard_normal(clean.shape)
    return clean + spec.amplitude * draw / np.linalg.norm(draw)


def fit_error(design, fitted_controls, reference_controls) -> float:
    """Relative distance between two fits, measured through the design matrix.

    Returns ``|A (p - p_ref)|_F / |A p_ref|_F``; the all-coordinate Frobenius
    norm makes the value comparable across planar and spatial data.
    """
    a = np.asarray(design, dtype=float)
    diff = a @ (np.asarray(fitted_controls) - np.asarray(reference_controls))
    ref = a @ np.asarray(reference_controls)
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0.0:
        raise ZeroReference("reference geometry has zero norm")
    return float(np.linalg.norm(diff) / ref_norm)


def fit_error_surface(design_u, design_v, fitted_grid, reference_grid) -> float:
    """Surface analogue of :func:`fit_error` with the tensor products ``A P B^T``."""
    a = np.asarray(design_u, dtype=float)
    b = np.asarray(design_v, dtype=float)
    fitted = np.asarray(fitted_grid, dtype=float)
    reference = np.asarray(reference_grid, dtype=float)
    diff_sq = 0.0
    ref_sq = 0.0
    for f in range(reference.shape[2]):
        ref_f = a @ reference[:, :, f] @ b.T
        fit_f = a @ fitted[:, :, f] @ b.T
        diff_sq += float(np.sum((fit_f - ref_f) ** 2))
        ref_sq += float(np.sum(ref_f**2))
    if ref_sq == 0.0:
        raise ZeroReference("reference geometry has zero norm")
    return float(np.sqrt(diff_sq / ref_sq))
