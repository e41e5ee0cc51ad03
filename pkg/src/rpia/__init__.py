"""Noisy B-spline fitting by randomized block iteration with Tikhonov smoothing.

The package splits into: basis evaluation and parametrization (`basis`),
problem assembly (`assembly`), the randomized solvers (`curve`, `surface`),
the smoothing-weight machinery (`regparam`), deterministic reference solvers
(`oracle`), example geometries and the noise model (`datasets`), and the
experiment harness behind the CLI (`config`, `experiment`, `pointsio`,
`cli`).
"""

from .assembly import (
    AugmentedCurveSystem,
    AugmentedSurfaceSystem,
    BlockPartition,
    assemble_collocation,
    augment_curve,
    augment_surface,
    difference_matrix,
    make_partition,
)
from .basis import (
    BasisSpan,
    KnotVector,
    build_knots,
    chord_length_params,
    eval_basis,
    eval_curve_point,
    eval_surface_point,
    surface_params,
)
from .curve import CurveFitResult, StoppingRule
from .datasets import (
    NoiseSpec,
    SampledCurve,
    SampledSurface,
    add_noise,
    blob_curve,
    boy_surface,
    fit_error,
    fit_error_surface,
    rose_curve,
)
from .oracle import (
    DirectSolution,
    contraction_check,
    expectation_map_curve,
    expectation_map_surface,
    solve_curve_direct,
    solve_surface_direct,
)
from .regparam import (
    LambdaIterate,
    NoiseModel,
    SelfConsistentResult,
    SpectralDecayFit,
    build_whitened_design,
    optimal_lambda,
    self_consistent_curve,
    self_consistent_surface,
    spectral_decay,
    spectral_decay_from_eigenvalues,
    surface_whitened_eigenvalues,
    two_step_denoise,
)
from .surface import SurfaceFitResult

__version__ = "0.1.0"

__all__ = [
    "AugmentedCurveSystem",
    "AugmentedSurfaceSystem",
    "BasisSpan",
    "BlockPartition",
    "CurveFitResult",
    "DirectSolution",
    "KnotVector",
    "LambdaIterate",
    "NoiseModel",
    "NoiseSpec",
    "SampledCurve",
    "SampledSurface",
    "SelfConsistentResult",
    "SpectralDecayFit",
    "StoppingRule",
    "SurfaceFitResult",
    "add_noise",
    "assemble_collocation",
    "augment_curve",
    "augment_surface",
    "blob_curve",
    "boy_surface",
    "build_knots",
    "build_whitened_design",
    "chord_length_params",
    "contraction_check",
    "difference_matrix",
    "eval_basis",
    "eval_curve_point",
    "eval_surface_point",
    "expectation_map_curve",
    "expectation_map_surface",
    "fit_error",
    "fit_error_surface",
    "make_partition",
    "optimal_lambda",
    "rose_curve",
    "self_consistent_curve",
    "self_consistent_surface",
    "solve_curve_direct",
    "solve_surface_direct",
    "spectral_decay",
    "spectral_decay_from_eigenvalues",
    "surface_params",
    "surface_whitened_eigenvalues",
    "two_step_denoise",
]
