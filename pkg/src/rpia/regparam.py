"""Choosing the smoothing weight from spectral decay, plus the prior-free loop.

The estimate rests on the whitened operator ``Q = A G^{-1}`` (design matrix
times inverse penalty): when the eigenvalues of ``Q^T Q`` decay like
``k**(-alpha)``, balancing the bias and variance terms of the mean squared
error gives

    lam ** (1 + 1/alpha) = sigma^2 * n^{-1} * |G p_ref|_n^{-2}

with the count-normalized norm ``|v|_d^2 = |v|^2 / d``. The self-consistent
loop replaces the unknown noise level and reference penalty norm by the
current fit's misfit and penalty, iterating the same balance to a fixed
point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    InsufficientSpectrum,
    InvalidConfig,
    NonConvergence,
    SingularNormalMatrix,
    SingularPenalty,
    ZeroPenalty,
)

# Relative eigenvalue floor: anything below this multiple of the largest
# eigenvalue is numerical zero and would corrupt the log-log regression.
_EIG_FLOOR = 1e-14


@dataclass(frozen=True)
class SpectralDecayFit:
    """Sorted spectrum with its fitted power-law decay exponent."""

    eigenvalues: np.ndarray
    alpha: float
    head_count: int
    fit_residual: float


@dataclass(frozen=True)
class NoiseModel:
    """Per-entry noise variance and (optional) model-error energy."""

    sigma2: float
    epsilon_norm2: float = 0.0

    def __post_init__(self):
        if self.sigma2 < 0.0 or self.epsilon_norm2 < 0.0:
            raise InvalidConfig("noise model terms must be nonnegative")


@dataclass(frozen=True)
class LambdaIterate:
    """One outer iteration of the self-consistent loop."""

    k: int
    lam: float
    misfit: Optional[float] = None
    penalty: Optional[float] = None


@dataclass(frozen=True)
class SelfConsistentResult:
    lam: float
    control_points: np.ndarray
    iterates: tuple[LambdaIterate, ...]

    @property
    def outer_iterations(self) -> int:
        return len(self.iterates)


def build_whitened_design(design, penalty) -> np.ndarray:
    """``Q = design @ penalty^{-1}`` via a linear solve (no explicit inverse).

    Verified by multiplying back: ``|Q penalty - design| / |design|`` must be
    below 1e-10, else the penalty is reported as numerically singular.
    """
    a = np.asarray(design, dtype=float)
    g = np.asarray(penalty, dtype=float)
    try:
        q = scipy.linalg.solve(g, a.T, assume_a="sym").T
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularPenalty(f"penalty matrix could not be inverted: {exc}") from exc
    defect = np.linalg.norm(q @ g - a) / np.linalg.norm(a)
    if not np.isfinite(defect) or defect > 1e-10:
        raise SingularPenalty(
            f"penalty inversion defect {defect:.3e} exceeds 1e-10"
        )
    return q


def gram_eigenvalues(matrix) -> np.ndarray:
    """Eigenvalues of ``matrix^T matrix`` in descending order, clipped at 0."""
    m = np.asarray(matrix, dtype=float)
    eigs = scipy.linalg.eigvalsh(m.T @ m)
    return np.clip(eigs[::-1], 0.0, None)


def surface_whitened_eigenvalues(design_u, design_v, penalty_u, penalty_v) -> np.ndarray:
    """Descending spectrum of the tensor design whitened by the net penalty.

    The surface analogue of ``Q^T Q`` for the whitened curve design: the
    tensor design Gram is measured against the two-direction difference
    penalty of the control net, via the generalized symmetric eigenproblem

        (Bg (x) Ag) v = rho (I (x) Lu^T Lu + Lv^T Lv (x) I) v

    with ``Ag = design_u^T design_u`` and ``Bg = design_v^T design_v``. All
    matrices live in control space (side ``(n1+1)(n2+1)``); nothing of
    data-space size is ever formed.
    """
    a = np.asarray(design_u, dtype=float)
    b = np.asarray(design_v, dtype=float)
    lu = np.asarray(penalty_u, dtype=float)
    lv = np.asarray(penalty_v, dtype=float)
    design_gram = np.kron(b.T @ b, a.T @ a)
    penalty_gram = np.kron(np.eye(lv.shape[0]), lu.T @ lu) + np.kron(
        lv.T @ lv, np.eye(lu.shape[0])
    )
    try:
        eigs = scipy.linalg.eigh(design_gram, penalty_gram, eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularPenalty(f"net penalty is numerically singular: {exc}") from exc
    return np.clip(np.sort(eigs)[::-1], 0.0, None)


def spectral_decay_from_eigenvalues(eigenvalues, head_count: int) -> SpectralDecayFit:
    """Fit ``log rho_k ~ -alpha log k`` over the leading eigenvalues.

    Eigenvalues below ``1e-14`` times the largest one are discarded before
    the fit; if fewer than ``head_count`` survive the spectrum is too short.
    """
    if head_count < 3:
        raise InvalidConfig("need head_count >= 3 for a meaningful decay fit")
    eigs = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if eigs.size == 0 or eigs[0] <= 0.0:
        raise InsufficientSpectrum("spectrum has no positive eigenvalues")
    usable = eigs[eigs > _EIG_FLOOR * eigs[0]]
    if usable.size < head_count:
        raise InsufficientSpectrum(
            f"only {usable.size} positive eigenvalues for head_count={head_count}"
        )
    head = usable[:head_count]
    log_k = np.log(np.arange(1, head_count + 1, dtype=float))
    log_rho = np.log(head)
    coeffs, residuals, *_ = np.linalg.lstsq(
        np.column_stack([log_k, np.ones(head_count)]), log_rho, rcond=None
    )
    alpha = -float(coeffs[0])
    if residuals.size:
        rms = float(np.sqrt(residuals[0] / head_count))
    else:
        fitted = coeffs[0] * log_k + coeffs[1]
        rms = float(np.sqrt(np.mean((log_rho - fitted) ** 2)))
    return SpectralDecayFit(eigs, alpha, head_count, rms)


def spectral_decay(whitened_design, head_count: int) -> SpectralDecayFit:
    """Decay-rate fit on the spectrum of ``Q^T Q`` for a whitened design ``Q``."""
    return spectral_decay_from_eigenvalues(gram_eigenvalues(whitened_design), head_count)


def optimal_lambda(
    decay: SpectralDecayFit | float,
    noise: NoiseModel,
    n_controls: int,
    penalty_norm2: float,
) -> float:
    """Bias-variance balancing weight for a measured decay exponent.

    ``penalty_norm2`` is the count-normalized squared penalty norm of the
    reference controls. The balance constant is taken as 1, so the value is
    an order-of-magnitude estimate rather than a sharp optimum.
    """
    alpha = decay.alpha if isinstance(decay, SpectralDecayFit) else float(decay)
    if alpha <= 0.0:
        raise InvalidConfig("decay exponent must be positive")
    if noise.sigma2 <= 0.0:
        raise InvalidConfig("noise variance must be positive")
    if n_controls <= 0 or penalty_norm2 <= 0.0:
        raise InvalidConfig("control count and penalty norm must be positive")
    base = noise.sigma2 / (n_controls * penalty_norm2)
    return float(base ** (alpha / (alpha + 1.0)))


def _lambda_from_balance(misfit: float, penalty: float, n_controls: int, alpha: float) -> float:
    if penalty <= 0.0:
        raise ZeroPenalty("penalty norm of the iterate vanished")
    return float((misfit / (penalty * n_controls)) ** (alpha / (alpha + 1.0)))


def self_consistent_curve(
    design,
    penalty,
    data,
    solve: Callable[[float], np.ndarray],
    alpha: float,
    eps_lambda: float = 0.01,
    max_outer: int = 50,
) -> SelfConsistentResult:
    """Prior-free fixed-point iteration for the curve smoothing weight.

    Starts from ``lam_1 ** (1 + 1/alpha) = 1/n`` (no data knowledge at all),
    then repeatedly solves the penalized fit at the current weight and
    rebalances from the fit's own misfit and penalty norms:

        lam_{k+1} ** (1 + 1/alpha) = (misfit_m / penalty_n) / n

    with count-normalized norms over the m+1 data rows and n controls.
    Stops when successive weights agree to ``eps_lambda`` relatively.

    ``solve`` maps a weight to the fitted control points (any solver whose
    output approximates the penalized minimizer works).
    """
    if eps_lambda <= 0.0:
        raise InvalidConfig("eps_lambda must be positive")
    a = np.asarray(design, dtype=float)
    g = np.asarray(penalty, dtype=float)
    q = np.asarray(data, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    m_count = a.shape[0]
    n_count = a.shape[1]
    lam = float(n_count ** (-alpha / (alpha + 1.0)))
    controls = solve(lam)
    iterates = [LambdaIterate(1, lam)]
    for k in range(2, max_outer + 1):
        misfit = float(np.sum((a @ controls - q) ** 2)) / m_count
        pen = float(np.sum((g @ controls) ** 2)) / n_count
        lam_next = _lambda_from_balance(misfit, pen, n_count, alpha)
        iterates.append(LambdaIterate(k, lam_next, misfit, pen))
        converged = abs(lam_next - lam) <= eps_lambda * lam
        lam = lam_next
        controls = solve(lam)
        if converged:
            return SelfConsistentResult(lam, controls, tuple(iterates))
    raise NonConvergence(
        f"weight iteration did not settle within {max_outer} outer iterations"
    )


def self_consistent_surface(
    design_u,
    design_v,
    penalty_u,
    penalty_v,
    data,
    solve: Callable[[float], np.ndarray],
    alpha: float,
    eps_lambda: float = 0.01,
    max_outer: int = 50,
) -> SelfConsistentResult:
    """Prior-free fixed-point iteration for the surface smoothing weight.

    The rebalancing denominator keeps only the two singly weighted penalty
    terms (the doubly weighted ``lam**2`` term is dropped so the balance has
    no weight on its right-hand side):

        lam_{k+1} ** (1 + 1/alpha)
            = misfit_m / (|A P Lv^T|_n^2 + |Lu P B^T|_n^2) / n

    with m the total data count, n the total control count.
    """
    if eps_lambda <= 0.0:
        raise InvalidConfig("eps_lambda must be positive")
    a = np.asarray(design_u, dtype=float)
    b = np.asarray(design_v, dtype=float)
    lu = np.asarray(penalty_u, dtype=float)
    lv = np.asarray(penalty_v, dtype=float)
    grid = np.asarray(data, dtype=float)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    m_count = a.shape[0] * b.shape[0]
    n_count = a.shape[1] * b.shape[1]
    lam = float(n_count ** (-alpha / (alpha + 1.0)))
    controls = solve(lam)
    iterates = [LambdaIterate(1, lam)]
    for k in range(2, max_outer + 1):
        misfit = 0.0
        pen = 0.0
        for f in range(grid.shape[2]):
            p_f = controls[:, :, f]
            misfit += float(np.sum((a @ p_f @ b.T - grid[:, :, f]) ** 2))
            pen += float(np.sum((a @ p_f @ lv.T) ** 2))
            pen += float(np.sum((lu @ p_f @ b.T) ** 2))
        misfit /= m_count
        pen /= n_count
        lam_next = _lambda_from_balance(misfit, pen, n_count, alpha)
        iterates.append(LambdaIterate(k, lam_next, misfit, pen))
        converged = abs(lam_next - lam) <= eps_lambda * lam
        lam = lam_next
        controls = solve(lam)
        if converged:
            return SelfConsistentResult(lam, controls, tuple(iterates))
    raise NonConvergence(
        f"weight iteration did not settle within {max_outer} outer iterations"
    )


def two_step_denoise(data_noisy, lam: float, smoother, design) -> np.ndarray:
    """Smooth the data first, then fit: the two-solve comparison baseline.

    Step one solves ``(I + lam * L^T L) u = data`` for the smoothed data,
    step two fits ``u`` by plain least squares on the design matrix.
    """
    q = np.asarray(data_noisy, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    smooth_mat = np.asarray(smoother, dtype=float)
    a = np.asarray(design, dtype=float)
    system = np.eye(q.shape[0]) + lam * smooth_mat.T @ smooth_mat
    u = scipy.linalg.solve(system, q, assume_a="pos")
    gram = a.T @ a
    eigs = scipy.linalg.eigvalsh(gram)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > 1e14:
        raise SingularNormalMatrix("design normal matrix is numerically singular")
    return scipy.linalg.solve(gram, a.T @ u, assume_a="pos")
