import numpy as np
import numpy.testing as npt
import pytest
import scipy.linalg

from rpia.assembly import (
    assemble_collocation,
    augment_curve,
    difference_matrix,
)
from rpia.basis import build_knots, chord_length_params
from rpia.datasets import NoiseSpec, add_noise, rose_curve
from rpia.errors import (
    InsufficientSpectrum,
    InvalidConfig,
    NonConvergence,
    SingularPenalty,
    ZeroPenalty,
)
from rpia.oracle import solve_curve_direct
from rpia.regparam import (
    NoiseModel,
    build_whitened_design,
    gram_eigenvalues,
    optimal_lambda,
    self_consistent_curve,
    self_consistent_surface,
    spectral_decay,
    spectral_decay_from_eigenvalues,
    surface_whitened_eigenvalues,
    two_step_denoise,
)


class TestBuildWhitenedDesign:
    def test_scaled_identity_penalty(self, rng):
        design = rng.standard_normal((8, 5))
        whitened = build_whitened_design(design, 4.0 * np.eye(5))
        npt.assert_allclose(whitened, design / 4.0, atol=1e-14)

    def test_multiply_back(self, rng):
        design = rng.standard_normal((8, 5))
        penalty = difference_matrix(5, 3.0)
        whitened = build_whitened_design(design, penalty)
        defect = np.linalg.norm(whitened @ penalty - design) / np.linalg.norm(design)
        assert defect < 1e-10

    def test_singular_penalty(self, rng):
        design = rng.standard_normal((6, 4))
        singular = np.ones((4, 4))
        with pytest.raises(SingularPenalty):
            build_whitened_design(design, singular)


class TestSpectralDecay:
    def test_exact_power_law(self):
        eigs = np.arange(1, 200, dtype=float) ** -3.0
        fit = spectral_decay_from_eigenvalues(eigs, 50)
        npt.assert_allclose(fit.alpha, 3.0, atol=1e-8)
        assert fit.fit_residual < 1e-12

    def test_power_law_recovery_through_matrix(self, rng):
        for alpha in (1.0, 2.0, 4.0):
            singular_values = np.arange(1, 21, dtype=float) ** (-alpha / 2.0)
            u, _ = np.linalg.qr(rng.standard_normal((40, 20)))
            v, _ = np.linalg.qr(rng.standard_normal((20, 20)))
            matrix = u @ np.diag(singular_values) @ v.T
            fit = spectral_decay_from_eigenvalues(gram_eigenvalues(matrix), 20)
            npt.assert_allclose(fit.alpha, alpha, atol=1e-6)

    def test_descending_nonnegative(self, rng):
        matrix = rng.standard_normal((15, 10))
        eigs = gram_eigenvalues(matrix)
        assert np.all(eigs >= 0.0)
        assert np.all(np.diff(eigs) <= 0.0)

    def test_insufficient_spectrum(self, rng):
        matrix = rng.standard_normal((10, 8))
        matrix[:, 4:] = matrix[:, :4]  # rank 4
        with pytest.raises(InsufficientSpectrum):
            spectral_decay(matrix, 6)

    def test_head_count_validation(self):
        with pytest.raises(InvalidConfig):
            spectral_decay_from_eigenvalues(np.ones(10), 2)

    def test_surface_whitened_spectrum_matches_dense_reference(self, rng):
        a = rng.standard_normal((9, 4))
        b = rng.standard_normal((8, 3))
        lu = difference_matrix(4, 1.5)
        lv = difference_matrix(3, 2.0)
        eigs = surface_whitened_eigenvalues(a, b, lu, lv)
        design_gram = np.kron(b.T @ b, a.T @ a)
        penalty_gram = np.kron(np.eye(3), lu.T @ lu) + np.kron(lv.T @ lv, np.eye(4))
        expected = np.sort(scipy.linalg.eigh(design_gram, penalty_gram, eigvals_only=True))[::-1]
        npt.assert_allclose(eigs, np.clip(expected, 0.0, None), atol=1e-10)


class TestOptimalLambda:
    def test_vanishing_noise_limit(self):
        lams = [
            optimal_lambda(2.0, NoiseModel(sigma2), 101, 5.0)
            for sigma2 in (1e-2, 1e-6, 1e-10)
        ]
        assert lams[0] > lams[1] > lams[2]
        assert lams[2] < 1e-7

    def test_large_alpha_limit(self):
        sigma2, n, pen = 0.04, 101, 7.5
        lam = optimal_lambda(1e9, NoiseModel(sigma2), n, pen)
        npt.assert_allclose(lam, sigma2 / (n * pen), rtol=1e-6)

    def test_scaling_invariance(self):
        base = optimal_lambda(3.0, NoiseModel(0.05), 101, 12.0)
        for c in (0.1, 10.0, 250.0):
            scaled = optimal_lambda(3.0, NoiseModel(0.05 * c**2), 101, 12.0 * c**2)
            npt.assert_allclose(scaled, base, rtol=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidConfig):
            optimal_lambda(0.0, NoiseModel(0.1), 10, 1.0)
        with pytest.raises(InvalidConfig):
            optimal_lambda(2.0, NoiseModel(0.0), 10, 1.0)
        with pytest.raises(InvalidConfig):
            optimal_lambda(2.0, NoiseModel(0.1), 10, 0.0)


class TestFullScaleEstimate:
    def test_rose_estimate_matches_documented_weight(self):
        points = rose_curve(1000).points
        params = chord_length_params(points)
        knots = build_knots(params, 100)
        design = assemble_collocation(knots, params)
        penalty = difference_matrix(101, 1600.0)
        alpha = spectral_decay(build_whitened_design(design, penalty), 50).alpha
        reference = solve_curve_direct(
            augment_curve(design, penalty, points, 0.0)
        ).control_points
        sigma2 = 100.0 / points.size
        pen_n = float(np.sum((penalty @ reference) ** 2)) / 101
        lam = optimal_lambda(alpha, NoiseModel(sigma2), 101, pen_n)
        assert 1.646e-6 / 3.0 <= lam <= 1.646e-6 * 3.0


class TestSelfConsistentCurve:
    def test_fixed_point_terminates_at_first_check(self):
        # misfit equals penalty, so the first update reproduces the start value
        design = np.eye(2)
        penalty = np.eye(2)
        data = np.array([[2.0], [0.0]])
        fixed = np.array([[1.0], [0.0]])
        result = self_consistent_curve(
            design, penalty, data, lambda lam: fixed, alpha=2.0, eps_lambda=0.01
        )
        assert result.outer_iterations == 2
        npt.assert_allclose(result.lam, 2.0 ** (-2.0 / 3.0), rtol=1e-12)
        npt.assert_array_equal(result.control_points, fixed)

    def test_zero_penalty(self):
        design = np.eye(2)
        penalty = np.eye(2)
        data = np.array([[2.0], [0.0]])
        with pytest.raises(ZeroPenalty):
            self_consistent_curve(
                design, penalty, data, lambda lam: np.zeros((2, 1)), alpha=2.0
            )

    def test_non_convergence(self):
        design = np.eye(2)
        penalty = np.eye(2)
        data = np.array([[2.0], [0.0]])
        flip = [0]

        def oscillating(lam):
            # alternate between fits whose misfit/penalty ratios differ by
            # a factor well above the convergence threshold
            flip[0] += 1
            if flip[0] % 2:
                return np.array([[0.0], [3.0]])
            return np.array([[1.0], [0.0]])

        with pytest.raises(NonConvergence):
            self_consistent_curve(
                design, penalty, data, oscillating, alpha=2.0, max_outer=6
            )

    def test_desk_scale_convergence(self):
        points = rose_curve(200).points
        params = chord_length_params(points)
        knots = build_knots(params, 40)
        design = assemble_collocation(knots, params)
        penalty = difference_matrix(41, 91.0)
        noisy = add_noise(points, NoiseSpec(4.0, 3))
        whitened = build_whitened_design(design, penalty)
        alpha = spectral_decay(whitened, 30).alpha

        def solve(lam):
            return solve_curve_direct(augment_curve(design, penalty, noisy, lam)).control_points

        result = self_consistent_curve(design, penalty, noisy, solve, alpha, 0.01)
        assert result.lam > 0.0
        assert result.outer_iterations <= 15
        lams = [it.lam for it in result.iterates]
        # settles: the last relative change is below the threshold
        assert abs(lams[-1] - lams[-2]) <= 0.01 * lams[-2]

    def test_divergent_start_hits_zero_penalty(self):
        # with a strong penalty scale the prior-free start lies outside the
        # fixed point's basin: the weight blows up until the penalized fit
        # flattens completely
        points = rose_curve(200).points
        params = chord_length_params(points)
        knots = build_knots(params, 40)
        design = assemble_collocation(knots, params)
        penalty = difference_matrix(41, 1600.0)
        noisy = add_noise(points, NoiseSpec(4.0, 3))

        def solve(lam):
            return solve_curve_direct(augment_curve(design, penalty, noisy, lam)).control_points

        with pytest.raises((ZeroPenalty, NonConvergence)):
            self_consistent_curve(design, penalty, noisy, solve, 4.28, 0.01)


class TestSelfConsistentSurface:
    def test_fixed_point_terminates_at_first_check(self):
        design_u = np.eye(2)
        design_v = np.eye(2)
        penalty_u = np.eye(2)
        penalty_v = np.eye(2)
        data = np.zeros((2, 2, 1))
        data[0, 0, 0] = 2.0
        fixed = np.zeros((2, 2, 1))
        fixed[0, 0, 0] = 1.0
        # misfit 1/4; penalty terms each 1/4, so the ratio is 1/2 and the
        # update gives (1/2 / 4)^(alpha/(alpha+1)) with n = 4
        result = self_consistent_surface(
            design_u, design_v, penalty_u, penalty_v, data,
            lambda lam: fixed, alpha=1.0, eps_lambda=1.0,
        )
        assert result.outer_iterations == 2

    def test_noiseless_weight_decays(self, rng):
        a = rng.standard_normal((8, 4))
        b = rng.standard_normal((7, 3))
        lu = difference_matrix(4, 1.0)
        lv = difference_matrix(3, 1.0)
        exact = rng.standard_normal((4, 3, 3))
        data = np.stack([a @ exact[:, :, f] @ b.T for f in range(3)], axis=-1)

        from rpia.assembly import augment_surface
        from rpia.oracle import solve_surface_direct

        def solve(lam):
            return solve_surface_direct(
                augment_surface(a, b, lu, lv, data, lam)
            ).control_points

        with pytest.raises(NonConvergence):
            # exact data: the misfit collapses every round, so the weight
            # keeps shrinking instead of settling
            self_consistent_surface(a, b, lu, lv, data, solve, 2.0, 1e-6, max_outer=8)


class TestTwoStepDenoise:
    def test_zero_weight_is_plain_least_squares(self, rng):
        design = rng.standard_normal((12, 5))
        smoother = difference_matrix(12, 1.0)
        data = rng.standard_normal((12, 2))
        fitted = two_step_denoise(data, 0.0, smoother, design)
        expected, *_ = np.linalg.lstsq(design, data, rcond=None)
        npt.assert_allclose(fitted, expected, atol=1e-10)

    def test_large_weight_flattens_toward_affine(self, rng):
        design = np.eye(30)
        smoother = difference_matrix(30, 1.0)
        data = rng.standard_normal((30, 1)) + np.linspace(0, 3, 30)[:, None]
        fitted = two_step_denoise(data, 1e9, smoother, design)
        # second differences of the smoothed signal vanish: affine trend
        assert np.max(np.abs(np.diff(fitted[:, 0], 2))) < 1e-6

    def test_matches_explicit_two_solves(self, rng):
        design = rng.standard_normal((12, 5))
        smoother = difference_matrix(12, 2.0)
        data = rng.standard_normal((12, 2))
        lam = 0.8
        fitted = two_step_denoise(data, lam, smoother, design)
        smoothed = np.linalg.solve(np.eye(12) + lam * smoother.T @ smoother, data)
        expected = np.linalg.solve(design.T @ design, design.T @ smoothed)
        npt.assert_allclose(fitted, expected, atol=1e-10)
