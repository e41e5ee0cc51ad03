import numpy as np
import numpy.testing as npt
import pytest

from rpia.assembly import augment_curve, difference_matrix, make_partition
from rpia.basis import build_knots, chord_length_params
from rpia.assembly import assemble_collocation
from rpia.curve import StoppingRule, init_state, run, select_block, step
from rpia.datasets import rose_curve
from rpia.errors import DimensionMismatch
from rpia.oracle import solve_curve_direct

from conftest import random_curve_system


def philox_stream(seed):
    return np.random.Generator(np.random.Philox(seed))


class TestInitState:
    def test_zero_start_residual_is_target(self, rng):
        system = random_curve_system(rng)
        p0 = np.zeros((system.n_controls, 2))
        state = init_state(system, p0, 7)
        npt.assert_array_equal(state.residual, system.targets)
        npt.assert_array_equal(state.fitted_points, np.zeros_like(system.data))
        assert state.iteration == 0

    def test_least_squares_start_has_orthogonal_residual(self, rng):
        system = random_curve_system(rng, m_rows=12, n_cols=5, lam=0.4)
        solution = solve_curve_direct(system)
        state = init_state(system, solution.control_points, 3)
        block_correlation = system.stacked.T @ state.residual
        assert np.max(np.abs(block_correlation)) < 1e-10

    def test_shape_check(self, rng):
        system = random_curve_system(rng)
        with pytest.raises(DimensionMismatch):
            init_state(system, np.zeros((system.n_controls + 1, 2)), 0)


class TestSelectBlock:
    def test_single_block_always_zero(self, rng):
        system = random_curve_system(rng)
        partition = make_partition(system.stacked, system.n_controls)
        state = init_state(system, np.zeros((system.n_controls, 2)), 11)
        assert all(select_block(state, partition) == 0 for _ in range(50))

    def test_three_to_one_frequencies(self):
        # two blocks with squared norms 3 and 1
        stacked = np.asfortranarray(
            np.diag([np.sqrt(2.0), 1.0, np.sqrt(0.5), np.sqrt(0.5)])
        )
        from rpia.assembly import AugmentedCurveSystem

        system = AugmentedCurveSystem(stacked, np.zeros((4, 1)), 0.0, 4)
        partition = make_partition(stacked, 2)
        npt.assert_allclose(partition.probabilities, [0.75, 0.25])
        state = init_state(system, np.zeros((4, 1)), 2024)
        draws = np.fromiter(
            (select_block(state, partition) for _ in range(100_000)), dtype=int
        )
        freq = np.mean(draws == 0)
        assert abs(freq - 0.75) < 0.01

    def test_full_scale_partition_three_sigma(self):
        points = rose_curve(1000).points
        params = chord_length_params(points)
        knots = build_knots(params, 100)
        design = assemble_collocation(knots, params)
        system = augment_curve(design, difference_matrix(101, 1600.0), points, 1.646e-6)
        partition = make_partition(system.stacked, 5)
        assert len(partition) == 21
        # vectorized draws through the same inverse-CDF transform select_block uses
        n_draws = 1_000_000
        u = philox_stream(99).random(n_draws)
        draws = np.searchsorted(partition.cumulative, u, side="right")
        counts = np.bincount(draws, minlength=21)
        expected = n_draws * partition.probabilities
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # chi-squared on 20 degrees of freedom: 45.3 is the 99.9% point
        assert chi2 < 45.3


class TestStep:
    def test_consistent_system_fixed_point_is_bitwise(self, rng):
        design = rng.standard_normal((9, 4))
        penalty = difference_matrix(4, 1.0)
        exact = rng.standard_normal((4, 2))
        system = augment_curve(design, penalty, design @ exact, 0.0)
        # zero residual exactly: targets = stacked @ exact (lam = 0 zeroes the tail)
        state = init_state(system, exact, 5)
        state.residual[:] = system.targets - system.stacked @ exact
        before = state.control_points.copy()
        partition = make_partition(system.stacked, 2)
        step(state, partition)
        assert state.iteration == 1
        npt.assert_array_equal(state.control_points, before)

    def test_least_squares_point_moves_negligibly(self, rng):
        system = random_curve_system(rng, m_rows=12, n_cols=5, lam=0.3)
        solution = solve_curve_direct(system)
        state = init_state(system, solution.control_points, 5)
        partition = make_partition(system.stacked, 2)
        before = state.control_points.copy()
        for _ in range(10):
            step(state, partition)
        assert np.max(np.abs(state.control_points - before)) < 1e-10

    def test_single_block_is_full_correlation_step(self, rng):
        system = random_curve_system(rng, m_rows=10, n_cols=4, lam=0.5)
        partition = make_partition(system.stacked, 4)
        p0 = rng.standard_normal((4, 2))
        state = init_state(system, p0, 17)
        residual0 = state.residual.copy()
        step(state, partition)
        expected = p0 + system.stacked.T @ residual0 / np.sum(system.stacked**2)
        npt.assert_allclose(state.control_points, expected, atol=1e-13)

    def test_matches_straight_line_reimplementation(self, rng):
        system = random_curve_system(rng, m_rows=6, n_cols=3, lam=0.2)
        partition = make_partition(system.stacked, 2)
        seed = 31
        p0 = rng.standard_normal((3, 2))
        state = init_state(system, p0, seed)
        step(state, partition)

        # independent straight-line reference, same Philox stream
        reference_rng = philox_stream(seed)
        u = reference_rng.random()
        chosen = 0
        acc = 0.0
        for idx, prob in enumerate(partition.probabilities):
            acc += prob
            if u < acc:
                chosen = idx
                break
        else:
            chosen = len(partition) - 1
        block = partition.blocks[chosen]
        residual = system.targets - system.stacked @ p0
        expected = p0.copy()
        norm_sq = 0.0
        for col in block:
            norm_sq += float(np.sum(system.stacked[:, col] ** 2))
        for col in block:
            for coord in range(2):
                numer = float(system.stacked[:, col] @ residual[:, coord])
                expected[col, coord] += numer / norm_sq
        npt.assert_allclose(state.control_points, expected, atol=1e-13)
        expected_residual = system.targets - system.stacked @ expected
        npt.assert_allclose(state.residual, expected_residual, atol=1e-12)

    def test_block_locality_bitwise(self, rng):
        system = random_curve_system(rng, m_rows=12, n_cols=6, lam=0.3)
        partition = make_partition(system.stacked, 2)
        state = init_state(system, rng.standard_normal((6, 2)), 123)
        for _ in range(25):
            before = state.control_points.copy()
            rng_snapshot = state.rng.bit_generator.state
            step(state, partition)
            replay = np.random.Generator(np.random.Philox(0))
            replay.bit_generator.state = rng_snapshot
            chosen = int(np.searchsorted(partition.cumulative, replay.random(), side="right"))
            untouched = np.setdiff1d(np.arange(6), partition.blocks[chosen])
            npt.assert_array_equal(state.control_points[untouched], before[untouched])


class TestRun:
    def test_converges_to_direct_solution_on_clean_data(self):
        points = rose_curve(60).points
        params = chord_length_params(points)
        knots = build_knots(params, 12)
        design = assemble_collocation(knots, params)
        penalty = difference_matrix(13, 10.0)
        system = augment_curve(design, penalty, points, 0.0)
        partition = make_partition(system.stacked, 5)
        p0 = np.zeros((13, 2))
        result = run(system, partition, p0, StoppingRule(1e-12, 20_000), 3)
        direct = solve_curve_direct(system).control_points
        rel = np.linalg.norm(design @ (result.control_points - direct)) / np.linalg.norm(
            design @ direct
        )
        assert rel < 1e-6

    def test_zero_iterations_returns_start(self, rng):
        system = random_curve_system(rng)
        p0 = rng.standard_normal((system.n_controls, 2))
        partition = make_partition(system.stacked, 2)
        result = run(system, partition, p0, StoppingRule(1e-8, 0), 4)
        npt.assert_array_equal(result.control_points, p0)
        assert result.iterations == 0
        assert not result.converged

    def test_deterministic_given_seed(self, rng):
        system = random_curve_system(rng, m_rows=14, n_cols=6, lam=0.2)
        partition = make_partition(system.stacked, 2)
        p0 = rng.standard_normal((6, 2))
        first = run(system, partition, p0, StoppingRule(1e-10, 300), 42)
        second = run(system, partition, p0, StoppingRule(1e-10, 300), 42)
        npt.assert_array_equal(first.control_points, second.control_points)
        assert first.iterations == second.iterations
        assert first.trajectory == second.trajectory
        different = run(system, partition, p0, StoppingRule(1e-10, 300), 43)
        assert not np.array_equal(first.control_points, different.control_points)

    def test_trajectory_stride(self, rng):
        system = random_curve_system(rng)
        partition = make_partition(system.stacked, 2)
        p0 = np.zeros((system.n_controls, 2))
        result = run(system, partition, p0, StoppingRule(0.0, 40), 1, trajectory_stride=10)
        assert [s.iteration for s in result.trajectory] == [10, 20, 30, 40]

    def test_zero_norm_start_uses_absolute_fallback(self, rng):
        # all-zero start and zero targets: fitted points stay zero, the
        # absolute criterion fires as soon as the patience window fills
        design = rng.standard_normal((8, 4))
        system = augment_curve(design, difference_matrix(4, 1.0), np.zeros((8, 2)), 0.5)
        partition = make_partition(system.stacked, 2)
        rule = StoppingRule(1e-8, 50, patience=3)
        result = run(system, partition, np.zeros((4, 2)), rule, 9)
        assert result.converged
        assert result.iterations == rule.patience

    def test_single_hit_patience_matches_literal_rule(self, rng):
        # patience 1 recovers the literal successive-iterate criterion
        system = random_curve_system(rng, m_rows=14, n_cols=6, lam=0.2)
        partition = make_partition(system.stacked, 2)
        p0 = rng.standard_normal((6, 2))
        result = run(system, partition, p0, StoppingRule(1e-10, 500, patience=1), 4)
        strict = run(system, partition, p0, StoppingRule(1e-10, 500, patience=3), 4)
        assert result.iterations <= strict.iterations


class TestResidualConsistency:
    def test_incremental_residual_tracks_truth_across_refresh(self, rng):
        system = random_curve_system(rng, m_rows=16, n_cols=7, lam=0.25)
        partition = make_partition(system.stacked, 3)
        state = init_state(system, rng.standard_normal((7, 2)), 77)
        from rpia.curve import _refresh

        for k in range(1, 1201):
            step(state, partition)
            if k % 500 == 0:
                _refresh(state)
            if k % 100 == 0:
                truth = system.targets - system.stacked @ state.control_points
                gap = np.linalg.norm(state.residual - truth)
                assert gap <= 1e-10 * max(np.linalg.norm(truth), 1.0)


class TestMeanIterateConvergence:
    def test_mean_over_seeds_tracks_direct_solution(self, rng):
        system = random_curve_system(rng, m_rows=8, n_cols=4, lam=0.3)
        partition = make_partition(system.stacked, 2)
        direct = solve_curve_direct(system).control_points
        n_seeds = 200
        checkpoints = [10, 20, 40, 80]
        p0 = np.zeros((4, 2))
        sums = {k: np.zeros((4, 2)) for k in checkpoints}
        for seed in range(n_seeds):
            state = init_state(system, p0, seed)
            for k in range(1, checkpoints[-1] + 1):
                step(state, partition)
                if k in sums:
                    sums[k] += state.control_points
        scale = np.linalg.norm(direct)
        errors = [np.linalg.norm(sums[k] / n_seeds - direct) / scale for k in checkpoints]
        slack = 2.0 / np.sqrt(n_seeds)
        for early, late in zip(errors, errors[1:]):
            assert late <= early + slack
        assert errors[-1] < errors[0]
