"""Experiment orchestration: data, weight selection, multi-seed fits, reports.

A run proceeds: generate or load the geometry, parametrize the clean data,
assemble the collocation and penalty matrices once, pick the smoothing
weight (fixed, rule-estimated, or self-consistent per seed), fit each seed's
noisy draw independently, and aggregate the relative fit errors.

Randomness bookkeeping: the noise draw for seed ``s`` uses the Philox stream
with key ``s``; the solver's block draws use the same key jumped one stride,
so the two never overlap. Everything downstream is a pure function of the
config, which is what makes report files byte-reproducible.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import curve as curve_solver
from . import surface as surface_solver
from .assembly import (
    assemble_collocation,
    augment_curve,
    augment_surface,
    difference_matrix,
    make_partition,
)
from .basis import KnotVector, build_knots, chord_length_params, surface_params
from .config import ExperimentConfig, SweepGrid
from .curve import StoppingRule
from .datasets import (
    NoiseSpec,
    add_noise,
    blob_curve,
    boy_surface,
    fit_error,
    fit_error_surface,
    rose_curve,
)
from .errors import InvalidConfig
from .oracle import solve_curve_direct, solve_surface_direct
from .pointsio import load_grid, load_points, write_csv
from .regparam import (
    NoiseModel,
    SelfConsistentResult,
    build_whitened_design,
    optimal_lambda,
    self_consistent_curve,
    self_consistent_surface,
    spectral_decay,
    spectral_decay_from_eigenvalues,
    surface_whitened_eigenvalues,
)


def solver_rng(seed: int) -> np.random.Generator:
    """Block-draw stream for one fit: the seed's Philox stream, jumped once."""
    return np.random.Generator(np.random.Philox(key=seed).jumped(1))


def initial_controls_curve(data: np.ndarray, n_ctrl: int) -> np.ndarray:
    """Seed every control point from the data: index ``floor(m * i / n1)``."""
    m = data.shape[0] - 1
    idx = (m * np.arange(n_ctrl + 1)) // n_ctrl
    return data[idx].copy()


def initial_controls_surface(grid: np.ndarray, n_u: int, n_v: int) -> np.ndarray:
    """Surface analogue: subsample the data grid at floor-spaced indices."""
    m = grid.shape[0] - 1
    p = grid.shape[1] - 1
    rows = (m * np.arange(n_u + 1)) // n_u
    cols = (p * np.arange(n_v + 1)) // n_v
    return grid[np.ix_(rows, cols)].copy()


@dataclass(frozen=True)
class CurveProblem:
    clean: np.ndarray
    params: np.ndarray
    knots: KnotVector
    design: np.ndarray
    penalty: np.ndarray
    reference_controls: np.ndarray


@dataclass(frozen=True)
class SurfaceProblem:
    clean: np.ndarray
    params_u: np.ndarray
    params_v: np.ndarray
    knots_u: KnotVector
    knots_v: KnotVector
    design_u: np.ndarray
    design_v: np.ndarray
    penalty_u: np.ndarray
    penalty_v: np.ndarray
    reference_controls: np.ndarray


def load_dataset(cfg: ExperimentConfig) -> np.ndarray:
    """Clean geometry for a config: generated, or loaded from CSV."""
    if cfg.generator == "rose":
        return rose_curve(cfg.m).points
    if cfg.generator == "blob":
        return blob_curve(cfg.m).points
    if cfg.generator == "boy":
        return boy_surface(cfg.m, cfg.p).grid
    if cfg.problem == "surface":
        return load_grid(cfg.input_path)
    return load_points(cfg.input_path)


def build_problem(cfg: ExperimentConfig) -> Union[CurveProblem, SurfaceProblem]:
    """Parametrize the clean data and assemble all seed-independent matrices.

    The reference controls are the unpenalized least-squares fit of the
    clean data; every reported error is relative to that fit.
    """
    clean = load_dataset(cfg)
    if cfg.problem == "curve":
        params = chord_length_params(clean)
        knots = build_knots(params, cfg.n_ctrl)
        design = assemble_collocation(knots, params)
        penalty = difference_matrix(cfg.n_ctrl + 1, cfg.penalty_scale)
        reference = solve_curve_direct(
            augment_curve(design, penalty, clean, 0.0)
        ).control_points
        return CurveProblem(clean, params, knots, design, penalty, reference)
    params_u, params_v = surface_params(clean)
    knots_u = build_knots(params_u, cfg.n_ctrl)
    knots_v = build_knots(params_v, cfg.n_ctrl_v)
    design_u = assemble_collocation(knots_u, params_u)
    design_v = assemble_collocation(knots_v, params_v)
    penalty_u = difference_matrix(cfg.n_ctrl + 1, cfg.penalty_scale)
    penalty_v = difference_matrix(cfg.n_ctrl_v + 1, cfg.penalty_scale)
    reference = solve_surface_direct(
        augment_surface(design_u, design_v, penalty_u, penalty_v, clean, 0.0)
    ).control_points
    return SurfaceProblem(
        clean, params_u, params_v, knots_u, knots_v,
        design_u, design_v, penalty_u, penalty_v, reference,
    )


def problem_spectrum(problem, head_count: int):
    """Decay-rate fit of the whitened design spectrum for either problem kind."""
    if isinstance(problem, CurveProblem):
        whitened = build_whitened_design(problem.design, problem.penalty)
        return spectral_decay(whitened, head_count)
    eigs = surface_whitened_eigenvalues(
        problem.design_u, problem.design_v, problem.penalty_u, problem.penalty_v
    )
    return spectral_decay_from_eigenvalues(eigs, head_count)


def reference_penalty_norm2(problem) -> float:
    """Count-normalized squared penalty norm of the reference controls."""
    if isinstance(problem, CurveProblem):
        n_count = problem.design.shape[1]
        return float(np.sum((problem.penalty @ problem.reference_controls) ** 2)) / n_count
    n_count = problem.design_u.shape[1] * problem.design_v.shape[1]
    total = 0.0
    ref = problem.reference_controls
    for f in range(ref.shape[2]):
        total += float(np.sum((problem.design_u @ ref[:, :, f] @ problem.penalty_v.T) ** 2))
        total += float(np.sum((problem.penalty_u @ ref[:, :, f] @ problem.design_v.T) ** 2))
    return total / n_count


def estimate_lambda(problem, cfg: ExperimentConfig) -> tuple[float, dict]:
    """Rule-estimated weight from the clean problem plus its ingredients."""
    decay = problem_spectrum(problem, cfg.head_count)
    clean = problem.clean
    sigma2 = NoiseSpec(cfg.noise_amplitude, 0).per_entry_variance(clean.size)
    if isinstance(problem, CurveProblem):
        residual = problem.design @ problem.reference_controls - clean
        n_count = problem.design.shape[1]
    else:
        residual = np.empty_like(clean)
        for f in range(clean.shape[2]):
            residual[:, :, f] = (
                problem.design_u @ problem.reference_controls[:, :, f] @ problem.design_v.T
                - clean[:, :, f]
            )
        n_count = problem.design_u.shape[1] * problem.design_v.shape[1]
    noise = NoiseModel(sigma2, float(np.sum(residual**2)))
    pen_n = reference_penalty_norm2(problem)
    lam = optimal_lambda(decay, noise, n_count, pen_n)
    info = {
        "alpha": decay.alpha,
        "alpha_fit_residual": decay.fit_residual,
        "head_count": decay.head_count,
        "sigma2": sigma2,
        "epsilon_norm2": noise.epsilon_norm2,
        "penalty_norm2": pen_n,
        "n_controls": n_count,
    }
    return lam, info


@dataclass
class SeedOutcome:
    seed: int
    lam: float
    lambda_echo: float
    fit_err: float
    iterations: int
    converged: bool
    wall_time: float
    control_points: np.ndarray
    trajectory: tuple = ()
    lambda_iterates: Optional[tuple] = None


def _stop_rule(cfg: ExperimentConfig) -> StoppingRule:
    return StoppingRule(cfg.tolerance, cfg.max_iter)


def _fit_curve_fixed(problem: CurveProblem, cfg, lam: float, seed: int, noisy) -> SeedOutcome:
    start = time.perf_counter()
    system = augment_curve(problem.design, problem.penalty, noisy, lam)
    partition = make_partition(system.stacked, cfg.block_size)
    p0 = initial_controls_curve(noisy, cfg.n_ctrl)
    result = curve_solver.run(
        system, partition, p0, _stop_rule(cfg), solver_rng(seed),
        trajectory_stride=cfg.trajectory_stride,
    )
    err = fit_error(problem.design, result.control_points, problem.reference_controls)
    return SeedOutcome(
        seed, lam, system.lam, err, result.iterations, result.converged,
        time.perf_counter() - start, result.control_points, result.trajectory,
    )


def _fit_surface_fixed(problem: SurfaceProblem, cfg, lam: float, seed: int, noisy) -> SeedOutcome:
    start = time.perf_counter()
    system = augment_surface(
        problem.design_u, problem.design_v, problem.penalty_u, problem.penalty_v,
        noisy, lam,
    )
    part_u = make_partition(system.row_stacked, cfg.block_size)
    part_v = make_partition(system.col_stacked, cfg.block_size_v or cfg.block_size)
    grid0 = initial_controls_surface(noisy, cfg.n_ctrl, cfg.n_ctrl_v)
    result = surface_solver.run(
        system, part_u, part_v, grid0, _stop_rule(cfg), solver_rng(seed),
        trajectory_stride=cfg.trajectory_stride,
    )
    err = fit_error_surface(
        problem.design_u, problem.design_v, result.control_grid, problem.reference_controls
    )
    return SeedOutcome(
        seed, lam, system.lam, err, result.iterations, result.converged,
        time.perf_counter() - start, result.control_grid, result.trajectory,
    )


def _curve_inner_solver(problem: CurveProblem, cfg, seed: int, noisy):
    if cfg.inner_solver == "direct":
        def solve(lam: float) -> np.ndarray:
            system = augment_curve(problem.design, problem.penalty, noisy, lam)
            return solve_curve_direct(system).control_points
    else:
        p0 = initial_controls_curve(noisy, cfg.n_ctrl)

        def solve(lam: float) -> np.ndarray:
            system = augment_curve(problem.design, problem.penalty, noisy, lam)
            partition = make_partition(system.stacked, cfg.block_size)
            result = curve_solver.run(
                system, partition, p0, _stop_rule(cfg), solver_rng(seed),
                trajectory_stride=0,
            )
            return result.control_points
    return solve


def _surface_inner_solver(problem: SurfaceProblem, cfg, seed: int, noisy):
    if cfg.inner_solver == "direct":
        def solve(lam: float) -> np.ndarray:
            system = augment_surface(
                problem.design_u, problem.design_v,
                problem.penalty_u, problem.penalty_v, noisy, lam,
            )
            return solve_surface_direct(system).control_points
    else:
        grid0 = initial_controls_surface(noisy, cfg.n_ctrl, cfg.n_ctrl_v)

        def solve(lam: float) -> np.ndarray:
            system = augment_surface(
                problem.design_u, problem.design_v,
                problem.penalty_u, problem.penalty_v, noisy, lam,
            )
            part_u = make_partition(system.row_stacked, cfg.block_size)
            part_v = make_partition(system.col_stacked, cfg.block_size_v or cfg.block_size)
            result = surface_solver.run(
                system, part_u, part_v, grid0, _stop_rule(cfg), solver_rng(seed),
                trajectory_stride=0,
            )
            return result.control_grid
    return solve


def _fit_self_consistent(problem, cfg, seed: int, noisy, alpha: float) -> SeedOutcome:
    start = time.perf_counter()
    if isinstance(problem, CurveProblem):
        solve = _curve_inner_solver(problem, cfg, seed, noisy)
        sc: SelfConsistentResult = self_consistent_curve(
            problem.design, problem.penalty, noisy, solve, alpha, cfg.eps_lambda
        )
        err = fit_error(problem.design, sc.control_points, problem.reference_controls)
    else:
        solve = _surface_inner_solver(problem, cfg, seed, noisy)
        sc = self_consistent_surface(
            problem.design_u, problem.design_v,
            problem.penalty_u, problem.penalty_v,
            noisy, solve, alpha, cfg.eps_lambda,
        )
        err = fit_error_surface(
            problem.design_u, problem.design_v, sc.control_points,
            problem.reference_controls,
        )
    return SeedOutcome(
        seed, sc.lam, sc.lam, err, sc.outer_iterations, True,
        time.perf_counter() - start, sc.control_points,
        lambda_iterates=sc.iterates,
    )


def run_seed(problem, cfg: ExperimentConfig, lam_choice, seed: int, alpha=None) -> SeedOutcome:
    """Fit one noisy draw end to end."""
    noisy = add_noise(problem.clean, NoiseSpec(cfg.noise_amplitude, seed))
    if lam_choice == "self-consistent":
        return _fit_self_consistent(problem, cfg, seed, noisy, alpha)
    lam = float(lam_choice)
    if isinstance(problem, CurveProblem):
        return _fit_curve_fixed(problem, cfg, lam, seed, noisy)
    return _fit_surface_fixed(problem, cfg, lam, seed, noisy)


def _run_seeds(problem, cfg, lam_choice, alpha=None) -> list[SeedOutcome]:
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [
                pool.submit(run_seed, problem, cfg, lam_choice, seed, alpha)
                for seed in cfg.seeds
            ]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [run_seed(problem, cfg, lam_choice, seed, alpha) for seed in cfg.seeds]
    return outcomes


def _aggregate(outcomes: list[SeedOutcome]) -> tuple[float, float]:
    # Aggregate in seed-sorted order so the statistics are independent of
    # the order the seeds were listed or finished.
    errors = np.asarray([o.fit_err for o in sorted(outcomes, key=lambda o: o.seed)])
    return float(errors.mean()), float(errors.std())


@dataclass
class FitReport:
    """Aggregated result of a multi-seed experiment, JSON-serializable."""

    problem: str
    generator: str
    lambda_mode: str
    lambda_used: float
    mean_fit_error: float
    std_fit_error: float
    seeds: list
    per_seed: list
    spectral_alpha: Optional[float] = None
    estimate_info: Optional[dict] = None
    wall_time_total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "generator": self.generator,
            "lambda_mode": self.lambda_mode,
            "lambda_used": self.lambda_used,
            "mean_fit_error": self.mean_fit_error,
            "std_fit_error": self.std_fit_error,
            "seeds": list(self.seeds),
            "spectral_alpha": self.spectral_alpha,
            "estimate_info": self.estimate_info,
            "per_seed": self.per_seed,
            "wall_time_total": self.wall_time_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    problem: Union[CurveProblem, SurfaceProblem]
    outcomes: list
    report: FitReport


def _per_seed_entry(outcome: SeedOutcome) -> dict:
    entry = {
        "seed": outcome.seed,
        "lambda": outcome.lam,
        "lambda_echo": outcome.lambda_echo,
        "fit_error": outcome.fit_err,
        "iterations": outcome.iterations,
        "converged": outcome.converged,
        "wall_time": outcome.wall_time,
        "trajectory": [
            [s.iteration, s.rel_change, s.residual_norm] for s in outcome.trajectory
        ],
    }
    if outcome.lambda_iterates is not None:
        entry["lambda_trajectory"] = [
            {"k": it.k, "lambda": it.lam, "misfit": it.misfit, "penalty": it.penalty}
            for it in outcome.lambda_iterates
        ]
    return entry


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute a configured experiment: one fit per seed, aggregated."""
    if isinstance(cfg.lam, SweepGrid):
        raise InvalidConfig("run_experiment does not take sweep grids; use sweep_lambda")
    start = time.perf_counter()
    problem = build_problem(cfg)
    alpha = None
    estimate_info = None
    if cfg.lam == "estimate":
        lam_choice, estimate_info = estimate_lambda(problem, cfg)
        mode = "estimate"
        alpha = estimate_info["alpha"]
    elif cfg.lam == "self-consistent":
        decay = problem_spectrum(problem, cfg.head_count)
        alpha = decay.alpha
        lam_choice = "self-consistent"
        mode = "self-consistent"
    else:
        lam_choice = float(cfg.lam)
        mode = "fixed"
    outcomes = _run_seeds(problem, cfg, lam_choice, alpha)
    mean_err, std_err = _aggregate(outcomes)
    lambdas = np.asarray([o.lam for o in sorted(outcomes, key=lambda o: o.seed)])
    report = FitReport(
        problem=cfg.problem,
        generator=cfg.generator,
        lambda_mode=mode,
        lambda_used=float(lambdas.mean()),
        mean_fit_error=mean_err,
        std_fit_error=std_err,
        seeds=list(cfg.seeds),
        per_seed=[_per_seed_entry(o) for o in outcomes],
        spectral_alpha=alpha,
        estimate_info=estimate_info,
        wall_time_total=time.perf_counter() - start,
    )
    return ExperimentResult(cfg, problem, outcomes, report)


@dataclass
class SweepReport:
    lambdas: list
    mean_errors: list
    std_errors: list
    lambda_estimate: float
    estimate_mean_error: float
    estimate_std_error: float
    estimate_info: dict

    def rows(self):
        table = [
            (lam, mean, std, 0)
            for lam, mean, std in zip(self.lambdas, self.mean_errors, self.std_errors)
        ]
        table.append(
            (self.lambda_estimate, self.estimate_mean_error, self.estimate_std_error, 1)
        )
        return table


def sweep_lambda(cfg: ExperimentConfig) -> tuple[SweepReport, Union[CurveProblem, SurfaceProblem]]:
    """One multi-seed fit batch per grid point, plus the rule-estimate row.

    The same seeds (hence the same noise draws) are reused at every grid
    point, so the error curve varies only through the weight.
    """
    if not isinstance(cfg.lam, SweepGrid):
        raise InvalidConfig("sweep_lambda needs a sweep grid in the lambda field")
    problem = build_problem(cfg)
    lam_est, info = estimate_lambda(problem, cfg)
    lambdas = list(cfg.lam.values())
    means, stds = [], []
    for lam in lambdas:
        outcomes = _run_seeds(problem, cfg, float(lam))
        mean_err, std_err = _aggregate(outcomes)
        means.append(mean_err)
        stds.append(std_err)
    est_outcomes = _run_seeds(problem, cfg, float(lam_est))
    est_mean, est_std = _aggregate(est_outcomes)
    report = SweepReport(
        [float(v) for v in lambdas], means, stds, float(lam_est), est_mean, est_std, info
    )
    return report, problem


def sample_fitted_curve(problem: CurveProblem, controls: np.ndarray, density: int = 5):
    """Fitted curve sampled at ``density`` times the data density."""
    m = problem.clean.shape[0] - 1
    dense = np.linspace(0.0, 1.0, density * m + 1)
    design_dense = assemble_collocation(problem.knots, dense)
    return dense, design_dense @ controls


def sample_fitted_surface(problem: SurfaceProblem, control_grid: np.ndarray, density: int = 5):
    """Fitted surface sampled at ``density`` times the data density per direction."""
    m = problem.clean.shape[0] - 1
    p = problem.clean.shape[1] - 1
    dense_u = np.linspace(0.0, 1.0, density * m + 1)
    dense_v = np.linspace(0.0, 1.0, density * p + 1)
    a_dense = assemble_collocation(problem.knots_u, dense_u)
    b_dense = assemble_collocation(problem.knots_v, dense_v)
    sampled = np.empty((dense_u.size, dense_v.size, control_grid.shape[2]))
    for f in range(control_grid.shape[2]):
        sampled[:, :, f] = a_dense @ control_grid[:, :, f] @ b_dense.T
    return dense_u, dense_v, sampled


def _summary_text(result: ExperimentResult) -> str:
    report = result.report
    lines = [
        f"problem:        {report.problem} ({report.generator})",
        f"lambda mode:    {report.lambda_mode}",
        f"lambda used:    {report.lambda_used:.6e}",
        f"mean fit error: {report.mean_fit_error:.6f}",
        f"std fit error:  {report.std_fit_error:.6f}",
    ]
    if report.spectral_alpha is not None:
        lines.append(f"spectral alpha: {report.spectral_alpha:.4f}")
    lines.append("")
    lines.append("seed   lambda        fit_error   iterations  converged")
    for entry in report.per_seed:
        lines.append(
            f"{entry['seed']:<6d} {entry['lambda']:<13.6e} "
            f"{entry['fit_error']:<11.6f} {entry['iterations']:<11d} "
            f"{str(entry['converged']):<5s}"
        )
    lines.append("")
    return "\n".join(lines)


def write_outputs(result: ExperimentResult, out_dir) -> list[str]:
    """Write the report bundle; returns the file names written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    (out / "report.json").write_text(result.report.to_json() + "\n")
    written.append("report.json")
    (out / "summary.txt").write_text(_summary_text(result))
    written.append("summary.txt")

    rows = []
    for outcome in result.outcomes:
        for sample in outcome.trajectory:
            rows.append(
                (outcome.seed, sample.iteration, sample.rel_change, sample.residual_norm)
            )
    write_csv(out / "trajectory.csv", ["seed", "iteration", "rel_change", "residual_norm"], rows)
    written.append("trajectory.csv")

    first = min(result.outcomes, key=lambda o: o.seed)
    if isinstance(result.problem, CurveProblem):
        dense, points = sample_fitted_curve(result.problem, first.control_points)
        header = ["param"] + ["x", "y", "z"][: points.shape[1]]
        write_csv(
            out / "fitted_curve.csv",
            header,
            [(float(t), *map(float, pt)) for t, pt in zip(dense, points)],
        )
        written.append("fitted_curve.csv")
    else:
        _, _, sampled = sample_fitted_surface(result.problem, first.control_points)
        grid_rows = []
        for h in range(sampled.shape[0]):
            for l in range(sampled.shape[1]):
                grid_rows.append((h, l, *map(float, sampled[h, l])))
        write_csv(out / "fitted_surface.csv", ["row", "col", "x", "y", "z"], grid_rows)
        written.append("fitted_surface.csv")
    return written


def write_sweep_outputs(report: SweepReport, out_dir) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "sweep.csv",
        ["lambda", "mean_error", "std_error", "is_estimated_optimal"],
        report.rows(),
    )
    return "sweep.csv"
