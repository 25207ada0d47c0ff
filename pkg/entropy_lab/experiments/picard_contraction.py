from __future__ import annotations

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most, holds
from entropy_lab.noise import sample_path
from entropy_lab.viscous_solver import picard_mild_solve, solve_path
from entropy_lab.weights import weighted_lp_norm

"""Largest ratio of consecutive iterate distances accepted"""
MAX_RATIO = 0.9

"""Picard iterations"""
N_ITER = 12


def create() -> Experiment:
    """Create the Picard contraction experiment on the small reference grid

    Returns:
        Experiment: the Picard contraction experiment
    """
    return Experiment(
        "picard-contraction",
        "Contraction of the mild map",
        "The discrete mild map contracts in the exponentially weighted norm above its computed threshold",
        (
            "The variation-of-constants map is iterated from zero on one noise path."
            " In the norm sup_t exp(-beta t) ||.||_{2,phi} with beta above the computed"
            " threshold, consecutive iterate distances must shrink by a factor below"
            f" {MAX_RATIO}. The fixed point is the exponential Euler solution."
        ),
        {"n_x": 64, "dt": 0.005, "t_final": 0.5},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    solver = cfg.solver()
    u0, _ = cfg.initial_data()
    path = sample_path(cfg.space, cfg.dt, cfg.n_steps, cfg.seed, 0)
    result = picard_mild_solve(solver, u0, path, n_iter=N_ITER)
    direct = solve_path(solver, u0, path).final
    last = result.trajectory.final
    gap = float(weighted_lp_norm(last.with_values(last.values - direct.values), 2.0, solver.weight))
    scale = float(weighted_lp_norm(direct, 2.0, solver.weight)) or 1.0
    history = result.history()
    assertions = [
        holds("beta above threshold", result.contracting, result.beta, result.beta_threshold),
        at_most("largest iterate ratio", result.max_ratio(), MAX_RATIO),
    ]
    details = (
        f"beta = {result.beta:.4g}, threshold = {result.beta_threshold:.4g},"
        f" proven factor {result.contraction_bound:.3g}; relative distance of the last"
        f" iterate to the exponential Euler solution {gap / scale:.3g}"
    )
    return Outcome(assertions, {"iterates": history}, details, 1)
