from __future__ import annotations

import numpy as np

from entropy_lab.analysis import consecutive_distances, epsilon_convergence_study, epsilon_reference_distance
from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most

"""Slope tolerance of the distance to the inviscid reference"""
SLOPE_TOL = 0.3

"""Linear flux and additive noise of the closed-form case"""
REFERENCE = dict(flux="linear:0.5", sigma="additive:0.5")


def create() -> Experiment:
    """Create the vanishing viscosity experiment

    Returns:
        Experiment: the viscosity Cauchy experiment
    """
    return Experiment(
        "eps-cauchy",
        "Vanishing viscosity",
        "Viscous solutions on common noise form a Cauchy sequence in L1 as the viscosity vanishes, at rate eps in the closed-form case",
        (
            "Solutions for every viscosity in eps_list are compared on shared paths."
            " Distances between consecutive viscosities must strictly decrease. For a"
            " linear flux with additive noise the discrete inviscid limit (the eps = 0"
            " scheme, numerical viscosity included) is known in closed form and the"
            " distance to it must scale like eps (log-log slope 1 within 0.3)."
        ),
        {"eps_list": (0.2, 0.1, 0.05, 0.025)},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    u0, _ = cfg.initial_data()
    pairs = epsilon_convergence_study(cfg.solver(), cfg.eps_list, u0, cfg.n_mc, cfg.seed, cfg.workers, cfg.chunk_size)
    steps = consecutive_distances(pairs)
    growth = float(np.max(np.diff(steps["distance"]), initial=-np.inf))
    reference = epsilon_reference_distance(
        cfg.solver(**REFERENCE), cfg.eps_list, u0, cfg.n_mc, cfg.seed, cfg.workers, cfg.chunk_size
    )
    assertions = [
        at_most("largest change of consecutive distances", growth, 0.0),
        at_most("|slope - 1| of the reference distance", abs(reference.slope - reference.theory), SLOPE_TOL),
    ]
    tables = {"pairs": pairs, "reference": reference.table}
    return Outcome(assertions, tables, f"reference slope {reference.slope:.3f}", 2 * cfg.n_mc)
