from __future__ import annotations

import pandas as pd

from entropy_lab.analysis import KATO_BUDGET, kato_check
from entropy_lab.config import ExperimentConfig
from entropy_lab.entropy import Bump
from entropy_lab.experiments import Experiment, Outcome, holds
from entropy_lab.viscous_solver import initial_field

"""(flux, sigma, u0, v0) of every configuration; the last has spatially modulated noise"""
CONFIGURATIONS = (
    ("burgers:1.0", "sin:0.5", "bump:1.0", "bump:0.5"),
    ("burgers:1.0", "sin:0.5", "riemann:1.0:0.0", "riemann:0.5:0.0"),
    ("sine:0.8", "rational:0.5", "step:1.0", "bump:0.5"),
    ("linear:0.5", "additive:0.5", "sine:0.5", "bump:1.0"),
    ("burgers:1.0", "modulated:0.5", "bump:1.0", "step:0.5"),
)


def create() -> Experiment:
    """Create the Kato inequality experiment

    Returns:
        Experiment: the Kato inequality experiment
    """
    return Experiment(
        "kato",
        "Kato inequality",
        "The localized L1 distance at t0 is bounded by its initial value plus the flux and viscous terms",
        (
            "For two solutions on common noise paths, E int |u(t0) - v(t0)| psi must not"
            " exceed E int |u0 - v0| psi + E int int sgn(u - v)(f(u) - f(v)) psi'"
            " + eps E int int |u - v| psi'' up to the frozen tolerance. Five flux, noise"
            " and data configurations are checked, one with spatially modulated noise."
        ),
        {},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid
    psi = Bump(radius=cfg.half_width / 4.0)
    t0 = (cfg.n_steps // 2) * cfg.dt
    budget = cfg.budget(KATO_BUDGET)
    rows, assertions = [], []
    for flux, sigma, first, second in CONFIGURATIONS:
        result = kato_check(
            cfg.solver(flux=flux, sigma=sigma), initial_field(first, grid), initial_field(second, grid),
            psi, t0, cfg.n_mc, cfg.seed, budget, cfg.workers, cfg.chunk_size,
        )
        label = f"{flux} {sigma} {first} vs {second}"
        rows.append({"configuration": label, "lhs": result.lhs, "rhs": result.rhs, "se": result.se,
                     "tol": result.tol, "passed": result.passed, **result.terms})
        assertions.append(holds(label, result.passed, result.lhs - result.rhs, result.tol))
    return Outcome(assertions, {"kato": pd.DataFrame(rows)}, f"t0 = {t0:g}", cfg.n_mc * len(CONFIGURATIONS))
