from __future__ import annotations

import numpy as np
import pandas as pd

from entropy_lab.config import ExperimentConfig
from entropy_lab.entropy import ENTROPY_BUDGET, entropy_from_key, random_trial, viscous_entropy_residual
from entropy_lab.experiments import Experiment, Outcome, at_most


def create() -> Experiment:
    """Create the randomized viscous entropy inequality experiment

    Returns:
        Experiment: the entropy inequality experiment
    """
    return Experiment(
        "entropy-inequality",
        "Entropy inequality with random Kruzkov constants",
        "The viscous solution satisfies the entropy inequality for smooth random constants including the Malliavin correction",
        (
            "Each trial draws a compactly supported test function and a smooth random"
            " variable V = a tanh(W(h)) + b. The left side of the entropy inequality"
            " (initial, transport, Malliavin, quadratic and viscous terms) must be at"
            " least -tol with tol = c_dx dx + c_dt dt + c_eps eps + 3 SE, calibrated once"
            " and frozen."
        ),
        {},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    solver = cfg.solver()
    u0, _ = cfg.initial_data()
    pair = entropy_from_key(cfg.entropy, solver.flux)
    budget = cfg.budget(ENTROPY_BUDGET)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for trial in range(cfg.trials):
        test, V = random_trial(rng, solver)
        result = viscous_entropy_residual(
            solver, u0, pair, test, V, cfg.n_mc, cfg.seed + trial + 1, budget,
            cfg.workers, cfg.chunk_size,
        )
        rows.append(
            {"trial": trial, "V": V.name, "residual": result.residual, "se": result.se,
             "tol": result.tol, "passed": result.passed, **result.terms}
        )
    table = pd.DataFrame(rows)
    assertions = [
        at_most("failed trials", int((~table["passed"]).sum()), 0),
        at_most("largest -residual / tol", float((-table["residual"] / table["tol"]).max()), 1.0),
    ]
    return Outcome(assertions, {"trials": table}, f"entropy {cfg.entropy}", cfg.n_mc * cfg.trials)
