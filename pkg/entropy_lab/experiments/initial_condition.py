from __future__ import annotations

import numpy as np
import pandas as pd

from entropy_lab.config import ExperimentConfig
from entropy_lab.entropy import initial_condition_stat
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.grid import GridField
from entropy_lab.util import Z_95

"""Factor over the deterministic baseline allowed at the smallest r0"""
BASELINE_FACTOR = 2.0


def create() -> Experiment:
    """Create the experiment on how the solution attains its initial datum

    Returns:
        Experiment: the initial condition experiment
    """
    return Experiment(
        "initial-condition",
        "Attainment of the initial datum",
        "The time-mollified L1 distance to the initial datum vanishes as the mollifier shrinks onto t = 0",
        (
            "The statistic E int int |u(t, x) - u0(x)| psi(x) J_{r0}(t) dx dt is estimated"
            " for r0 = 8, 4, 2 time steps in a weak-noise configuration. It must decrease"
            " as r0 shrinks and, at the smallest r0, stay below twice the same statistic"
            " with the noise switched off."
        ),
        {"sigma": "sin:0.1", "t_final": 0.1},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    u0, _ = cfg.initial_data()
    grid = cfg.grid
    psi = GridField(np.exp(-(grid.x**2) / 4.0), grid)
    noisy = initial_condition_stat(
        cfg.solver(), u0, cfg.n_mc, cfg.r0_list, psi, seed=cfg.seed,
        max_workers=cfg.workers, chunk_size=cfg.chunk_size,
    )
    baseline = initial_condition_stat(cfg.solver(sigma="zero"), u0, 1, cfg.r0_list, psi, max_workers=1)
    est, se = noisy["estimate"].to_numpy(), noisy["se"].to_numpy()
    rises = np.maximum(est[1:] - est[:-1] - Z_95 * np.hypot(se[1:], se[:-1]), 0.0)
    smallest = float(est[-1])
    limit = BASELINE_FACTOR * float(baseline["estimate"].iloc[-1])
    table = pd.concat([noisy.assign(noise="on"), baseline.assign(noise="off")], ignore_index=True)
    assertions = [
        at_most("increase as r0 shrinks beyond CIs", float(rises.max(initial=0.0)), 0.0),
        at_most("statistic at the smallest r0", smallest, limit),
    ]
    return Outcome(assertions, {"initial_condition": table}, "", cfg.n_mc + 1)
