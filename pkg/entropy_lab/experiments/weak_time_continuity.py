from __future__ import annotations

import numpy as np

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.grid import GridField
from entropy_lab.malliavin import weak_time_continuity_stat
from entropy_lab.util import Z_95


def create() -> Experiment:
    """Create the weak time continuity experiment for the Malliavin derivative

    Returns:
        Experiment: the weak time continuity experiment
    """
    return Experiment(
        "weak-time-continuity",
        "Weak time continuity of the Malliavin derivative",
        "The mollified gap between D_r u(t) and sigma(u(r)) vanishes as the mollifier shrinks onto t = r",
        (
            "The statistic pairs D_{r,z} u(t) - sigma(x, u(r, x), z) with a test field and"
            " a one-sided time mollifier of radius r0 after the birth step r. Its absolute"
            " value must decrease across r0 = 8, 4, 2 time steps (within confidence"
            " intervals) and stay below the Cauchy-Schwarz bound built from the second"
            " moment of the derivative."
        ),
        {"weight": "trunc:poly:4:8"},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    solver = cfg.solver()
    u0, _ = cfg.initial_data()
    grid = cfg.grid
    psi = GridField(np.exp(-(grid.x**2)), grid)
    table = weak_time_continuity_stat(
        solver, u0, cfg.n_mc, cfg.r_index, cfg.r0_list, psi, cfg.seed, cfg.workers, cfg.chunk_size
    )
    size, se = table["estimate"].abs().to_numpy(), table["se"].to_numpy()
    slack = Z_95 * np.hypot(se[1:], se[:-1])
    rises = np.maximum(size[1:] - size[:-1] - slack, 0.0)
    assertions = [
        at_most("increase of |T| as r0 shrinks beyond CIs", float(rises.max(initial=0.0)), 0.0),
        at_most("largest |T| / bound", float(np.max(size / table["bound"].to_numpy())), 1.0),
    ]
    details = f"sup_t E ||D_r u(t)||^2 = {table['moment'].iloc[0]:.4g} at r = {cfg.r_index * cfg.dt:.4g}"
    return Outcome(assertions, {"continuity": table}, details, cfg.n_mc)
