from __future__ import annotations

import pandas as pd

from entropy_lab.analysis import CONTRACTION_BUDGET, contraction_violations, l1_contraction_curve
from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.viscous_solver import initial_field

"""Initial data pairs compared besides (initial, initial_other)"""
EXTRA_PAIRS = (("step:1.0", "bump:0.5"), ("riemann:1.0:0.0", "sine:0.5"))


def create() -> Experiment:
    """Create the L1 contraction experiment under coupled noise

    Returns:
        Experiment: the L1 contraction experiment
    """
    return Experiment(
        "l1-contraction",
        "L1 contraction",
        "The expected weighted L1 distance of two solutions driven by the same noise does not grow",
        (
            "Two initial data are marched on common noise paths and E ||u(t) - v(t)||_{1,phi}"
            " is tracked at the snapshot times after removing the weight's growth factor"
            " exp(-C_phi ||f||_Lip t). The adjusted distance must be nonincreasing within"
            " tolerance for three data pairs. Without noise the unweighted distance on the"
            " torus must not grow beyond the scheme error."
        ),
        {},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    grid = cfg.grid
    budget = cfg.budget(CONTRACTION_BUDGET)
    pairs = ((cfg.initial, cfg.initial_other),) + EXTRA_PAIRS
    tables, assertions = [], []
    for first, second in pairs:
        u0, v0 = initial_field(first, grid), initial_field(second, grid)
        table = l1_contraction_curve(
            cfg.solver(), u0, v0, cfg.n_mc, cfg.seed, cfg.snapshots, budget,
            cfg.workers, cfg.chunk_size,
        )
        assertions.append(at_most(f"{first} vs {second} growing snapshots", contraction_violations(table), 0))
        tables.append(table.assign(pair=f"{first} vs {second}", noise="on"))
    u0, v0 = cfg.initial_data()
    quiet = l1_contraction_curve(cfg.solver(sigma="zero"), u0, v0, 1, cfg.seed, cfg.snapshots, budget, 1)
    assertions.append(at_most("growing snapshots without noise", contraction_violations(quiet, "flat"), 0))
    tables.append(quiet.assign(pair=f"{cfg.initial} vs {cfg.initial_other}", noise="off"))
    return Outcome(assertions, {"contraction": pd.concat(tables, ignore_index=True)}, "", cfg.n_mc * len(pairs) + 1)
