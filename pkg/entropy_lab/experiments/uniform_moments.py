from __future__ import annotations

import pandas as pd

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.viscous_solver import lp_moment_curve


def create() -> Experiment:
    """Create the experiment comparing moment curves across viscosities

    Returns:
        Experiment: the uniform moments experiment
    """
    return Experiment(
        "uniform-moments",
        "Moments uniform in the viscosity",
        "Weighted Lp moments of the viscous solutions are bounded independently of the viscosity",
        (
            "For each p the curve t -> E ||u(t)||_{p,phi}^p is estimated for every viscosity"
            " in eps_list on common noise seeds. At every snapshot time the 95% confidence"
            " intervals of all viscosities must share a point."
        ),
        {},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    u0, _ = cfg.initial_data()
    curves, assertions = [], []
    for p in cfg.p_list:
        per_eps = []
        for eps in cfg.eps_list:
            curve = lp_moment_curve(
                cfg.solver(eps=eps), u0, p, cfg.n_mc, cfg.seed, cfg.snapshots,
                cfg.workers, cfg.chunk_size,
            )
            per_eps.append(curve.assign(p=p, eps=eps))
        table = pd.concat(per_eps, ignore_index=True)
        by_time = table.groupby("t")
        disjoint = int((by_time["ci_lo"].max() > by_time["ci_hi"].min()).sum())
        assertions.append(at_most(f"p={p} snapshots without a common CI point", disjoint, 0))
        curves.append(table)
    n = cfg.n_mc * len(cfg.p_list) * len(cfg.eps_list)
    return Outcome(assertions, {"moments": pd.concat(curves, ignore_index=True)}, "", n)
