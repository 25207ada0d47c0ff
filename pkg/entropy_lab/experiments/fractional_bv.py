from __future__ import annotations

import numpy as np
import pandas as pd

from entropy_lab.analysis import fractional_bv_excess, fractional_bv_modulus
from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_least, at_most

"""Slope tolerance of the excess fit for x-dependent noise"""
SLOPE_TOL = 0.3


def create() -> Experiment:
    """Create the fractional BV experiment

    Returns:
        Experiment: the fractional BV experiment
    """
    return Experiment(
        "fractional-bv",
        "Fractional BV estimate",
        "The translation modulus at the final time is bounded by the initial modulus plus a Holder excess in the shift",
        (
            "The weighted translation modulus E int int |u(t, x + z) - u(t, x)| J_r(z) phi"
            " is estimated over a range of radii r. Its excess over C times the initial"
            " modulus must vanish within 3 SE when the noise does not depend on x; for"
            " spatially modulated noise the excesses above 3 SE must decay at least like"
            " r^kappa, and with fewer than two of them the excess must vanish within 3 SE."
        ),
        {"initial": "step:1.0"},
        _runner,
    )


def _beyond_noise(table: pd.DataFrame) -> float:
    return float((table["excess"] - 3.0 * table["se"]).max())


def _runner(cfg: ExperimentConfig) -> Outcome:
    u0, _ = cfg.initial_data()
    sigmas = [cfg.sigma] if "modulated" in cfg.sigma else [cfg.sigma, "modulated:0.5"]
    tables, assertions = [], []
    for sigma in sigmas:
        solver = cfg.solver(sigma=sigma)
        modulus = fractional_bv_modulus(solver, u0, cfg.n_mc, cfg.r_list, cfg.seed, cfg.snapshots,
                                        cfg.workers, cfg.chunk_size)
        fit = fractional_bv_excess(solver, modulus)
        tables.append(fit.table.assign(sigma=sigma))
        if solver.sigma.is_x_dependent and np.isfinite(fit.slope):
            assertions.append(at_least(f"{sigma} excess log-log slope", fit.slope, fit.theory - SLOPE_TOL))
        else:
            assertions.append(at_most(f"{sigma} excess beyond 3 SE", _beyond_noise(fit.table), 0.0))
    n = cfg.n_mc * len(sigmas)
    return Outcome(assertions, {"excess": pd.concat(tables, ignore_index=True)}, "", n)
