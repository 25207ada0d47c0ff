from __future__ import annotations

import pandas as pd

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.malliavin import tangent_growth_by_eps, tangent_oracle_gap
from entropy_lab.noise import sample_path

"""Relative L2(phi) discrepancy accepted"""
GAP_TOL = 0.05

"""Flux and noise families checked, one pair per built-in family"""
FAMILIES = (
    ("burgers:1.0", "sin:0.5"),
    ("sine:0.8", "rational:0.8"),
    ("linear:0.5", "modulated:0.5"),
)


def create() -> Experiment:
    """Create the experiment comparing Malliavin tangents with finite differences

    Returns:
        Experiment: the tangent oracle experiment
    """
    return Experiment(
        "tangent-oracle",
        "Malliavin tangent against finite differences",
        "The linearized equation started from sigma(u(r)) reproduces the derivative of the solution in the noise increment",
        (
            "For each built-in flux and noise family and three (birth step, noise node)"
            " cells the tangent solved from step r is compared at the final time with a"
            " central finite difference of the solution in the increment of node k at"
            f" step r. The relative weighted L2 gap must stay below {GAP_TOL:.0%}. The growth of"
            " the first tangent is also tabulated for every viscosity in eps_list."
        ),
        {},
        _runner,
    )


def cells(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    n, m = cfg.n_steps, cfg.noise_nodes
    return [(min(cfg.r_index, n - 1), cfg.node), (n // 3, 2 % m), (2 * n // 3, (m - 1) % m)]


def _runner(cfg: ExperimentConfig) -> Outcome:
    u0, _ = cfg.initial_data()
    path = sample_path(cfg.space, cfg.dt, cfg.n_steps, cfg.seed, 0)
    rows = []
    for flux, sigma in FAMILIES:
        solver = cfg.solver(flux=flux, sigma=sigma)
        for r_index, k in cells(cfg):
            gap = tangent_oracle_gap(solver, u0, path, r_index, k)
            rows.append({"flux": flux, "sigma": sigma, "r_index": r_index, "node": k, "gap": gap})
    table = pd.DataFrame(rows)
    assertions = [
        at_most(f"{row.flux} {row.sigma} r={row.r_index} k={row.node}", row.gap, GAP_TOL)
        for row in table.itertuples()
    ]
    r_index, k = cells(cfg)[0]
    growth = tangent_growth_by_eps(cfg.solver(), u0, path, r_index, k, cfg.eps_list)
    return Outcome(
        assertions,
        {"gaps": table, "growth_by_eps": growth},
        f"largest gap {table['gap'].max():.3g}",
        1,
    )
