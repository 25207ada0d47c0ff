from __future__ import annotations

import numpy as np
import pandas as pd

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.grid import GridField
from entropy_lab.heat_kernel import KernelParams, verify_young_heat
from entropy_lab.weights import Weight, exp_weight, poly_weight

"""Relative slack granted to each estimate"""
REL_TOL = 1e-6

"""Grid points per heat-kernel standard deviation needed for a resolved draw"""
POINTS_PER_SIGMA = 4.0


def create() -> Experiment:
    """Create the randomized check of the weighted heat-kernel estimates

    Returns:
        Experiment: the heat kernel bounds experiment
    """
    return Experiment(
        "heat-kernel-bounds",
        "Weighted heat kernel estimates",
        "Heat convolution is bounded on weighted Lp, and so is heat convolution of a derivative with the inverse square root rate",
        (
            "Random fields, weights, exponents and viscosity-time products are drawn"
            " inside the regime C_phi sqrt(4 eps t) <= 1. For each draw both the"
            " plain bound ||Phi * u|| <= kappa_1 ||u|| and the derivative bound"
            " ||Phi * v'|| <= kappa_2 / sqrt(eps t) ||v|| are evaluated in the weighted"
            " Lp norm. No draw may exceed its bound by more than the relative tolerance."
        ),
        {"draws": 1000},
        _runner,
    )


def random_weight(rng: np.random.Generator) -> Weight:
    if rng.random() < 0.5:
        return poly_weight(rng.uniform(0.25, 1.0))
    return exp_weight(rng.uniform(0.1, 1.0))


def random_field(rng: np.random.Generator, grid) -> GridField:
    """A sum of three Gaussian bumps of random height, width and position"""
    x = grid.x
    values = np.zeros_like(x)
    for _ in range(3):
        height, center = rng.normal(), rng.uniform(-0.5, 0.5) * grid.half_width
        width = rng.uniform(0.3, 2.0)
        values += height * np.exp(-(((x - center) / width) ** 2))
    return GridField(values, grid)


def _runner(cfg: ExperimentConfig) -> Outcome:
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    floor = (POINTS_PER_SIGMA * grid.dx) ** 2 / 2.0
    rows = []
    while len(rows) < cfg.draws:
        w = random_weight(rng)
        ceiling = 1.0 / (4.0 * w.c_phi**2)
        if ceiling <= floor:
            continue
        eps_t = float(np.exp(rng.uniform(np.log(floor), np.log(ceiling))))
        eps = rng.uniform(0.01, 0.5)
        params = KernelParams(eps, eps_t / eps)
        u = random_field(rng, grid)
        p = float(rng.choice([1.0, 2.0, 4.0]))
        plain = verify_young_heat(u, p, w, params, rel_tol=REL_TOL)
        derivative = verify_young_heat(u, p, w, params, divergence=True, rel_tol=REL_TOL)
        rows.append(
            {
                "weight": repr(w),
                "p": p,
                "eps": eps,
                "t": params.t,
                "plain_ratio": plain.lhs / plain.bound if plain.bound else 0.0,
                "derivative_ratio": derivative.lhs / derivative.bound if derivative.bound else 0.0,
                "plain_passed": bool(plain.passed),
                "derivative_passed": bool(derivative.passed),
            }
        )
    table = pd.DataFrame(rows)
    assertions = [
        at_most("plain estimate violations", (~table["plain_passed"]).sum(), 0),
        at_most("derivative estimate violations", (~table["derivative_passed"]).sum(), 0),
        at_most("largest plain ratio", table["plain_ratio"].max(), 1.0 + REL_TOL),
        at_most("largest derivative ratio", table["derivative_ratio"].max(), 1.0 + REL_TOL),
    ]
    return Outcome(assertions, {"draws": table}, f"{len(table)} draws inside the regime")
