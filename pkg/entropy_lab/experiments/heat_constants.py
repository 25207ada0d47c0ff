from __future__ import annotations

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most
from entropy_lab.heat_kernel import constants_table

"""Largest dimension tabulated"""
D_MAX = 4

"""Absolute agreement required between the two quadratures"""
QUADRATURE_TOL = 1e-8


def create() -> Experiment:
    """Create the experiment cross-checking the heat-kernel constants

    Returns:
        Experiment: the heat constants experiment
    """
    return Experiment(
        "heat-constants",
        "Heat kernel constants",
        "The weighted heat-kernel constants computed by two independent quadratures agree",
        (
            "The constant c_d bounding the weighted heat kernel is an improper integral."
            " It is computed once by adaptive quadrature with a truncated tail and once"
            " by Gauss-Legendre nodes on the same interval; the two must agree to"
            f" {QUADRATURE_TOL:g} for every dimension up to {D_MAX}."
        ),
        {},
        _runner,
    )


def _runner(cfg: ExperimentConfig) -> Outcome:
    table = constants_table(D_MAX)
    assertions = [
        at_most(f"quadrature gap d={int(row.d)}", row.quadrature_gap, QUADRATURE_TOL)
        for row in table.itertuples()
    ]
    return Outcome(
        assertions,
        {"constants": table},
        f"c_d for d = 0..{D_MAX}: " + ", ".join(f"{c:.10g}" for c in table["c_d"]),
    )
