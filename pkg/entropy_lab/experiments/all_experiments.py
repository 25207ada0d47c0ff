from __future__ import annotations

from entropy_lab.experiments import (
    Experiment,
    anticipating_ito,
    determinism,
    doubling,
    entropy_inequality,
    eps_cauchy,
    fractional_bv,
    heat_constants,
    heat_kernel_bounds,
    initial_condition,
    kato,
    l1_contraction,
    picard_contraction,
    tangent_oracle,
    uniform_moments,
    weak_time_continuity,
)


def create_all() -> list[Experiment]:
    """Fresh instances of every experiment, one per pass criterion of the lab"""
    return [
        heat_constants.create(),
        heat_kernel_bounds.create(),
        picard_contraction.create(),
        uniform_moments.create(),
        tangent_oracle.create(),
        weak_time_continuity.create(),
        entropy_inequality.create(),
        initial_condition.create(),
        l1_contraction.create(),
        kato.create(),
        doubling.create(),
        fractional_bv.create(),
        anticipating_ito.create(),
        eps_cauchy.create(),
        determinism.create(),
    ]


def register(lab, names: list[str] | None = None):
    """Register the experiments in the list above

    Args:
        lab (lab.LabEnvironment): Environment to register the experiments with
        names: register only these names, in this order
    """
    experiments = {e.name: e for e in create_all()}
    for name in names or list(experiments):
        lab.register_experiment(experiments[name])
