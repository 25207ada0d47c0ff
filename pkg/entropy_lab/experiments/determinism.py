from __future__ import annotations

import numpy as np

from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Experiment, Outcome, at_most, holds
from entropy_lab.viscous_solver import lp_moment_curve

"""Largest relative difference accepted between runs"""
REL_TOL = 1e-12


def create() -> Experiment:
    """Create the end-to-end determinism experiment

    Returns:
        Experiment: the determinism experiment
    """
    return Experiment(
        "determinism",
        "Reproducibility",
        "Reported numbers depend only on the configuration, not on the worker count or scheduling",
        (
            "A Monte Carlo moment curve is computed with one worker and again with the"
            " configured worker count on the same config hash. Every reported number must"
            " agree to a relative 1e-12, and rebuilding the config must reproduce its hash."
        ),
        {"n_mc": 200, "dt": 0.001, "t_final": 0.2, "n_x": 128, "workers": 4},
        _runner,
    )


def relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    return float(np.max(np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)))


def _runner(cfg: ExperimentConfig) -> Outcome:
    solver = cfg.solver()
    u0, _ = cfg.initial_data()
    runs = [
        lp_moment_curve(solver, u0, 2, cfg.n_mc, cfg.seed, cfg.snapshots, workers, cfg.chunk_size)
        for workers in (1, cfg.workers, 1)
    ]
    columns = ["mean", "se", "ci_lo", "ci_hi"]
    serial = runs[0][columns].to_numpy()
    pooled = runs[1][columns].to_numpy()
    repeat = runs[2][columns].to_numpy()
    assertions = [
        at_most("relative difference across worker counts", relative_difference(serial, pooled), REL_TOL),
        at_most("relative difference on repeat", relative_difference(serial, repeat), REL_TOL),
        holds("config hash reproduced", cfg.with_().hash == ExperimentConfig(**_fields(cfg)).hash),
    ]
    return Outcome(assertions, {"moments": runs[1]}, f"config hash {cfg.hash}", 3 * cfg.n_mc)


def _fields(cfg: ExperimentConfig) -> dict:
    return {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}
