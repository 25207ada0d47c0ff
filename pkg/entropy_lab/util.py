"""Utility functions for running lab experiments"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from math import ceil
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from jinja2 import Environment, PackageLoader
from tqdm import tqdm

"""The background colors for the grade component of the lab report"""
GRADE_COLORS = {
    "A+": "#2F6B00da",
    "A": "#4C8000da",
    "A-": "#709500da",
    "B+": "#99AA00da",
    "B": "#D5B800da",
    "B-": "#EAA700da",
    "C+": "#FF9101da",
    "C": "#FF8000da",
    "C-": "#FF6E00da",
    "D+": "#FF5B00da",
    "D": "#FF4700da",
    "D-": "#FF3100da",
    "F": "#FF1B00da",
    "?": "#808080da",
}

"""Number of worker threads used for Monte Carlo chunks"""
DEFAULT_MAX_WORKERS = int(os.environ.get("ENTROPY_LAB_WORKERS", 4))

"""Number of Monte Carlo samples marched together by one worker"""
DEFAULT_CHUNK_SIZE = 25

"""Two-sided 95% normal quantile used for every confidence interval"""
Z_95 = 1.959963984540054


class LabError(Exception):
    """Base class for errors raised by the lab"""


class ConfigError(LabError, ValueError):
    """A configuration or parameter constraint was violated"""


class InstabilityError(LabError, FloatingPointError):
    """A simulated path produced non-finite values"""


class RegimeWarning(UserWarning):
    """An estimate was requested outside the regime where it is proven"""


class ResolutionWarning(UserWarning):
    """The grid does not resolve a kernel well enough"""


def percentage_to_grade(percentage, bottom=0.25, top=1) -> str:
    """Convert a percentage to a grade
    Args:
        bottom (int): the percentage where the bottom grade (F) starts
        top (int): the top of the scale (default 1)
        percentage (int): the percentage to convert into a grade

        Returns:
            str: the grade corresponding to the percentage"""
    grades = {
        1: "A+",
        2: "A",
        3: "A-",
        4: "B+",
        5: "B",
        6: "B-",
        7: "C+",
        8: "C",
        9: "C-",
        10: "D+",
        11: "D",
        12: "D-",
        13: "F",
    }
    if percentage >= top:
        return "A+"
    if percentage < bottom:
        return "F"
    span = top - bottom
    adjusted_score = percentage - bottom
    grade_level = ceil(12 - adjusted_score / span * 11)
    return grades[grade_level]


def run_with_progress_bar(f, my_iter, max_workers: int, desc: str = None) -> list:
    """Run a function with a progress bar

    Run function f over the iterator using max_workers number of workers.
    This function uses tqdm to provide a nice progress bar. Results come back
    in the order of my_iter, whatever order the workers finish in.

    Args:
        f (function): function to run
        my_iter (iterable): iterable to iterate over
        max_workers (int): number of workers to use
        desc (str): optional label for the progress bar

    Returns:
        list[any]: list of results, aligned with my_iter

    """
    items = list(my_iter)
    results = [None] * len(items)
    with tqdm(total=len(items), desc=desc, leave=False) as pbar:
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
            futures = {executor.submit(f, arg): i for i, arg in enumerate(items)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                pbar.update(1)
    return results


def chunk_ranges(n: int, chunk_size: int) -> list[range]:
    """Split range(n) into consecutive chunks of at most chunk_size"""
    chunk_size = max(1, int(chunk_size))
    return [range(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]


def run_monte_carlo(
    sample_fn: Callable[[range], np.ndarray | tuple],
    n_mc: int,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    desc: str = None,
):
    """Run a Monte Carlo estimator over fixed sample chunks

    sample_fn receives a range of sample indices and returns an array whose
    first axis runs over those samples (or a tuple of such arrays). Chunks are
    fixed by chunk_size alone and concatenated in chunk order, so the result
    does not depend on max_workers or on scheduling.

    Args:
        sample_fn: per-chunk sampler
        n_mc (int): total number of samples
        max_workers (int): number of threads
        chunk_size (int): samples per chunk
        desc (str): optional progress bar label

    Returns:
        np.ndarray | tuple[np.ndarray, ...]: per-sample results
    """
    if n_mc < 1:
        raise ConfigError(f"n_mc must be positive, got {n_mc}")
    parts = run_with_progress_bar(
        sample_fn, chunk_ranges(n_mc, chunk_size), max_workers, desc
    )
    if isinstance(parts[0], tuple):
        return tuple(
            np.concatenate([p[i] for p in parts], axis=0) for i in range(len(parts[0]))
        )
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample mean with its standard error and a 95% confidence interval"""

    mean: float
    se: float
    lo: float
    hi: float
    n: int

    def overlaps(self, other: MonteCarloEstimate) -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


def mean_ci(samples, axis: int = 0):
    """Estimate the mean of samples along axis

    Args:
        samples: per-sample values
        axis (int): the sample axis

    Returns:
        MonteCarloEstimate for scalar data; for higher dimensional data a
        tuple of arrays (mean, se, lo, hi)
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n > 1:
        se = samples.std(axis=axis, ddof=1) / np.sqrt(n)
    else:
        se = np.zeros_like(mean)
    lo, hi = mean - Z_95 * se, mean + Z_95 * se
    if np.ndim(mean) == 0:
        return MonteCarloEstimate(float(mean), float(se), float(lo), float(hi), n)
    return mean, se, lo, hi


@dataclass(frozen=True)
class ToleranceBudget:
    """Pre-registered tolerance for a discrete check of a continuum inequality

    tol = scale * (c_dx * dx + c_dt * dt + c_eps * eps) + 3 * se

    Attributes:
        c_dx: weight on the grid spacing
        c_dt: weight on the time step
        c_eps: weight on the viscosity
        n_se: number of Monte Carlo standard errors granted
    """

    c_dx: float
    c_dt: float
    c_eps: float = 0.0
    n_se: float = 3.0

    def tol(
        self, dx: float, dt: float, se: float = 0.0, eps: float = 0.0, scale=1.0
    ) -> float:
        return (
            scale * (self.c_dx * dx + self.c_dt * dt + self.c_eps * eps)
            + self.n_se * se
        )


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least squares slope of log(y) against log(x)

    Returns:
        tuple[float, float]: (slope, r_squared)
    """
    lx, ly = np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float)))
    return fit_linear(lx, ly)


def fit_linear(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least squares slope of y against x, with the coefficient of determination"""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / total if total > 0 else 1.0
    return float(slope), float(r2)


@dataclass(frozen=True)
class SweepFit:
    """A swept estimate with the slope fitted through it

    Attributes:
        table: the sweep
        slope: fitted slope
        r2: coefficient of determination of the fit
        theory: the predicted slope, if any
        one_sided: a faster decay than predicted is consistent with the bound
    """

    table: pd.DataFrame
    slope: float
    r2: float
    theory: float | None = None
    one_sided: bool = False

    def within(self, tol: float = 0.3) -> bool:
        if self.theory is None or not np.isfinite(self.slope):
            return False
        if self.one_sided:
            return self.slope >= self.theory - tol
        return abs(self.slope - self.theory) <= tol


def content_id(data: bytes) -> str:
    """Git-style content id (sha1 over a blob header and the data)"""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def render_experiment_template(template_name: str, context: any) -> str:
    """Render a stored template

    Args:
        template_name (str): the template to render. This should be saved
          in the `experiments/templates` directory
        context (any): the context to render the template with

    Returns:
        str: the rendered template

    """
    jinja_env = Environment(loader=PackageLoader("entropy_lab.experiments"))
    template = jinja_env.get_template(template_name)

    return template.render(context)
