"""Experiments to be run by a LabEnvironment"""
from __future__ import annotations

import logging
import time
import uuid
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

import pandas as pd

from entropy_lab.config import ExperimentConfig, resolve_config
from entropy_lab.util import LabError, RegimeWarning, ResolutionWarning, render_experiment_template

logger = logging.getLogger(__name__)


class ExperimentStatus(Enum):
    """The available statuses for experiments

    Attributes:
        INFO: The experiment produced tables but asserted nothing
        FAIL: At least one assertion failed
        PASS: Every assertion passed
        UNKNOWN: The experiment didn't run, or raised a LabError
        WARN: Every assertion passed, but a regime or resolution warning
          was raised on the way
    """

    INFO = 1
    FAIL = 2
    PASS = 3
    UNKNOWN = 5
    WARN = 6


@dataclass(frozen=True)
class Assertion:
    """One pre-registered pass/fail criterion

    Attributes:
        name: what is asserted
        value: the measured value
        tolerance: the threshold the value is held against
        passed: the verdict
    """

    name: str
    value: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "tolerance": float(self.tolerance),
            "passed": bool(self.passed),
        }

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: {self.value:.6g} (tolerance {self.tolerance:.3g})"


def at_most(name: str, value: float, tolerance: float) -> Assertion:
    return Assertion(name, float(value), float(tolerance), bool(value <= tolerance))


def at_least(name: str, value: float, tolerance: float) -> Assertion:
    return Assertion(name, float(value), float(tolerance), bool(value >= tolerance))


def holds(name: str, passed: bool, value: float | None = None, tolerance: float = 1.0) -> Assertion:
    """A yes/no criterion; the value defaults to 1 for yes and 0 for no"""
    value = float(passed) if value is None else value
    return Assertion(name, float(value), float(tolerance), bool(passed))


@dataclass
class Outcome:
    """What an experiment runner returns

    Attributes:
        assertions: the pass/fail criteria
        tables: named tables, each written to <name>.csv
        details: free text shown in the report
        n_samples: number of Monte Carlo samples drawn
    """

    assertions: list[Assertion] = field(default_factory=list)
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    details: str = ""
    n_samples: int = 0


Runner = Callable[[ExperimentConfig], Outcome]


class Experiment:
    """A named, reproducible experiment

    Attributes:
        name: the registry name
        title: the title shown in the report
        anchor: a plain-language description of the property tested
        description: longer description (html allowed)
        defaults: typed config values layered over the schema defaults
        runner: the function doing the work; it takes the resolved config
          and returns an Outcome
        outcome: set after the experiment has run
        error: the LabError text if the experiment could not run
        caught: messages of regime and resolution warnings raised while running
        seconds: wall-clock time of the last run
    """

    name: str
    title: str
    anchor: str
    description: str
    defaults: dict
    runner: Runner
    outcome: Outcome | None
    error: str | None
    caught: list[str]
    seconds: float

    def __init__(
        self,
        name: str,
        title: str,
        anchor: str,
        description: str,
        defaults: Mapping[str, object],
        runner: Runner,
    ) -> None:
        self.name = name
        self.title = title
        self.anchor = anchor
        self.description = description
        self.defaults = dict(defaults)
        self.runner = runner
        self.outcome = None
        self.error = None
        self.caught = []
        self.seconds = 0.0

    def __repr__(self) -> str:
        return f"<Experiment {self.name}>"

    def config(
        self,
        path: str | Path | None = None,
        overrides: Iterable[str] = (),
        flags: Mapping[str, str] | None = None,
    ) -> ExperimentConfig:
        """The resolved configuration of this experiment"""
        return resolve_config(self.name, self.defaults, path, overrides, flags)

    def run(self, cfg: ExperimentConfig) -> None:
        """Runs the experiment and stores the outcome on the instance

        A LabError leaves the outcome empty and the status UNKNOWN.
        """
        self.outcome, self.error, self.caught = None, None, []
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            warnings.simplefilter("always", ResolutionWarning)
            try:
                self.outcome = self.runner(cfg)
            except LabError as e:
                logger.warning("Experiment %s did not run: %s", self.name, e)
                self.error = f"{type(e).__name__}: {e}"
        self.seconds = time.perf_counter() - start
        self.caught = sorted(
            {str(w.message) for w in caught if issubclass(w.category, (RegimeWarning, ResolutionWarning))}
        )

    @property
    def assertions(self) -> list[Assertion]:
        return [] if self.outcome is None else self.outcome.assertions

    @property
    def details(self) -> str | None:
        if self.error is not None:
            return self.error
        if self.outcome is None:
            return None
        return self.outcome.details

    @property
    def score(self) -> float | None:
        """Fraction of passed assertions, capped below the failing line on any failure

        None when the experiment didn't run and -1 when it asserted nothing.
        """
        if self.outcome is None:
            return None
        if not self.assertions:
            return -1
        passed = sum(a.passed for a in self.assertions) / len(self.assertions)
        if passed < 1:
            return min(passed, 0.49)
        return 0.89 if self.caught else 1.0

    @property
    def status(self) -> ExperimentStatus:
        return score_to_status(self.score)

    @property
    def html(self) -> str:
        """Returns the HTML card of this experiment in the lab report"""
        return render_experiment_template(
            "experiment.html.jinja",
            dict(
                id=str(uuid.uuid4()),
                status=self.status.value,
                status_name=self.status.name,
                title=self.title,
                name=self.name,
                anchor=self.anchor,
                description=self.description,
                assertions=self.assertions,
                warnings=self.caught,
                details=self.details,
                seconds=self.seconds,
            ),
        )


def score_to_status(score: float | None) -> ExperimentStatus:
    """Converts a score to a status

    Args:
        score: The score to convert to a status

    Returns:
        ExperimentStatus: The status of the experiment (based on the score)
    """
    if score is None:
        return ExperimentStatus.UNKNOWN
    elif score == -1:
        return ExperimentStatus.INFO
    elif score < 0.5:
        return ExperimentStatus.FAIL
    elif score < 0.9:
        return ExperimentStatus.WARN
    else:
        return ExperimentStatus.PASS


def score_map(experiment: Experiment) -> float:
    """Maps an Experiment to a float used to order the report

    Failures come first, then warnings, passes, info and unknown.
    """
    if experiment.status == ExperimentStatus.UNKNOWN:
        return 100
    elif experiment.status == ExperimentStatus.INFO:
        return 98
    else:
        return experiment.score
