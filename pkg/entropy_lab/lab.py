"""The lab environment: registry, execution and persistence of experiments"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd
from jinja2 import Environment, PackageLoader
from tqdm import tqdm

from entropy_lab import __version__, experiments, util
from entropy_lab.config import ExperimentConfig
from entropy_lab.experiments import Assertion, Experiment, ExperimentStatus, all_experiments
from entropy_lab.noise import path_hash, sample_path, save_path
from entropy_lab.util import ConfigError
from entropy_lab.viscous_solver import snapshot_schedule, solve_path
from entropy_lab.weights import tail_mass, weighted_linf_norm, weighted_lp_norm

logger = logging.getLogger(__name__)

"""Append-only log of every ResultRecord, one JSON object per line"""
RESULTS_LOG = "results.jsonl"


@dataclass(frozen=True)
class ResultRecord:
    """The outcome of one experiment run

    Attributes:
        experiment: registry name
        config_hash: SHA-256 of the canonical config
        input_id: git-style content id of the config and the initial data
        version: library version
        status: name of the ExperimentStatus
        assertions: the pass/fail criteria with their values
        wall_clock: seconds spent running
        n_samples: Monte Carlo samples drawn
        details: report text, or the error of a run that failed
    """

    experiment: str
    config_hash: str
    input_id: str
    version: str
    status: str
    assertions: tuple[Assertion, ...]
    wall_clock: float
    n_samples: int
    details: str

    @property
    def passed(self) -> bool:
        return self.status in (ExperimentStatus.PASS.name, ExperimentStatus.WARN.name)

    @property
    def values(self) -> dict[str, float]:
        return {a.name: a.value for a in self.assertions}

    def to_json(self) -> str:
        return json.dumps(
            {
                "experiment": self.experiment,
                "config_hash": self.config_hash,
                "input_id": self.input_id,
                "version": self.version,
                "status": self.status,
                "assertions": [a.to_dict() for a in self.assertions],
                "wall_clock": self.wall_clock,
                "n_samples": self.n_samples,
                "details": self.details,
            },
            sort_keys=True,
        )


def input_id(cfg: ExperimentConfig) -> str:
    """Content id of the canonical config followed by the initial data bytes"""
    try:
        u0, v0 = cfg.initial_data()
        data = u0.values.tobytes() + v0.values.tobytes()
    except ConfigError:
        data = b""
    return util.content_id(cfg.canonical().encode() + data)


def registry() -> dict[str, Experiment]:
    """Fresh instances of every registered experiment by name"""
    return {e.name: e for e in all_experiments.create_all()}


def lookup(name: str) -> Experiment:
    """The experiment registered as name

    Raises:
        ConfigError: there is no such experiment; the message lists the
          available names
    """
    known = registry()
    if name not in known:
        raise ConfigError(f"Unknown experiment '{name}'. Available experiments: {', '.join(known)}")
    return known[name]


def list_experiments() -> pd.DataFrame:
    """Registry names with the property each one tests"""
    return pd.DataFrame(
        [(e.name, e.title, e.anchor) for e in all_experiments.create_all()],
        columns=["name", "title", "anchor"],
    )


def write_tables(cfg: ExperimentConfig, experiment: Experiment, record: ResultRecord) -> Path:
    """Write the CSV tables, the summary and the results log of one run

    Every CSV row carries the config hash and the library version.

    Returns:
        Path: the directory holding the experiment's files
    """
    root = Path(cfg.output)
    folder = root / cfg.name
    folder.mkdir(parents=True, exist_ok=True)
    tables = {} if experiment.outcome is None else experiment.outcome.tables
    for table_name, table in tables.items():
        stamped = table.assign(config_hash=record.config_hash, version=record.version)
        stamped.to_csv(folder / f"{table_name}.csv", index=False)
    if record.assertions:
        assertions = pd.DataFrame([a.to_dict() for a in record.assertions])
        assertions.assign(config_hash=record.config_hash, version=record.version).to_csv(
            folder / "assertions.csv", index=False
        )
    (folder / "config.txt").write_text(cfg.canonical())
    (folder / "summary.txt").write_text(summary(record, cfg))
    with open(root / RESULTS_LOG, "a") as f:
        f.write(record.to_json() + "\n")
    logger.info("Wrote %d tables for %s to %s", len(tables), cfg.name, folder)
    return folder


def summary(record: ResultRecord, cfg: ExperimentConfig) -> str:
    lines = [
        f"experiment: {record.experiment}",
        f"status: {record.status}",
        f"config_hash: {record.config_hash}",
        f"input_id: {record.input_id}",
        f"version: {record.version}",
        f"n_mc: {cfg.n_mc}",
        f"n_samples: {record.n_samples}",
        f"wall_clock: {record.wall_clock:.2f}s",
        "",
    ]
    lines += [str(a) for a in record.assertions]
    if record.details:
        lines += ["", record.details]
    return "\n".join(lines) + "\n"


def execute(experiment: Experiment, cfg: ExperimentConfig, write: bool = True) -> ResultRecord:
    """Run an experiment under cfg and record the result"""
    experiment.run(cfg)
    outcome = experiment.outcome
    record = ResultRecord(
        experiment=cfg.name,
        config_hash=cfg.hash,
        input_id=input_id(cfg),
        version=__version__,
        status=experiment.status.name,
        assertions=tuple(experiment.assertions),
        wall_clock=experiment.seconds,
        n_samples=0 if outcome is None else outcome.n_samples,
        details=experiment.details or "",
    )
    if write:
        write_tables(cfg, experiment, record)
    return record


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ResultRecord:
    """Run the experiment registered under cfg.name

    Args:
        cfg (ExperimentConfig): the resolved configuration; its name selects
          the experiment
        write (bool): write CSVs, the summary and the results log to cfg.output

    Returns:
        ResultRecord: the outcome

    Raises:
        ConfigError: unknown experiment name
    """
    return execute(lookup(cfg.name), cfg, write)


class LabEnvironment:
    """A set of registered experiments sharing one configuration layer

    Attributes:
        experiments: the registered experiments
        records: ResultRecords of the experiments that ran
        config_path: optional config file applied to every experiment
        overrides: `key=value` overrides applied to every experiment
        flags: raw flag values applied to every experiment
        write: persist tables and records
    """

    experiments: list[Experiment]
    records: dict[str, ResultRecord]

    def __init__(
        self,
        config_path: str | None = None,
        overrides: Iterable[str] = (),
        flags: dict[str, str] | None = None,
        write: bool = True,
    ) -> None:
        self.experiments = []
        self.records = {}
        self.config_path = config_path
        self.overrides = list(overrides)
        self.flags = dict(flags or {})
        self.write = write

    def register_experiment(self, experiment: Experiment):
        """Register an experiment in the environment

        This must be done before running self.run_experiments()
        """
        self.experiments.append(experiment)

    def config_for(self, experiment: Experiment) -> ExperimentConfig:
        return experiment.config(self.config_path, self.overrides, self.flags)

    def run_experiments(self) -> list[ResultRecord]:
        """Run every registered experiment in registration order"""
        print("\nRunning experiments")
        for experiment in tqdm(self.experiments):
            try:
                cfg = self.config_for(experiment)
            except ConfigError as e:
                experiment.error = f"ConfigError: {e}"
                continue
            self.records[experiment.name] = execute(experiment, cfg, self.write)
        return list(self.records.values())

    def _count(self, status: ExperimentStatus) -> int:
        return len([True for e in self.experiments if e.status == status])

    @property
    def num_pass_experiments(self) -> int:
        return self._count(ExperimentStatus.PASS)

    @property
    def num_warn_experiments(self) -> int:
        return self._count(ExperimentStatus.WARN)

    @property
    def num_fail_experiments(self) -> int:
        return self._count(ExperimentStatus.FAIL)

    @property
    def num_info_experiments(self) -> int:
        return self._count(ExperimentStatus.INFO)

    @property
    def num_unknown_experiments(self) -> int:
        return self._count(ExperimentStatus.UNKNOWN)

    @property
    def all_passed(self) -> bool:
        return self.num_fail_experiments == 0 and self.num_unknown_experiments == 0

    @property
    def score(self) -> float | None:
        """The average score of the experiments that asserted something"""
        scores = [e.score for e in self.experiments if e.score is not None and e.score >= 0]
        if len(scores) == 0:
            return None
        return sum(scores) / len(scores)

    @property
    def grade(self) -> str:
        if self.score is None:
            return "?"
        return util.percentage_to_grade(self.score, 0.25, 1)

    @property
    def html(self) -> str:
        """Returns the HTML lab report, failures first"""
        jinja_env = Environment(loader=PackageLoader("entropy_lab"))
        template = jinja_env.get_template("base.html.jinja")

        self.experiments.sort(key=lambda x: x.name)
        self.experiments.sort(key=experiments.score_map)

        return template.render(
            grade=self.grade,
            grade_color=util.GRADE_COLORS[self.grade],
            version=__version__,
            pass_count=self.num_pass_experiments,
            warn_count=self.num_warn_experiments,
            info_count=self.num_info_experiments,
            fail_count=self.num_fail_experiments,
            unknown_count=self.num_unknown_experiments,
            experiments=[(e.html, e.status.value) for e in self.experiments],
            records=self.records,
        )


def solve_snapshots(cfg: ExperimentConfig, stream: int = 0) -> Path:
    """Solve on one noise stream and write its snapshots

    Writes trajectory.npz (x, t, u and the config hash), the binary noise
    path and norms.csv with the weighted L1, L2 and sup norms per snapshot.

    Returns:
        Path: the directory holding the files
    """
    solver = cfg.solver()
    u0, _ = cfg.initial_data()
    path = sample_path(cfg.space, cfg.dt, cfg.n_steps, cfg.seed, stream)
    trajectory = solve_path(solver, u0, path, snapshot_steps=snapshot_schedule(cfg.n_steps, cfg.snapshots))
    folder = Path(cfg.output) / (cfg.name or "solve")
    folder.mkdir(parents=True, exist_ok=True)
    np.savez(
        folder / "trajectory.npz",
        x=cfg.grid.x,
        t=trajectory.times,
        u=trajectory.values,
        config_hash=np.array(cfg.hash),
        version=np.array(__version__),
    )
    save_path(path, folder / "noise.bin")
    fields = [trajectory.field(i) for i in range(len(trajectory))]
    norms = pd.DataFrame(
        {
            "t": trajectory.times,
            "l1": [float(weighted_lp_norm(f, 1.0, solver.weight)) for f in fields],
            "l2": [float(weighted_lp_norm(f, 2.0, solver.weight)) for f in fields],
            "sup": [float(weighted_linf_norm(f, solver.weight)) for f in fields],
        }
    )
    norms.assign(config_hash=cfg.hash, version=__version__).to_csv(folder / "norms.csv", index=False)
    (folder / "config.txt").write_text(cfg.canonical())
    (folder / "summary.txt").write_text(
        f"config_hash: {cfg.hash}\nversion: {__version__}\nnoise_path: {path_hash(path)}\n"
        f"steps: {cfg.n_steps}\nhalf_width: {cfg.half_width:g}\n"
        f"weight_tail_mass: {tail_mass(solver.weight, cfg.half_width):.3g}\n\n{norms.to_string(index=False)}\n"
    )
    logger.info("Wrote %d snapshots to %s", len(trajectory), folder)
    return folder
