import json
import warnings

import numpy as np
import pandas as pd
import pytest

from entropy_lab.config import ExperimentConfig, resolve_config
from entropy_lab.experiments import Experiment, ExperimentStatus, Outcome, all_experiments, at_most
from entropy_lab.lab import (
    RESULTS_LOG,
    LabEnvironment,
    execute,
    list_experiments,
    lookup,
    run_experiment,
    solve_snapshots,
)
from entropy_lab.util import ConfigError, RegimeWarning

SMALL = ["n_x=32", "dt=0.01", "t_final=0.1", "n_mc=8", "snapshots=2", "chunk_size=4"]


def toy(runner, name="toy"):
    return Experiment(name, "Toy", "a toy property", "", {}, runner)


def test_every_criterion_is_listed_once():
    table = list_experiments()
    assert len(table) == 15
    assert table["name"].is_unique
    assert {"kato", "anticipating-ito", "doubling", "determinism"} <= set(table["name"])
    assert table["anchor"].str.len().min() > 20


def test_unknown_experiment_lists_the_available_ones():
    with pytest.raises(ConfigError, match="Available experiments: .*kato"):
        lookup("kato-inequality")


def test_run_experiment_writes_stamped_tables(tmp_path):
    cfg = resolve_config("heat-constants", overrides=[f"output={tmp_path}"])
    record = run_experiment(cfg)
    assert record.status == "PASS"
    assert record.config_hash == cfg.hash
    folder = tmp_path / "heat-constants"
    table = pd.read_csv(folder / "constants.csv")
    assert (table["config_hash"] == cfg.hash).all()
    assert "version" in table.columns
    assert cfg.hash in (folder / "summary.txt").read_text()
    line = json.loads((tmp_path / RESULTS_LOG).read_text().splitlines()[-1])
    assert line["experiment"] == "heat-constants"
    assert len(line["assertions"]) == 5


def test_identical_configs_give_identical_records(tmp_path):
    cfg = resolve_config("determinism", overrides=SMALL + [f"output={tmp_path}", "workers=2"])
    first, second = run_experiment(cfg), run_experiment(cfg)
    assert first.values == second.values
    assert first.input_id == second.input_id
    assert first.status == "PASS"
    assert len((tmp_path / RESULTS_LOG).read_text().splitlines()) == 2


def test_lab_error_leaves_the_status_unknown():
    def runner(cfg):
        raise ConfigError("need a compact weight")

    experiment = toy(runner)
    record = execute(experiment, ExperimentConfig(name="toy"), write=False)
    assert record.status == "UNKNOWN"
    assert "need a compact weight" in record.details
    assert experiment.score is None


@pytest.mark.parametrize(
    "assertions, status",
    [
        ([], ExperimentStatus.INFO),
        ([at_most("a", 0.0, 1.0)], ExperimentStatus.PASS),
        ([at_most("a", 0.0, 1.0), at_most("b", 2.0, 1.0)], ExperimentStatus.FAIL),
    ],
)
def test_status_follows_the_assertions(assertions, status):
    experiment = toy(lambda cfg: Outcome(assertions))
    experiment.run(ExperimentConfig())
    assert experiment.status == status


def test_regime_warnings_downgrade_a_pass():
    def runner(cfg):
        warnings.warn("outside the regime", RegimeWarning)
        return Outcome([at_most("a", 0.0, 1.0)])

    experiment = toy(runner)
    experiment.run(ExperimentConfig())
    assert experiment.status == ExperimentStatus.WARN
    assert experiment.caught == ["outside the regime"]


def test_lab_counts_and_report(tmp_path):
    lab = LabEnvironment(overrides=[f"output={tmp_path}"])
    all_experiments.register(lab, ["heat-constants"])
    lab.register_experiment(toy(lambda cfg: Outcome([at_most("a", 2.0, 1.0)])))
    records = lab.run_experiments()
    assert len(records) == 2
    assert (lab.num_pass_experiments, lab.num_fail_experiments) == (1, 1)
    assert not lab.all_passed
    html = lab.html
    assert "Heat kernel constants" in html and lab.grade in html
    # failures come first
    assert lab.experiments[0].name == "toy"


def test_solve_writes_snapshots(tmp_path):
    cfg = resolve_config("solve", overrides=SMALL + [f"output={tmp_path}"])
    folder = solve_snapshots(cfg)
    data = np.load(folder / "trajectory.npz")
    assert data["u"].shape == (3, 32)
    assert str(data["config_hash"]) == cfg.hash
    norms = pd.read_csv(folder / "norms.csv")
    assert list(norms["t"]) == pytest.approx([0.0, 0.05, 0.1])
    assert (folder / "noise.bin").stat().st_size > 0
