import pytest
from hypothesis import given
from hypothesis import strategies as st

from entropy_lab.analysis import KATO_BUDGET
from entropy_lab.config import (
    ExperimentConfig,
    parse_values,
    read_config_file,
    resolve_config,
    split_overrides,
)
from entropy_lab.util import ConfigError


def write(tmp_path, text):
    path = tmp_path / "lab.cfg"
    path.write_text(text)
    return path


def test_schema_defaults():
    cfg = ExperimentConfig()
    assert (cfg.n_x, cfg.half_width, cfg.dt, cfg.t_final) == (256, 10.0, 2e-4, 0.5)
    assert cfg.n_steps == 2500
    assert cfg.r0_list == pytest.approx([8 * 2e-4, 4 * 2e-4, 2 * 2e-4])
    assert cfg.solver().grid.n_x == 256


def test_config_file_with_comments(tmp_path):
    path = write(tmp_path, "# small run\nn_x = 64\neps_list = 0.1, 0.05  # two values\nsigma = modulated:0.5\n")
    values = parse_values(read_config_file(path))
    assert values == {"n_x": 64, "eps_list": (0.1, 0.05), "sigma": "modulated:0.5"}


def test_unknown_key_is_rejected(tmp_path):
    path = write(tmp_path, "n_cells = 64\n")
    with pytest.raises(ConfigError, match="n_cells"):
        resolve_config("kato", path=path)


def test_sections_are_rejected(tmp_path):
    path = write(tmp_path, "n_x = 64\n[other]\nseed = 1\n")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_unparsable_value():
    with pytest.raises(ConfigError, match="n_mc"):
        parse_values({"n_mc": "many"})
    with pytest.raises(ConfigError):
        parse_values({"r0_steps": " , "})


def test_override_needs_an_equals_sign():
    with pytest.raises(ConfigError):
        split_overrides(["seed"])
    assert split_overrides(["seed = 3", "case=all"]) == {"seed": "3", "case": "all"}


def test_layers_resolve_in_order(tmp_path):
    path = write(tmp_path, "n_mc = 10\nseed = 1\nn_x = 32\n")
    cfg = resolve_config(
        "kato",
        defaults={"n_mc": 5, "seed": 0, "n_x": 16, "eps": 0.1},
        path=path,
        overrides=["seed=2", "n_x=48"],
        flags={"n_x": "64", "case": None},
    )
    assert (cfg.eps, cfg.n_mc, cfg.seed, cfg.n_x) == (0.1, 10, 2, 64)
    assert cfg.name == "kato"
    assert cfg.case == "all"


def test_tolerance_overrides_merge_across_layers(tmp_path):
    path = write(tmp_path, "tol.c_dx = 0.25\ntol.c_dt = 1.0\n")
    cfg = resolve_config("kato", path=path, overrides=["tol.c_dt=2.0"])
    assert cfg.tolerances == (("c_dt", 2.0), ("c_dx", 0.25))
    budget = cfg.budget(KATO_BUDGET)
    assert (budget.c_dx, budget.c_dt, budget.n_se) == (0.25, 2.0, KATO_BUDGET.n_se)
    assert "tol.c_dx = 0.25" in cfg.canonical()


def test_hash_ignores_workers_and_output():
    base = ExperimentConfig(name="kato")
    assert base.with_(workers=1, output="elsewhere").hash == base.hash
    assert base.with_(seed=1).hash != base.hash
    assert base.with_(chunk_size=50).hash != base.hash
    assert "workers" not in base.canonical()


@given(workers=st.integers(1, 64), seed=st.integers(0, 2**32))
def test_hash_does_not_depend_on_workers(workers, seed):
    a = ExperimentConfig(seed=seed, workers=workers)
    b = ExperimentConfig(seed=seed)
    assert a.hash == b.hash


@pytest.mark.parametrize(
    "changes",
    [dict(dt=0.003), dict(n_mc=0), dict(heat="spectral"), dict(kappa=0.7), dict(node=4), dict(eps=-1.0)],
)
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig(**changes)


def test_initial_data():
    cfg = ExperimentConfig(n_x=32, initial="step:1.0", initial_other="zero")
    u0, v0 = cfg.initial_data()
    assert u0.values.max() == 1.0
    assert not v0.values.any()
