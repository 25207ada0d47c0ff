import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropy_lab.grid import Grid, GridField
from entropy_lab.noise import (
    NoiseSpace,
    SigmaCoeff,
    SigmaFamily,
    coarsen_path,
    d_sigma_du,
    eval_sigma,
    hs_norm_G,
    load_path,
    path_hash,
    sample_increments,
    sample_path,
    save_path,
    shift_path,
    sigma_all,
    sigma_from_key,
    sigma_lip_distance,
)
from entropy_lab.util import ConfigError
from entropy_lab.weights import poly_weight

SPACE = NoiseSpace.uniform(4)
KEYS = ["additive:0.5", "linear:0.3", "sin:0.5", "rational:0.8", "modulated:0.5", "modulated:0.4:0.8"]


def test_same_seed_and_stream_give_identical_paths():
    a = sample_path(SPACE, 0.01, 50, seed=7, stream_id=3)
    b = sample_path(SPACE, 0.01, 50, seed=7, stream_id=3)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert path_hash(a) == path_hash(b)


def test_streams_are_distinct():
    a = sample_path(SPACE, 0.01, 50, seed=7, stream_id=3)
    b = sample_path(SPACE, 0.01, 50, seed=7, stream_id=4)
    assert not np.array_equal(a.increments, b.increments)
    assert path_hash(a) != path_hash(b)


def test_increments_are_read_only():
    p = sample_path(SPACE, 0.01, 5, seed=1, stream_id=0)
    with pytest.raises(ValueError):
        p.increments[0, 0] = 1.0


def test_increment_variance():
    space = NoiseSpace((0.1, 0.2, 0.3, 0.4))
    dt = 0.01
    inc = sample_increments(space, dt, 2000, seed=5, streams=range(10)).reshape(-1, 4)
    np.testing.assert_allclose(inc.var(axis=0), dt * space.mu_array, rtol=0.05)
    np.testing.assert_allclose(inc.mean(axis=0), 0.0, atol=4 * np.sqrt(dt * 0.4 / 20000))


def test_batched_streams_match_single_paths():
    batch = sample_increments(SPACE, 0.01, 30, seed=11, streams=[2, 5])
    np.testing.assert_array_equal(batch[1], sample_path(SPACE, 0.01, 30, 11, 5).increments)


def test_shift_path_changes_one_cell():
    p = sample_path(SPACE, 0.01, 10, seed=2, stream_id=0)
    q = shift_path(p, 4, 2, 0.5)
    diff = q.increments - p.increments
    assert diff[4, 2] == pytest.approx(0.5)
    diff[4, 2] = 0.0
    assert not diff.any()


@pytest.mark.parametrize("n, k", [(10, 0), (-1, 0), (0, 4)])
def test_shift_path_out_of_range(n, k):
    p = sample_path(SPACE, 0.01, 10, seed=2, stream_id=0)
    with pytest.raises(IndexError):
        shift_path(p, n, k, 0.1)


def test_coarsen_path_sums_increments():
    p = sample_path(SPACE, 0.01, 12, seed=3, stream_id=1)
    c = coarsen_path(p, 4)
    assert c.dt == pytest.approx(0.04)
    assert c.n_steps == 3
    np.testing.assert_allclose(c.increments[1], p.increments[4:8].sum(axis=0))
    with pytest.raises(ValueError):
        coarsen_path(p, 5)


def test_save_and_load(tmp_path):
    p = sample_path(SPACE, 0.002, 40, seed=9, stream_id=6)
    save_path(p, tmp_path / "paths" / "p.bin")
    q = load_path(tmp_path / "paths" / "p.bin", SPACE)
    np.testing.assert_array_equal(p.increments, q.increments)
    assert (q.seed, q.stream_id, q.dt) == (9, 6, 0.002)
    assert path_hash(p) == path_hash(q)


def test_load_rejects_foreign_file(tmp_path):
    f = tmp_path / "junk.bin"
    f.write_bytes(b"\0" * 64)
    with pytest.raises(ValueError):
        load_path(f)


@pytest.mark.parametrize("key", KEYS)
def test_sigma_keys_build_valid_coefficients(key):
    c = sigma_from_key(key, SPACE)
    assert len(c.g) == 4
    assert c.lip_norm > 0


def test_zero_sigma():
    c = sigma_from_key("zero", SPACE)
    assert c.lip_norm == 0
    assert not sigma_all(c, np.zeros(8), np.ones(8)).any()


def test_modulated_defaults_to_half():
    assert sigma_from_key("modulated:0.5", SPACE).modulation == 0.5
    assert sigma_from_key("modulated:0.5", SPACE).is_x_dependent
    assert not sigma_from_key("sin:0.5", SPACE).is_x_dependent


@pytest.mark.parametrize("key", ["sine:1", "sin", "sin:0.5:2.0", "sin:x"])
def test_bad_sigma_keys(key):
    with pytest.raises(ConfigError):
        sigma_from_key(key, SPACE)


def test_amplitude_count_must_match_nodes():
    with pytest.raises(ConfigError):
        SigmaCoeff(SigmaFamily.SIN, (1.0, 2.0), SPACE)


@settings(max_examples=200, deadline=None)
@given(
    key=st.sampled_from(KEYS),
    x=st.floats(-10, 10),
    y=st.floats(-10, 10),
    u=st.floats(-50, 50),
    v=st.floats(-50, 50),
    k=st.integers(0, 3),
)
def test_sigma_obeys_its_envelope(key, x, y, u, v, k):
    c = sigma_from_key(key, SPACE)
    M = c.M[k] * (1 + 1e-12)
    slack = 1e-12
    assert abs(eval_sigma(c, x, u, k) - eval_sigma(c, x, v, k)) <= M * abs(u - v) + slack
    assert abs(eval_sigma(c, x, u, k)) <= M * (1 + abs(u)) + slack
    e = c.holder_exponent
    holder = M * abs(x - y) ** e * (1 + abs(u))
    assert abs(eval_sigma(c, x, u, k) - eval_sigma(c, y, u, k)) <= holder + slack


@pytest.mark.parametrize("key", KEYS)
def test_d_sigma_du_matches_differences(key):
    c = sigma_from_key(key, SPACE)
    x = np.linspace(-9, 9, 7)
    u = np.linspace(-3, 3, 7)
    h = 1e-6
    fd = (sigma_all(c, x, u + h) - sigma_all(c, x, u - h)) / (2 * h)
    np.testing.assert_allclose(d_sigma_du(c, x, u), fd, atol=1e-7)


def test_hs_norm_of_additive_noise():
    grid = Grid(64, 10.0)
    c = sigma_from_key("additive:0.5", SPACE)
    w = poly_weight(2)
    u = GridField(np.zeros(grid.n_x), grid)
    expected = np.sqrt(np.sum(SPACE.mu_array * c.g_array**2) * grid.integrate(w.on_grid(grid)))
    assert hs_norm_G(c, u, w) == pytest.approx(expected)


def test_sigma_lip_distance():
    a = sigma_from_key("sin:0.5", SPACE)
    assert sigma_lip_distance(a, a) == 0.0
    b = sigma_from_key("sin:0.55", SPACE)
    # the difference is 0.1 * sigma_a; sampling only approaches its envelope 0.1 * M
    d = sigma_lip_distance(a, b)
    assert 0.085 * a.lip_norm <= d <= 0.1 * a.lip_norm * (1 + 1e-9)
