import numpy as np
import pytest

from entropy_lab.grid import GridField
from entropy_lab.heat_kernel import KernelParams, heat_convolve
from entropy_lab.noise import sample_increments, sample_path, shift_path
from entropy_lab.util import ConfigError, InstabilityError, ResolutionWarning
from entropy_lab.viscous_solver import (
    FluxFamily,
    FluxFn,
    Scheme,
    continuous_dependence_probe,
    flux_divergence,
    flux_from_key,
    initial_field,
    linear_additive_reference,
    linearized_flux_divergence,
    lp_moment_curve,
    mean_square_linear_oracle,
    moment_growth_bound,
    picard_mild_solve,
    snapshot_schedule,
    solve_batch,
    solve_path,
    spatial_derivative_bound,
    step_exp_euler,
    stochastic_convolution_oracle,
)
from tests.helpers import make_config


def path_for(cfg, seed=1, stream=0):
    return sample_path(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, stream)


@pytest.mark.parametrize("key", ["zero", "linear:-0.7", "burgers:1.5", "sine:0.8"])
def test_flux_is_lipschitz_and_vanishes_at_zero(key):
    flux = flux_from_key(key)
    u = np.linspace(-30, 30, 6001)
    assert flux.f(np.array(0.0)) == 0.0
    assert np.max(np.abs(flux.f_prime(u))) <= flux.lip_norm + 1e-12
    h = 1e-6
    np.testing.assert_allclose((flux.f(u + h) - flux.f(u - h)) / (2 * h), flux.f_prime(u), atol=1e-5)


@pytest.mark.parametrize("key", ["burgers", "cubic:1", "burgers:0", "linear:x"])
def test_bad_flux_keys(key):
    with pytest.raises(ConfigError):
        flux_from_key(key)


def test_flux_lip_distance():
    assert FluxFn(FluxFamily.LINEAR, 1.0).lip_distance(FluxFn(FluxFamily.LINEAR, 1.25)) == pytest.approx(0.25)


@pytest.mark.parametrize(
    "key, value",
    [("zero", 0.0), ("const:2", 2.0), ("bump:1.5", 1.5), ("step:3", 3.0), ("riemann:1:-1", -1.0)],
)
def test_initial_fields(key, value):
    u = initial_field(key, make_config().grid)
    assert u.values[u.grid.n_x // 2] == pytest.approx(value)


def test_bad_initial_field():
    with pytest.raises(ConfigError):
        initial_field("wave:1", make_config().grid)


def test_cfl_violation_is_rejected():
    with pytest.raises(ConfigError):
        make_config(flux="linear:20", dt=0.01)


def test_noise_stability_violation_is_rejected():
    with pytest.raises(ConfigError):
        make_config(sigma="linear:30", dt=0.01)


def test_pure_heat_step_matches_heat_convolve():
    cfg = make_config(flux="zero", sigma="zero", heat_symbol="gaussian")
    u = initial_field("bump:1", cfg.grid)
    out = step_exp_euler(u, cfg, np.zeros(cfg.m))
    with pytest.warns(ResolutionWarning):
        ref = heat_convolve(u, KernelParams(cfg.eps, cfg.dt))
    np.testing.assert_allclose(out.values, ref.values, atol=1e-14)
    assert out.t == pytest.approx(cfg.dt)


def test_zero_is_a_fixed_point():
    cfg = make_config(sigma="linear:0.5")
    traj = solve_path(cfg, initial_field("zero", cfg.grid), path_for(cfg), store_all=True)
    assert not traj.values.any()


def test_solutions_are_deterministic():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    a = solve_path(cfg, u0, p, store_all=True)
    b = solve_path(cfg, u0, p, store_all=True)
    np.testing.assert_array_equal(a.values, b.values)


def test_batch_matches_single_paths():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, 3, [0, 1, 2])
    batch = solve_batch(cfg, u0, inc, snapshot_steps=[5, 20])
    single = solve_path(cfg, u0, sample_path(cfg.sigma.space, cfg.dt, cfg.n_steps, 3, 2), snapshot_steps=[5, 20])
    np.testing.assert_allclose(batch.values[:, 2], single.values, rtol=1e-12, atol=1e-14)


def test_future_increments_do_not_change_the_past():
    cfg = make_config(sigma="sin:0.8")
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    q = shift_path(p, 10, 1, 0.3)
    a = solve_path(cfg, u0, p, store_all=True)
    b = solve_path(cfg, u0, q, store_all=True)
    np.testing.assert_array_equal(a.values[:11], b.values[:11])
    assert not np.array_equal(a.values[11], b.values[11])


def test_mass_is_conserved_without_noise():
    cfg = make_config(sigma="zero", n_steps=100)
    u0 = initial_field("bump:1", cfg.grid)
    traj = solve_path(cfg, u0, path_for(cfg), store_all=True)
    mass = cfg.grid.integrate(traj.values)
    np.testing.assert_allclose(mass, mass[0], rtol=1e-10 * cfg.t_final)


def test_advection_diffusion_against_closed_form():
    # u_t + a u_x = eps u_xx from a Gaussian has a closed form on the line
    results = []
    for n_x, dt in [(256, 0.005), (512, 0.0025)]:
        cfg = make_config(flux="linear:1", sigma="zero", n_x=n_x, dt=dt, n_steps=int(round(0.5 / dt)), eps=0.05)
        u0 = GridField(np.exp(-cfg.grid.x**2), cfg.grid)
        final = solve_path(cfg, u0, path_for(cfg)).final
        s = 1 + 4 * cfg.eps * cfg.t_final
        exact = np.exp(-((cfg.grid.x - cfg.t_final) ** 2) / s) / np.sqrt(s)
        results.append(np.max(np.abs(final.values - exact)))
    assert results[1] < results[0]
    assert results[1] < 0.05


def test_snapshot_times_must_hit_steps():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    traj = solve_path(cfg, u0, path_for(cfg), snapshot_times=[0.05, 0.1])
    assert list(traj.steps) == [0, 5, 10]
    np.testing.assert_allclose(traj.times, [0.0, 0.05, 0.1])
    with pytest.raises(ConfigError):
        solve_path(cfg, u0, path_for(cfg), snapshot_times=[0.055])


def test_short_path_is_rejected():
    cfg = make_config()
    short = sample_path(cfg.sigma.space, cfg.dt, cfg.n_steps - 1, 1, 0)
    with pytest.raises(ValueError):
        solve_path(cfg, initial_field("bump:1", cfg.grid), short)


def test_mismatched_step_is_rejected():
    cfg = make_config()
    other = sample_path(cfg.sigma.space, cfg.dt / 2, cfg.n_steps, 1, 0)
    with pytest.raises(ConfigError):
        solve_path(cfg, initial_field("bump:1", cfg.grid), other)


def test_instability_names_the_step():
    cfg = make_config()
    u0 = GridField(np.full(cfg.grid.n_x, 1e200), cfg.grid)
    with pytest.raises(InstabilityError, match="step 1"):
        solve_path(cfg, u0, path_for(cfg))


def test_linearized_divergence_is_the_derivative():
    cfg = make_config(flux="sine:0.9")
    rng = np.random.default_rng(4)
    u, w = rng.standard_normal((2, cfg.grid.n_x))
    h = 1e-6
    fd = (flux_divergence(u + h * w, cfg.flux, cfg.grid.dx) - flux_divergence(u - h * w, cfg.flux, cfg.grid.dx)) / (2 * h)
    np.testing.assert_allclose(linearized_flux_divergence(w, u, cfg.flux, cfg.grid.dx), fd, atol=1e-6)


def test_stochastic_convolution_oracle():
    cfg = make_config(flux="zero", sigma="additive:0.5:0.5", n_steps=30)
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    traj = solve_path(cfg, u0, p, store_all=True)
    oracle = stochastic_convolution_oracle(cfg, u0, p)
    np.testing.assert_allclose(traj.values, oracle.values, atol=1e-11)


def test_oracles_reject_other_configurations():
    cfg = make_config(flux="burgers:1", sigma="sin:0.5")
    u0 = initial_field("bump:1", cfg.grid)
    with pytest.raises(ConfigError):
        stochastic_convolution_oracle(cfg, u0, path_for(cfg))
    with pytest.raises(ConfigError):
        mean_square_linear_oracle(cfg, u0)


def test_linear_additive_reference_matches_the_scheme():
    cfg = make_config(flux="linear:0.8", sigma="additive:0.4")
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    final = solve_path(cfg, u0, p).final
    ref = linear_additive_reference(cfg, u0, p, eps=cfg.eps)
    np.testing.assert_allclose(final.values, ref.values, atol=1e-11)


def test_inviscid_reference_is_the_eps_zero_scheme():
    cfg = make_config(flux="linear:0.8", sigma="additive:0.4", eps=0.0)
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    ref = linear_additive_reference(cfg, u0, p)
    np.testing.assert_allclose(solve_path(cfg, u0, p).final.values, ref.values, atol=1e-11)
    viscous = linear_additive_reference(cfg, u0, p, eps=0.05)
    assert np.max(np.abs(viscous.values - ref.values)) > 1e-6


def test_mean_square_linear_oracle():
    cfg = make_config(flux="linear:0.5", sigma="linear:0.8", n_steps=20)
    u0 = initial_field("bump:1", cfg.grid)
    inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, 8, range(400))
    traj = solve_batch(cfg, u0, inc, store_all=True)
    energy = cfg.grid.integrate(traj.values**2)
    expected = mean_square_linear_oracle(cfg, u0)
    mean = energy.mean(axis=1)
    se = energy.std(axis=1, ddof=1) / np.sqrt(energy.shape[1])
    assert mean[0] == pytest.approx(expected[0])
    assert np.all(np.abs(mean - expected) <= 4 * se + 1e-12)


def test_picard_converges_in_one_iteration_without_nonlinearity():
    cfg = make_config(flux="zero", sigma="zero", n_x=32, n_steps=16)
    u0 = initial_field("bump:1", cfg.grid)
    result = picard_mild_solve(cfg, u0, path_for(cfg), n_iter=4)
    assert result.distances[1] == 0.0
    heat = solve_path(cfg, u0, path_for(cfg), store_all=True)
    np.testing.assert_allclose(result.trajectory.values, heat.values, atol=1e-14)


def test_picard_contracts_above_threshold():
    cfg = make_config(n_x=64, n_steps=64, dt=0.005, sigma="sin:0.8")
    u0 = initial_field("bump:1", cfg.grid)
    p = path_for(cfg)
    result = picard_mild_solve(cfg, u0, p, n_iter=40)
    assert result.contracting
    assert result.contraction_bound < 1
    assert result.max_ratio(3, 8) < 0.9
    euler = solve_path(cfg, u0, p, store_all=True)
    np.testing.assert_allclose(result.trajectory.values, euler.values, atol=1e-6)
    assert list(result.history().columns) == ["iteration", "distance", "ratio"]


def test_picard_scheme_dispatch():
    cfg = make_config(n_x=32, n_steps=16, scheme=Scheme.PICARD_MILD)
    u0 = initial_field("bump:1", cfg.grid)
    traj = solve_path(cfg, u0, path_for(cfg))
    assert len(traj) == cfg.n_steps + 1


def test_picard_rejects_large_problems():
    cfg = make_config(n_x=256)
    with pytest.raises(ConfigError):
        picard_mild_solve(cfg, initial_field("bump:1", cfg.grid), path_for(cfg))


def test_continuous_dependence_identical_inputs():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    result = continuous_dependence_probe(cfg, cfg, u0, u0, path_for(cfg))
    assert result.lhs == 0.0
    assert result.passed


@pytest.mark.parametrize("delta", [1e-3, 1e-2])
def test_continuous_dependence_linear_in_initial_perturbation(delta):
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    u1 = u0.with_values(u0.values * (1 + delta))
    result = continuous_dependence_probe(cfg, cfg, u0, u1, path_for(cfg))
    assert result.passed
    assert result.lhs <= 3 * result.rhs


def test_continuous_dependence_in_sigma():
    cfg1 = make_config(sigma="sin:0.5")
    cfg2 = make_config(sigma="sin:0.55")
    u0 = initial_field("bump:1", cfg1.grid)
    result = continuous_dependence_probe(cfg1, cfg2, u0, u0, path_for(cfg1))
    assert result.rhs > 0
    assert result.passed


def test_continuous_dependence_needs_shared_grid():
    cfg = make_config()
    u0 = initial_field("zero", cfg.grid)
    with pytest.raises(ConfigError):
        continuous_dependence_probe(cfg, make_config(n_x=32), u0, u0, path_for(cfg))


def test_moment_curve_without_noise_grows_slowly():
    cfg = make_config(flux="zero", sigma="zero", n_steps=50)
    u0 = initial_field("bump:1", cfg.grid)
    curve = lp_moment_curve(cfg, u0, 2, n_mc=2, snapshots=5, max_workers=1)
    rate = moment_growth_bound(cfg)
    assert (curve["se"] == 0).all()
    m = curve["mean"].to_numpy()
    t = curve["t"].to_numpy()
    assert np.all(m[1:] <= m[0] * np.exp(rate * t[1:]) * (1 + 1e-10))


def test_moment_curve_from_zero_with_vanishing_sigma():
    cfg = make_config(sigma="linear:0.5")
    curve = lp_moment_curve(cfg, initial_field("zero", cfg.grid), 4, n_mc=3, max_workers=1)
    assert (curve["mean"] == 0).all()


def test_moment_curve_rejects_odd_p():
    cfg = make_config()
    with pytest.raises(ConfigError):
        lp_moment_curve(cfg, initial_field("zero", cfg.grid), 3, n_mc=2)


def test_moment_curve_does_not_depend_on_workers():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    a = lp_moment_curve(cfg, u0, 2, n_mc=12, seed=4, max_workers=1, chunk_size=5)
    b = lp_moment_curve(cfg, u0, 2, n_mc=12, seed=4, max_workers=3, chunk_size=5)
    np.testing.assert_array_equal(a.to_numpy(), b.to_numpy())


def test_derivative_vanishes_for_constant_data_and_uniform_noise():
    cfg = make_config(flux="burgers:1", sigma="additive:0.5")
    curve = spatial_derivative_bound(cfg, initial_field("const:1", cfg.grid), n_mc=4, max_workers=1)
    np.testing.assert_allclose(curve["mean"], 0.0, atol=1e-20)


def test_snapshot_schedule():
    assert list(snapshot_schedule(100, 4)) == [0, 25, 50, 75, 100]
