import numpy as np
import pandas as pd
import pytest

from entropy_lab.analysis import (
    DOUBLING_TERMS,
    DoublingParams,
    consecutive_distances,
    contraction_violations,
    doubling_terms,
    epsilon_convergence_study,
    epsilon_reference_distance,
    fractional_bv_excess,
    fractional_bv_modulus,
    kato_check,
    l1_contraction_curve,
    pair_kernel,
    t1_envelope_study,
    t2_trend_study,
    t3_epsilon_study,
)
from entropy_lab.entropy import Bump
from entropy_lab.util import ConfigError
from entropy_lab.viscous_solver import initial_field
from tests.helpers import make_config


def doubling_params(**changes):
    params = dict(r=0.7, r0=0.02, delta=0.2, gamma=0.05, t0=0.1, psi=Bump(radius=3.0))
    params.update(changes)
    return DoublingParams(**params)


def test_pair_kernel_has_the_mass_of_psi():
    grid = make_config().grid
    psi = Bump(radius=3.0)
    kernel = pair_kernel(grid, 0.7, psi)
    assert kernel.value.shape == (len(kernel.lags), grid.n_x)
    assert grid.dx * kernel.value.sum() == pytest.approx(grid.integrate(psi(grid.x)), rel=1e-2)
    # d_x + d_y is the derivative of psi alone, whose integral vanishes
    assert grid.dx * (kernel.d_x + kernel.d_y).sum() == pytest.approx(0.0, abs=1e-6)


def test_pair_kernel_rejects_short_radius():
    grid = make_config().grid
    with pytest.raises(ValueError):
        pair_kernel(grid, grid.dx, Bump())


@pytest.mark.parametrize(
    "changes",
    [dict(r=-1.0), dict(delta=0.0), dict(r0=0.05)],
)
def test_invalid_doubling_params(changes):
    with pytest.raises(ConfigError):
        doubling_params(**changes)


def test_doubling_params_are_checked_against_the_run():
    cfg = make_config(n_steps=30)
    with pytest.raises(ConfigError):
        doubling_params(gamma=0.1).check(cfg)
    with pytest.raises(ConfigError):
        doubling_params(psi=Bump(center=5.0, radius=3.0)).check(cfg)
    doubling_params().check(cfg)


def test_coupled_params_tie_delta_to_r():
    params = DoublingParams.coupled(0.8, 0.5, r0=0.02, gamma=0.05, t0=0.1)
    assert params.delta == pytest.approx(0.8**1.5)


def test_time_cutoff():
    params = doubling_params()
    assert params.xi(0.05) == 1.0
    assert params.xi(0.2) == 0.0
    assert params.xi_d1(0.05) == 0.0
    assert params.xi_d1(0.15) < 0


def test_doubling_without_noise():
    cfg = make_config(sigma="zero", n_steps=30)
    u0, v0 = initial_field("bump:1", cfg.grid), initial_field("bump:0.5", cfg.grid)
    result = doubling_terms(cfg, u0, v0, doubling_params(), 1, max_workers=1)
    assert list(result.terms.index) == list(DOUBLING_TERMS)
    assert result.estimate("T1") == 0.0
    assert result.estimate("T2") == 0.0
    assert result.estimate("L") > 0
    assert result.passed


def test_doubling_with_noise_passes():
    cfg = make_config(sigma="sin:0.5", n_steps=30)
    u0 = initial_field("bump:1", cfg.grid)
    result = doubling_terms(cfg, u0, u0, doubling_params(), 8, max_workers=2, chunk_size=4)
    assert result.estimate("T1") <= 0
    assert np.isfinite(result.estimate("T2"))
    assert result.passed


def test_doubling_without_tangents_leaves_out_t2():
    cfg = make_config(sigma="sin:0.5", n_steps=30)
    u0 = initial_field("bump:1", cfg.grid)
    result = doubling_terms(cfg, u0, u0, doubling_params(), 2, tangents=False, max_workers=1)
    assert np.isnan(result.estimate("T2"))
    assert np.isfinite(result.gap.mean)


def test_t1_study_bounds_eta():
    cfg = make_config(sigma="modulated:0.5", n_steps=30)
    u0 = initial_field("bump:1", cfg.grid)
    with pytest.raises(ConfigError):
        t1_envelope_study(cfg, u0, u0, doubling_params(), [0.7, 1.0], 2.0, 2)


def test_t3_study_without_noise():
    cfg = make_config(sigma="zero", n_steps=30)
    u0, v0 = initial_field("bump:1", cfg.grid), initial_field("bump:0.5", cfg.grid)
    fit = t3_epsilon_study(cfg, u0, v0, doubling_params(), [0.02, 0.04, 0.08], 1, max_workers=1)
    assert list(fit.table["eps"]) == [0.02, 0.04, 0.08]
    assert np.isfinite(fit.table["T3"]).all()
    assert fit.theory is None and not fit.within()


def test_t2_trend_has_one_row_per_r0():
    cfg = make_config(sigma="sin:0.5", n_steps=30)
    u0, v0 = initial_field("bump:1", cfg.grid), initial_field("bump:0.5", cfg.grid)
    table = t2_trend_study(cfg, u0, v0, doubling_params(), [0.04, 0.02], 2, max_workers=1)
    assert list(table["r0"]) == [0.04, 0.02]
    assert np.isfinite(table["T2"]).all()
    assert (table["ci_lo"] <= table["ci_hi"]).all()


def test_kato_with_identical_data_is_zero():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    result = kato_check(cfg, u0, u0, Bump(radius=3.0), 0.1, 4, max_workers=1)
    assert result.lhs == 0.0 and result.rhs == 0.0
    assert result.passed


def test_kato_for_riemann_data():
    cfg = make_config(sigma="zero", eps=0.05)
    u0, v0 = initial_field("riemann:1:0", cfg.grid), initial_field("riemann:0.5:0", cfg.grid)
    result = kato_check(cfg, u0, v0, Bump(radius=3.0), 0.2, 1, max_workers=1)
    assert result.lhs > 0
    assert result.passed
    assert set(result.terms) == {"initial", "flux", "viscous"}


def test_kato_needs_a_step_time():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    with pytest.raises(ConfigError):
        kato_check(cfg, u0, u0, Bump(), 0.105, 2)


def test_contraction_of_equal_data_is_zero():
    cfg = make_config()
    u0 = initial_field("bump:1", cfg.grid)
    table = l1_contraction_curve(cfg, u0, u0, 4, snapshots=5, max_workers=1)
    assert not table[["weighted", "flat", "adjusted"]].to_numpy().any()


def test_deterministic_contraction_has_no_violations():
    cfg = make_config(sigma="zero", n_steps=40)
    u0, v0 = initial_field("bump:1", cfg.grid), initial_field("step:0.5", cfg.grid)
    table = l1_contraction_curve(cfg, u0, v0, 1, snapshots=8, max_workers=1)
    assert contraction_violations(table, "flat") == 0
    assert contraction_violations(table, "adjusted") == 0
    assert (table["adjusted"] <= table["weighted"]).all()


def test_noisy_contraction_has_no_violations():
    cfg = make_config(sigma="sin:0.5", n_steps=40)
    u0, v0 = initial_field("bump:1", cfg.grid), initial_field("bump:0.5:1", cfg.grid)
    table = l1_contraction_curve(cfg, u0, v0, 20, snapshots=8, max_workers=2, chunk_size=5)
    assert contraction_violations(table) == 0


def test_fractional_bv_of_constant_is_zero():
    cfg = make_config()
    table = fractional_bv_modulus(cfg, initial_field("const:0.7", cfg.grid), 2, [0.7, 1.0], snapshots=3, max_workers=1)
    assert len(table) == 4 * 2
    np.testing.assert_allclose(table["modulus"], 0.0, atol=1e-10)


def test_fractional_bv_rejects_short_radius():
    cfg = make_config()
    with pytest.raises(ValueError):
        fractional_bv_modulus(cfg, initial_field("step:1", cfg.grid), 2, [0.1])


def test_fractional_bv_excess_is_bounded_for_x_independent_noise():
    cfg = make_config(sigma="sin:0.5", n_steps=30)
    table = fractional_bv_modulus(cfg, initial_field("step:1", cfg.grid), 8, [0.7, 1.0, 1.5], snapshots=3, max_workers=1)
    fit = fractional_bv_excess(cfg, table)
    assert list(fit.table["r"]) == [0.7, 1.0, 1.5]
    assert (fit.table["excess"] <= 3 * fit.table["se"] + 0.01 * fit.table["initial"]).all()
    # the step has modulus of order r from the start
    assert (np.diff(fit.table["initial"]) > 0).all()


def test_fractional_bv_slope_uses_only_excess_above_noise():
    cfg = make_config(sigma="modulated:0.5")
    r = np.array([0.2, 0.4, 0.8, 1.6])
    final = np.array([1e-4, 0.04, 0.08, 0.16])
    table = pd.DataFrame(
        {
            "t": [0.0] * 4 + [0.2] * 4,
            "r": np.concatenate([r, r]),
            "modulus": np.concatenate([np.zeros(4), final]),
            "se": np.concatenate([np.zeros(4), np.full(4, 1e-3)]),
        }
    )
    fit = fractional_bv_excess(cfg, table)
    assert fit.table["significant"].tolist() == [False, True, True, True]
    assert fit.slope == pytest.approx(1.0)
    assert fit.one_sided


def test_single_viscosity_has_no_pairs():
    cfg = make_config()
    table = epsilon_convergence_study(cfg, [0.05], initial_field("bump:1", cfg.grid), 2)
    assert table.empty
    assert list(table.columns) == ["eps_i", "eps_j", "distance", "se", "ci_lo", "ci_hi"]


def test_viscous_solutions_form_a_cauchy_sequence():
    cfg = make_config(n_steps=30)
    table = epsilon_convergence_study(cfg, [0.08, 0.04, 0.02], initial_field("bump:1", cfg.grid), 4, max_workers=1)
    assert len(table) == 3
    steps = consecutive_distances(table)
    assert list(steps["eps_i"]) == [0.08, 0.04]
    assert steps["distance"].iloc[1] < steps["distance"].iloc[0]


def test_distance_to_inviscid_reference_is_linear_in_eps():
    cfg = make_config(flux="linear:0.5", sigma="additive:0.5:0.5", n_steps=30)
    fit = epsilon_reference_distance(cfg, [0.04, 0.02, 0.01], initial_field("bump:1", cfg.grid), 2, max_workers=1)
    assert fit.within(0.3)
    assert fit.r2 > 0.95


def test_inviscid_reference_needs_linear_flux():
    cfg = make_config(flux="burgers:1", sigma="additive:0.5")
    with pytest.raises(ConfigError):
        epsilon_reference_distance(cfg, [0.02, 0.01], initial_field("bump:1", cfg.grid), 2)
