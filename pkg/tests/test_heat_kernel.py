import warnings

import numpy as np
import pytest
from scipy import special

from entropy_lab import heat_kernel
from entropy_lab.grid import Grid, GridField
from entropy_lab.heat_kernel import (
    HeatPropagator,
    KernelParams,
    alpha_d,
    c_d_constant,
    c_d_cross_check,
    constants_table,
    heat_convolve,
    heat_propagator,
    kappa_1,
    kappa_2,
    verify_young_heat,
)
from entropy_lab.util import ConfigError, RegimeWarning, ResolutionWarning
from entropy_lab.weights import exp_weight, poly_weight

GRID = Grid(256, 10.0)


def bump(grid, center=0.0):
    return GridField(np.exp(-((grid.x - center) ** 2)), grid)


def test_zero_time_is_identity():
    u = bump(GRID)
    assert heat_convolve(u, KernelParams(0.1, 0.0)) is u


def test_mass_is_preserved():
    u = GridField(np.random.default_rng(0).standard_normal(GRID.n_x), GRID)
    out = heat_convolve(u, KernelParams(0.1, 0.5))
    assert out.integral() == pytest.approx(u.integral(), rel=1e-12, abs=1e-12)
    assert out.t == pytest.approx(0.5)


def test_delta_spreads_with_variance_two_eps_t():
    params = KernelParams(0.1, 0.5)
    out = heat_convolve(GridField(GRID.delta(), GRID), params)
    second_moment = GRID.integrate(GRID.x**2 * out.values)
    assert second_moment == pytest.approx(2 * params.eps_t, rel=1e-8)


def test_semigroup_property():
    u = bump(GRID, 1.0)
    a = heat_convolve(heat_convolve(u, KernelParams(0.1, 0.3)), KernelParams(0.1, 0.2))
    b = heat_convolve(u, KernelParams(0.1, 0.5))
    err = np.sqrt(GRID.integrate((a.values - b.values) ** 2))
    assert err <= 1e-10 * np.sqrt(GRID.integrate(b.values**2))


@pytest.mark.parametrize("symbol", ["gaussian", "lattice"])
def test_positivity(symbol):
    u = GridField(np.where(np.abs(GRID.x) < 1, 1.0, 0.0), GRID)
    out = heat_convolve(u, KernelParams(0.2, 1.0), symbol)
    assert out.values.min() >= -1e-14


def test_lattice_kernel_is_positive_when_under_resolved():
    kernel = HeatPropagator(GRID, 1e-5, "lattice").kernel()
    assert kernel.min() >= -1e-12
    assert GRID.integrate(kernel) == pytest.approx(1.0)


def test_small_time_approaches_identity():
    u = bump(GRID)
    eps_t = 1e-4
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        out = heat_convolve(u, KernelParams(eps_t, 1.0))
    assert np.max(np.abs(out.values - u.values)) <= 10 * eps_t


def test_under_resolved_kernel_warns():
    with pytest.warns(ResolutionWarning):
        heat_convolve(bump(GRID), KernelParams(1e-4, 1.0))


def test_propagators_are_shared():
    assert heat_propagator(GRID, 0.01, "lattice") is heat_propagator(GRID, 0.01, "lattice")


def test_unknown_symbol():
    with pytest.raises(ConfigError):
        HeatPropagator(GRID, 0.01, "cubic")


@pytest.mark.parametrize("d", range(5))
def test_c_d_quadratures_agree(d):
    adaptive, mapped, tail = c_d_cross_check(d)
    assert abs(adaptive - mapped) <= 1e-8
    assert tail < 1e-8


def test_mapped_c_0_matches_the_erfc_closed_form():
    # completing the square: c_0 = 5/4 + 11/8 sqrt(pi) e^(1/4) erfc(-1/2)
    exact = 1.25 + 11.0 / 8.0 * np.sqrt(np.pi) * np.exp(0.25) * special.erfc(-0.5)
    assert c_d_constant(0, "mapped") == pytest.approx(exact, abs=1e-10)
    assert c_d_constant(0) == pytest.approx(exact, abs=1e-8)


def test_mapped_quadrature_does_not_depend_on_the_cutoff(monkeypatch):
    mapped = c_d_constant(0, "mapped")
    monkeypatch.setattr(heat_kernel, "C_D_CUTOFF", 3.0)
    c_d_constant.cache_clear()
    try:
        assert c_d_constant(0, "mapped") == mapped
        assert mapped - c_d_constant(0, "adaptive") > 1e-3
    finally:
        c_d_constant.cache_clear()


def test_c_d_integrand_and_kappa_assembly():
    # c_0 = int (1 + z)^2 exp(z - z^2) dz is finite and positive
    assert c_d_constant(0) > 0
    assert alpha_d(1) == pytest.approx(2.0)
    assert alpha_d(2) == pytest.approx(np.pi)
    assert kappa_1(1) == pytest.approx(c_d_constant(0) * 2 / np.sqrt(np.pi))
    assert kappa_2(1) == pytest.approx(c_d_constant(1) * 2 / np.sqrt(np.pi))


def test_constants_table():
    table = constants_table(4)
    assert list(table["d"]) == [0, 1, 2, 3, 4]
    assert (table["quadrature_gap"] <= 1e-8).all()
    assert np.isnan(table.loc[0, "kappa_1"])


def test_young_heat_on_zero_field():
    check = verify_young_heat(GridField(np.zeros(GRID.n_x), GRID), 2, poly_weight(1), KernelParams(0.05, 0.1))
    assert (check.lhs, check.bound) == (0.0, 0.0)


@pytest.mark.parametrize("divergence", [False, True])
@pytest.mark.parametrize("p", [1, 2, 4])
def test_young_heat_on_random_fields(divergence, p):
    rng = np.random.default_rng(p + 10 * divergence)
    grid = Grid(512, 10.0)
    for _ in range(20):
        w = poly_weight(rng.uniform(0.25, 1.0)) if rng.random() < 0.5 else exp_weight(rng.uniform(0.5, 2.0))
        eps_t = rng.uniform(8 * grid.dx**2, 1 / (4 * w.c_phi**2))
        u = GridField(rng.standard_normal(grid.n_x), grid)
        check = verify_young_heat(u, p, w, KernelParams(eps_t, 1.0), divergence=divergence)
        assert check.regime_ok
        assert check.passed, check


def test_young_heat_outside_regime_is_reported():
    u = bump(GRID)
    with pytest.warns(RegimeWarning):
        check = verify_young_heat(u, 2, poly_weight(4), KernelParams(1.0, 1.0))
    assert check.passed is None
    assert check.status == "regime-violated"
