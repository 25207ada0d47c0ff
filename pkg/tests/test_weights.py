import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropy_lab.grid import Grid, GridField
from entropy_lab.util import ConfigError
from entropy_lab.weights import (
    J,
    J_cdf,
    J_cdf_antiderivative,
    Mollifier,
    Weight,
    WeightKind,
    check_weight_class,
    cutoff,
    exp_weight,
    localized_young_bound,
    modulus_w,
    mollify_weight,
    poly_weight,
    suggest_half_width,
    tail_mass,
    truncate_weight,
    weight_from_key,
    weighted_linf_norm,
    weighted_lp_norm,
)

GRID = Grid(128, 10.0)


@st.composite
def base_weights(draw):
    if draw(st.booleans()):
        return poly_weight(draw(st.floats(0.5, 4.0)))
    return exp_weight(draw(st.floats(0.2, 3.0)))


def test_mollifier_has_unit_mass():
    assert Mollifier(0.3).mass() == pytest.approx(1.0, abs=1e-10)
    assert Mollifier(0.3, shifted=True).mass() == pytest.approx(1.0, abs=1e-10)


def test_mollifier_support():
    m = Mollifier(0.5, shifted=True)
    assert m.support == (0.0, 1.0)
    assert m(np.array([-0.1, 0.0, 1.0, 1.2])).tolist() == [0.0, 0.0, 0.0, 0.0]
    assert m(np.array(0.5)) > 0


def test_bump_cdf_and_antiderivative():
    assert J_cdf(-1.0) == pytest.approx(0.0)
    assert J_cdf(0.0) == pytest.approx(0.5, abs=1e-9)
    assert J_cdf(1.0) == pytest.approx(1.0)
    # G(y) = |y| - G_inf past the support; G is even
    assert J_cdf_antiderivative(2.0) - J_cdf_antiderivative(1.5) == pytest.approx(0.5)
    assert J_cdf_antiderivative(-0.7) == pytest.approx(J_cdf_antiderivative(0.7))


def test_lag_weights_have_unit_discrete_mass():
    dt = 0.01
    w = Mollifier(0.04, shifted=True).lag_weights(dt)
    assert w[0] == 0.0
    assert w.sum() * dt == pytest.approx(1.0)
    assert len(w) == 9


def test_lag_weights_reject_radius_below_step():
    with pytest.raises(ValueError):
        Mollifier(0.005, shifted=True).lag_weights(0.01)


def test_zero_field_has_zero_norm():
    u = GridField(np.zeros(GRID.n_x), GRID)
    assert weighted_lp_norm(u, 2, poly_weight(2)) == 0.0


@pytest.mark.parametrize("p", [0.5, np.inf, np.nan])
def test_lp_norm_rejects_bad_exponent(p):
    u = GridField(np.ones(GRID.n_x), GRID)
    with pytest.raises(ValueError):
        weighted_lp_norm(u, p, poly_weight(2))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_field_rejects_non_finite_values(bad):
    values = np.ones(GRID.n_x)
    values[3] = bad
    with pytest.raises(ValueError, match="non-finite"):
        GridField(values, GRID)
    field = GridField(np.ones(GRID.n_x), GRID)
    with pytest.raises(ValueError, match="non-finite"):
        field.with_values(values)


def test_lp_norm_of_constant_is_weight_mass():
    u = GridField(np.full(GRID.n_x, 3.0), GRID)
    w = poly_weight(2)
    expected = 3.0 * GRID.integrate(w.on_grid(GRID)) ** 0.5
    assert weighted_lp_norm(u, 2, w) == pytest.approx(expected)


def test_linf_norm():
    w = exp_weight(1.0)
    u = GridField(w.on_grid(GRID) * 2.5, GRID)
    assert weighted_linf_norm(u, w) == pytest.approx(2.5)


def test_linf_norm_skips_cells_outside_a_truncated_weight():
    w = truncate_weight(poly_weight(1), 3.0)
    phi = w.on_grid(GRID)
    assert (phi == 0).any()
    u = GridField(np.stack([np.ones(GRID.n_x), 2.0 * np.ones(GRID.n_x)]), GRID)
    norms = weighted_linf_norm(u, w)
    assert np.all(np.isfinite(norms))
    assert norms == pytest.approx([1.0, 2.0] * np.max(1.0 / phi[phi > 0]))


def test_modulus_starts_at_zero_and_grows():
    r = np.linspace(0.0, 5.0, 101)
    values = modulus_w(2, poly_weight(2), r)
    assert values[0] == 0.0
    assert np.all(np.diff(values) >= 0)


@settings(max_examples=200, deadline=None)
@given(
    w=base_weights(),
    p=st.floats(1.0, 6.0),
    x=st.floats(-40.0, 40.0),
    z=st.floats(-8.0, 8.0),
)
def test_weight_root_is_controlled_by_modulus(w, p, x, z):
    lhs = abs(w(x + z) ** (1 / p) - w(x) ** (1 / p))
    rhs = modulus_w(p, w, abs(z)) * w(x) ** (1 / p)
    assert lhs <= rhs * (1 + 1e-9) + 1e-300


@settings(max_examples=50, deadline=None)
@given(
    w=base_weights(),
    p=st.sampled_from([1.0, 2.0, 4.0]),
    width=st.floats(0.3, 2.0),
    seed=st.integers(0, 2**16),
)
def test_localized_young_inequality(w, p, width, seed):
    rng = np.random.default_rng(seed)
    f = GridField(np.exp(-(GRID.x**2) / width**2) * rng.uniform(0.5, 1.5), GRID)
    g = GridField(rng.standard_normal(GRID.n_x), GRID)
    lhs, rhs = localized_young_bound(f, g, p, w)
    assert lhs <= rhs * (1 + 1e-10)


@pytest.mark.parametrize(
    "w, c_phi",
    [(poly_weight(3), 6.0), (exp_weight(0.5), 0.5), (mollify_weight(poly_weight(1), 0.2), 2.0)],
)
def test_c_phi(w, c_phi):
    assert w.c_phi == c_phi
    assert w.in_class


def test_truncated_weight_leaves_the_class():
    w = truncate_weight(poly_weight(1), 3.0)
    assert not w.in_class
    assert w(np.array([6.0, 7.5])).tolist() == [0.0, 0.0]
    assert w(np.array(2.0)) == pytest.approx(poly_weight(1)(np.array(2.0)))
    assert w.c_phi > poly_weight(1).c_phi


def test_mollified_weight_is_close_to_base():
    base = poly_weight(1)
    w = mollify_weight(base, 0.05)
    x = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(w(x), base(x), rtol=2e-3)


@pytest.mark.parametrize(
    "key",
    ["poly:2", "exp:0.5", "moll:poly:2:0.1", "trunc:exp:1:4", "moll:trunc:poly:1:3:0.2"],
)
def test_weight_keys(key):
    assert str(weight_from_key(key)) == key


@pytest.mark.parametrize("key", ["poly", "cubic:2", "poly:-1", "trunc:poly:1:0.5", "poly:2:3"])
def test_bad_weight_keys(key):
    with pytest.raises(ConfigError):
        weight_from_key(key)


def test_truncated_weight_needs_base():
    with pytest.raises(ConfigError):
        Weight(WeightKind.TRUNCATED, 3.0)


def test_l1_norm_and_tail_mass():
    w = poly_weight(1)
    assert w.l1_norm == pytest.approx(np.pi, rel=1e-8)
    assert tail_mass(w, 10.0) == pytest.approx(2 * (np.pi / 2 - np.arctan(10.0)), rel=1e-6)
    assert tail_mass(truncate_weight(w, 2.0), 10.0) == 0.0


def test_suggest_half_width():
    L = suggest_half_width(poly_weight(2), ratio=1e-6)
    assert L == pytest.approx(np.sqrt(999.0), rel=1e-6)
    assert suggest_half_width(truncate_weight(poly_weight(2), 3.0)) == 6.0


@pytest.mark.parametrize("key", ["poly:1", "poly:4", "exp:1", "moll:poly:2:0.3"])
def test_weight_class_check_passes(key):
    check = check_weight_class(weight_from_key(key), GRID)
    assert check.positive
    assert check.passed


def test_weight_class_check_flags_vanishing_weight():
    check = check_weight_class(truncate_weight(poly_weight(1), 2.0), GRID)
    assert not check.positive
    assert not check.passed


@pytest.mark.parametrize("key", ["poly:2", "exp:0.7", "trunc:poly:1:3"])
def test_gradient_and_laplacian_match_differences(key):
    w = weight_from_key(key)
    x = np.linspace(-7.0, 7.0, 57)
    h = 1e-4
    np.testing.assert_allclose(
        w.gradient(x), (w(x + h) - w(x - h)) / (2 * h), atol=1e-6
    )
    np.testing.assert_allclose(
        w.laplacian(x), (w(x + h) - 2 * w(x) + w(x - h)) / h**2, atol=1e-4
    )


def test_cutoff_plateau():
    assert cutoff(np.array([0.0, 0.5, 1.0])).tolist() == [1.0, 1.0, 1.0]
    assert cutoff(np.array(2.5)) == 0.0
    assert J(np.array(1.5)) == 0.0


def test_support_radius():
    assert poly_weight(1).support_radius == np.inf
    assert truncate_weight(poly_weight(1), 3.0).support_radius == 6.0
    assert mollify_weight(truncate_weight(exp_weight(1), 2.0), 0.1).support_radius == pytest.approx(4.1)
