import numpy as np
import pytest

from entropy_lab.ito import (
    ITO_CASES,
    ITO_TERMS,
    ToyProcess,
    growth_violations,
    ito_case,
    run_case,
    skorohod_pairing,
    verify_anticipating_ito,
    weak_order_study,
)
from entropy_lab.noise import NoiseSpace
from entropy_lab.util import ConfigError, RegimeWarning

SPACE = NoiseSpace.uniform(4)


def test_euler_march_without_noise_follows_the_drift():
    proc = ToyProcess(1.0, (0.5, 0.5), lambda s, x: 1.0, lambda s, x: -x)
    X = proc.march(np.zeros((3, 10, 2)), 0.1)
    assert X.shape == (3, 11)
    np.testing.assert_allclose(X[:, -1], 0.9**10)


def test_march_checks_the_node_count():
    proc = ToyProcess(0.0, (1.0,), lambda s, x: 1.0, lambda s, x: 0.0)
    with pytest.raises(ConfigError):
        proc.march(np.zeros((1, 5, 3)), 0.1)


def test_unknown_case():
    with pytest.raises(ConfigError, match="Available"):
        ito_case("cube", SPACE, 0.1, 10)


def test_bounded_f_has_no_growth_violations():
    case = ito_case("anticipating", SPACE, 0.1, 10)
    assert growth_violations(case.F) == []


def test_square_is_flagged_and_reduces_to_classical_ito():
    case = ito_case("square", SPACE, 0.02, 25)
    with pytest.warns(RegimeWarning):
        result = verify_anticipating_ito(case.proc, case.F, case.V, SPACE, 0.02, 25, 4000, oracle=case.oracle, max_workers=2, chunk_size=1000)
    assert {"F", "d1F"} <= set(result.violations)
    assert result.terms["cross"] == 0.0
    assert set(result.terms) == set(ITO_TERMS)
    assert result.oracle_consistent
    assert result.passed


@pytest.mark.parametrize("name", ITO_CASES)
def test_builtin_cases_pass(name):
    result, pairing = run_case(name, SPACE, 0.02, 0.5, 4000, seed=3, max_workers=2, chunk_size=1000)
    assert result.passed
    assert result.oracle_consistent
    assert pairing.passed


def test_identity_residual_is_an_ito_sum():
    case = ito_case("identity", SPACE, 0.02, 25)
    result = verify_anticipating_ito(case.proc, case.F, case.V, SPACE, 0.02, 25, 2000, max_workers=1, chunk_size=500)
    assert result.terms["quadratic"] == 0.0 and result.terms["cross"] == 0.0
    assert abs(result.residual.mean) <= 3 * result.residual.se


def test_product_matches_its_gaussian_moment():
    case = ito_case("product", SPACE, 0.02, 25)
    result = verify_anticipating_ito(case.proc, case.F, case.V, SPACE, 0.02, 25, 4000, oracle=case.oracle, max_workers=1, chunk_size=1000)
    assert case.oracle > 0
    assert abs(result.terms["cross"] - case.oracle) <= 4 * result.lhs.se
    assert result.oracle_consistent


def test_pairing_with_the_own_parameter():
    case = ito_case("anticipating", SPACE, 0.02, 25)
    pairing = skorohod_pairing(case.proc, case.F, case.V, case.V, SPACE, 0.02, 25, 4000, max_workers=1, chunk_size=1000)
    assert pairing.passed


def test_weak_bias_halves_with_the_step():
    fit = weak_order_study("square", SPACE, [0.1, 0.05, 0.025], 1.0, 40000, seed=5, max_workers=2, chunk_size=5000)
    assert list(fit.table["dt"]) == [0.025, 0.05, 0.1]
    assert (fit.table["bias"] > 0).all()
    assert fit.within(0.3)


def test_weak_order_needs_nested_steps():
    with pytest.raises(ConfigError):
        weak_order_study("square", SPACE, [0.1, 0.03], 1.0, 10)
