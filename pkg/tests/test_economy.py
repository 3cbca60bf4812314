import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradegap.economy import (
    Exponential,
    Felicity,
    GaussianBump,
    Logistic,
    MarketModel,
    TableFunction,
    asset_price,
    function_from_dict,
    gamma,
    solve_equilibrium,
    validate_model,
    walras_net_trade,
)
from tradegap.errors import DomainError, ModelValidityError
from tradegap.mathkit import NormalLaw, expect_terminal, monte_carlo_expectation

GAMMA_CLOSED = 1 + 2.5 * 0.4 / math.sqrt(1.16)


def test_gamma_constant_endowment():
    m = MarketModel(endowment=TableFunction(xs=(-1.0, 1.0), ys=(1.7, 1.7)))
    assert gamma(m) == pytest.approx(1.7, abs=1e-12)


def test_gamma_default_closed_form(model):
    assert gamma(model) == pytest.approx(GAMMA_CLOSED, abs=1e-10)
    assert gamma(model) == pytest.approx(1.92848, abs=1e-5)


def test_gamma_default_against_monte_carlo(model):
    mc, se = monte_carlo_expectation(model.f, NormalLaw(0, 1.0), 1_000_000, seed=5)
    assert abs(gamma(model) - mc) <= 4 * se


def test_wider_bump_breaks_gamma_bound():
    m = MarketModel(endowment=GaussianBump(width=0.45))
    assert 1 + 2.5 * 0.45 / math.sqrt(1.2025) > 2
    with pytest.raises(ModelValidityError, match="gamma"):
        gamma(m)
    with pytest.raises(ModelValidityError):
        validate_model(m)


@pytest.mark.parametrize("endowment, fragment", [
    (GaussianBump(peak=2.9), "f(0) > 3"),
    (GaussianBump(base=1.2, peak=3.5, width=0.2), "lim f"),
])
def test_validate_names_failed_condition(endowment, fragment):
    with pytest.raises(ModelValidityError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        validate_model(MarketModel(endowment=endowment))


def test_peak_at_aggregate_rejected():
    with pytest.raises((ModelValidityError, DomainError)):
        validate_model(MarketModel(endowment=GaussianBump(peak=4.2, width=0.1)))


def test_equilibrium_unit_gamma():
    m = MarketModel(endowment=TableFunction(xs=(-1.0, 1.0), ys=(1.0, 1.0)))
    eq = solve_equilibrium(m)
    # budget balance a + a = 1 + gamma with unit discount
    assert eq.a == pytest.approx(1.0, abs=1e-9)


def test_equilibrium_default(eq):
    assert eq.a == pytest.approx((1 + GAMMA_CLOSED) / 2, abs=1e-9)
    assert eq.a == pytest.approx(1.46424, abs=1e-5)
    assert 2 - eq.a == pytest.approx(0.536, abs=1e-3)
    assert eq.foc_residual <= 1e-9
    (c10, c1T), (c20, c2T) = eq.consumptions
    assert c10 + c20 == pytest.approx(4.0) and c1T + c2T == pytest.approx(4.0)


@pytest.mark.parametrize("felicity", [Felicity("crra", 2.0), Felicity("crra", 0.5), Felicity("cara", 1.3)])
def test_equilibrium_independent_of_felicity(felicity, eq):
    other = solve_equilibrium(MarketModel(felicity=felicity))
    assert other.a == pytest.approx(eq.a, abs=1e-9)
    assert other.foc_residual <= 1e-9


def test_net_trade(model, eq):
    z = walras_net_trade(model, eq)
    assert z(0.0) == pytest.approx(eq.a - 3.5, abs=1e-12)
    assert z(0.0) == pytest.approx(-2.03576, abs=1e-5)
    root = model.f.invert(eq.a)
    assert z(root) == pytest.approx(0.0, abs=1e-10)
    x = np.linspace(-8, 8, 1001)
    assert np.allclose(z(x) + model.f(x), eq.a)
    assert math.isfinite(expect_terminal(lambda y: z(y) ** 2))


def test_riskless_price_is_one(model):
    assert asset_price(model, 0, 0.3, 1.7) == 1.0
    assert np.all(asset_price(model, 0, 0.9, np.array([-2.0, 5.0])) == 1.0)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.8, 0.999])
def test_exponential_price_closed_form(exp_model, t):
    x0 = np.linspace(-3, 3, 13)
    assert np.allclose(asset_price(exp_model, 1, t, x0), np.exp(x0 + (1 - t) / 2), rtol=1e-10)


def test_logistic_price_at_maturity(model):
    x0 = np.linspace(-4, 4, 9)
    assert np.allclose(asset_price(model, 1, 1.0, x0), model.g(x0))
    assert np.allclose(asset_price(model, 1, 1 - 1e-8, x0), model.g(x0), atol=1e-7)


def test_price_time_outside_horizon(model):
    with pytest.raises(DomainError):
        asset_price(model, 1, 1.5, 0.0)
    with pytest.raises(DomainError):
        asset_price(model, 2, 0.5, 0.0)


@pytest.mark.parametrize("t", [0.25, 0.5, 0.9])
@pytest.mark.parametrize("which", ["logistic", "exponential"])
def test_price_martingale(t, which, model, exp_model):
    m = model if which == "logistic" else exp_model
    s0 = asset_price(m, 1, 0.0, 0.0)
    mean = expect_terminal(lambda x: asset_price(m, 1, t, x), NormalLaw(0.0, t))
    assert abs(mean - s0) <= 2 * m.quadrature.absolute_tolerance


@pytest.mark.parametrize("which", ["logistic", "exponential"])
def test_price_monotone_in_level(which, model, exp_model):
    m = model if which == "logistic" else exp_model
    x0 = np.linspace(-6, 6, 301)
    assert np.all(np.diff(asset_price(m, 1, 0.5, x0)) > 0)


def test_function_shapes_on_grid():
    x = np.linspace(-10, 10, 2001)
    bump = GaussianBump()
    left, right = x < 0, x > 0
    # values saturate to the base in floating point far out; the derivative keeps its sign
    assert np.all(np.diff(bump(x[left])) >= 0) and np.all(np.diff(bump(x[right])) <= 0)
    core = np.abs(x) < 3
    assert np.all(bump.derivative(x[left & core]) > 0) and np.all(bump.derivative(x[right & core]) < 0)
    assert bump.limits() == (1.0, 1.0) and bump(50.0) == pytest.approx(1.0)
    logit = Logistic()
    assert np.all(logit.derivative(x) > 0) and logit.limits() == (0.0, 1.0)
    ex = Exponential()
    y = ex(x)
    assert np.all(np.diff(y) > 0) and np.all(np.diff(y, 2) > 0)
    assert ex.limits() == (0.0, math.inf)
    assert math.isfinite(expect_terminal(lambda v: ex(v) ** 2))


def test_function_round_trip():
    for spec in (GaussianBump(1.0, 3.2, 0.3), Logistic(), Exponential(), TableFunction((0.0, 1.0, 2.0), (1.0, 3.0, 1.0))):
        assert function_from_dict(spec.to_dict()) == spec
    m = MarketModel(asset=Exponential(), felicity=Felicity("crra", 3.0))
    assert MarketModel.from_dict(m.to_dict()) == m


def test_unknown_family():
    with pytest.raises(DomainError, match="family"):
        function_from_dict({"family": "spline"})


@settings(max_examples=30, deadline=None)
@given(st.floats(3.05, 3.9), st.floats(0.05, 0.4))
def test_equilibrium_budget_identity(peak, width):
    m = MarketModel(endowment=GaussianBump(1.0, peak, width))
    try:
        g = gamma(m)
    except ModelValidityError:
        return
    eq = solve_equilibrium(m)
    assert eq.a == pytest.approx((1 + g) / 2, abs=1e-9)
    assert eq.a < 2
