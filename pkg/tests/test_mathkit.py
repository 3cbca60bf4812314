import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from tradegap.errors import BracketError, DomainError, QuadratureError
from tradegap.mathkit import (
    NormalLaw,
    QuadratureConfig,
    brent_root,
    conditional_expectation,
    expect_on_interval,
    expect_terminal,
    generate_paths,
    monte_carlo_expectation,
    normal_cdf,
    normal_pdf,
    tail_expectation,
)


def test_normal_law_rejects_nonpositive_variance():
    with pytest.raises(DomainError):
        NormalLaw(0.0, 0.0)
    with pytest.raises(DomainError):
        NormalLaw(0.0, -1.0)


@pytest.mark.parametrize("kwargs", [{"node_count": 8}, {"truncation_width": 5.0}, {"absolute_tolerance": 0.0}])
def test_quadrature_config_bounds(kwargs):
    with pytest.raises(DomainError):
        QuadratureConfig(**kwargs)


def test_cdf_symmetry_and_limits():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(np.inf) == 1.0
    assert normal_cdf(-np.inf) == 0.0


def test_cdf_matches_integrated_pdf():
    # oracle: adaptive integration of the density
    oracle, _ = integrate.quad(lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi), -np.inf, 0.27782, epsabs=1e-14)
    assert normal_cdf(0.27782) == pytest.approx(oracle, abs=1e-12)
    assert normal_cdf(0.27782) == pytest.approx(0.60942, abs=1e-5)


@given(st.floats(-8, 8), st.floats(-8, 8))
def test_cdf_monotone(a, b):
    lo, hi = sorted((a, b))
    assert normal_cdf(lo) <= normal_cdf(hi)


def test_pdf_against_scipy():
    x = np.linspace(-5, 5, 11)
    law = NormalLaw(0.3, 2.0)
    assert np.allclose(normal_pdf(x, law), stats.norm.pdf(x, 0.3, math.sqrt(2.0)), atol=1e-15)


def test_expect_terminal_basic_moments():
    assert expect_terminal(lambda x: np.ones_like(x), NormalLaw(1.3, 0.7)) == pytest.approx(1.0, abs=1e-12)
    assert expect_terminal(lambda x: x) == pytest.approx(0.0, abs=1e-12)
    assert expect_terminal(np.exp) == pytest.approx(math.exp(0.5), abs=1e-9)
    assert expect_terminal(np.exp) == pytest.approx(1.64872, abs=1e-5)


def test_expect_terminal_names_bad_node():
    with pytest.raises(QuadratureError, match="node"):
        expect_terminal(lambda x: np.where(x > 3, np.nan, 1.0))


def test_conditional_expectation_constant_and_martingale():
    x0 = np.linspace(-3, 3, 7)
    assert np.allclose(conditional_expectation(lambda x: 2.5 + 0 * x, 0.4, x0, 1.0), 2.5, atol=1e-12)
    assert np.allclose(conditional_expectation(lambda x: x, 0.4, x0, 1.0), x0, atol=1e-12)


def test_conditional_expectation_needs_t_before_T():
    with pytest.raises(DomainError):
        conditional_expectation(np.exp, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        conditional_expectation(np.exp, -0.1, 0.0, 1.0)


def test_conditional_expectation_of_bump_near_horizon(model):
    # Gaussian convolution in closed form: 1 + 2.5 * w / sqrt(w^2 + (T - t))
    value = conditional_expectation(model.f, 0.99, 0.0, 1.0)
    assert value == pytest.approx(1 + 2.5 * 0.4 / math.sqrt(0.17), abs=1e-10)
    mc, se = monte_carlo_expectation(model.f, NormalLaw(0.0, 0.01), 1_000_000, seed=11)
    assert abs(value - mc) <= 4 * se
    # with variance T - t the value sits 0.075 below f(0); within 0.05 only after t ~ 0.9934
    assert 3.5 - value == pytest.approx(0.0746, abs=1e-4)
    assert abs(conditional_expectation(model.f, 0.995, 0.0, 1.0) - 3.5) < 0.05


def test_conditional_expectation_agrees_with_adaptive_far_from_bump(model):
    x0 = np.linspace(-7, 7, 29)
    fast = conditional_expectation(model.f, 0.3, x0, 1.0)
    slow = [integrate.quad(lambda y, m=m: float(model.f(y)) * stats.norm.pdf(y, m, math.sqrt(0.7)),
                           m - 8 * math.sqrt(0.7), m + 8 * math.sqrt(0.7), points=[0.0], epsabs=1e-13)[0] for m in x0]
    assert np.allclose(fast, slow, atol=1e-10)


@pytest.mark.parametrize("t", [0.25, 0.5, 0.9])
def test_tower_property(model, t):
    direct = expect_terminal(model.f, NormalLaw(0, 1.0))
    nested = expect_terminal(lambda x: conditional_expectation(model.f, t, x, 1.0), NormalLaw(0, t))
    assert abs(direct - nested) <= 2 * model.quadrature.absolute_tolerance


def test_conditional_expectation_increasing_for_increasing_payoff(model):
    x0 = np.linspace(-6, 6, 241)
    values = conditional_expectation(model.g, 0.5, x0, 1.0)
    assert np.all(np.diff(values) > 0)


def test_expect_on_interval_mass():
    law = NormalLaw(0.2, 0.5)
    got = expect_on_interval(lambda x: np.ones_like(x), law, -0.3, 0.9)
    assert got == pytest.approx(stats.norm.cdf(0.9, 0.2, math.sqrt(0.5)) - stats.norm.cdf(-0.3, 0.2, math.sqrt(0.5)), abs=1e-13)


def test_tail_expectation_lognormal():
    # E[e^X | X >= m] for X ~ N(0, s^2) is e^{s^2/2} * Q((m - s^2)/s) / Q(m/s)
    s2, m = 0.5, 1.3
    s = math.sqrt(s2)
    want = math.exp(s2 / 2) * stats.norm.sf((m - s2) / s) / stats.norm.sf(m / s)
    assert tail_expectation(np.exp, NormalLaw(0, s2), m) == pytest.approx(want, rel=1e-10)
    want_lo = math.exp(s2 / 2) * stats.norm.cdf((m - s2) / s) / stats.norm.cdf(m / s)
    assert tail_expectation(np.exp, NormalLaw(0, s2), m, "lower") == pytest.approx(want_lo, rel=1e-10)


def test_brent_examples():
    assert brent_root(lambda x: x - 1, 0, 2) == pytest.approx(1.0, abs=1e-12)
    assert brent_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), abs=1e-12)
    with pytest.raises(BracketError):
        brent_root(lambda x: x * x + 1, -1, 1)


def test_brent_inverts_bump_at_gap_level(model, eq):
    level = eq.a + 1 + 0.5
    root = brent_root(lambda x: float(model.f(x)) - level, 0.0, 3.0)
    # by hand: 1 + 2.5 exp(-x^2 / 0.32) = level
    assert root == pytest.approx(math.sqrt(-0.32 * math.log((level - 1) / 2.5)), abs=1e-12)
    assert root == pytest.approx(0.2778, abs=1e-4)


def test_single_path_starts_at_zero():
    ens = generate_paths(1.0, [0.0, 1.0], 1, seed=0)
    assert ens.values.shape == (1, 2)
    assert ens.values[0, 0] == 0.0


def test_paths_reproducible_and_seed_sensitive():
    grid = np.linspace(0, 1, 9)
    a = generate_paths(1.0, grid, 5000, seed=42)
    b = generate_paths(1.0, grid, 5000, seed=42)
    c = generate_paths(1.0, grid, 5000, seed=43)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_paths_block_layout_is_prefix_stable():
    grid = np.linspace(0, 1, 5)
    small = generate_paths(1.0, grid, 100, seed=7)
    large = generate_paths(1.0, grid, 9000, seed=7)
    assert np.array_equal(small.values, large.values[:100])


def test_terminal_moments():
    ens = generate_paths(1.0, [0.0, 0.5, 1.0], 100_000, seed=3)
    x = ens.at(1.0)
    assert abs(x.mean()) <= 4 * math.sqrt(1.0 / 100_000)
    assert x.var(ddof=1) == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("grid", [[0.1, 1.0], [0.0, 0.5], [0.0, 0.6, 0.4, 1.0], [[0.0, 1.0]]])
def test_malformed_grid(grid):
    with pytest.raises(DomainError):
        generate_paths(1.0, grid, 10, seed=0)


def test_path_lookup_off_grid():
    ens = generate_paths(1.0, [0.0, 0.5, 1.0], 3, seed=0)
    with pytest.raises(DomainError):
        ens.at(0.3)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 0.95))
def test_quadrature_polynomial_exact(x0, t):
    # E[(x0 + Z)^4] for Z ~ N(0, s) is x0^4 + 6 x0^2 s + 3 s^2
    s = 1.0 - t
    got = conditional_expectation(lambda x: x ** 4, t, x0, 1.0)
    assert got == pytest.approx(x0 ** 4 + 6 * x0 ** 2 * s + 3 * s * s, abs=1e-9)
