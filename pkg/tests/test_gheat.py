from fractions import Fraction

import numpy as np
import pytest

from gcalc.expr import parse
from gcalc.gheat import (
    SpaceGrid,
    default_domain,
    evaluate,
    g_function,
    solve_gheat,
    within_trust_radius,
)
from gcalc.scenario import VolatilityBand

BAND = VolatilityBand(0.5, 1.0)


@pytest.mark.parametrize(
    "alpha,expected",
    [(0.0, 0.0), (2.0, 1.0), (-2.0, -0.25)],
)
def test_g_function_values(alpha, expected):
    assert g_function(alpha, BAND) == expected


def test_g_function_vectorised():
    out = g_function(np.array([-2.0, 0.0, 2.0]), BAND)
    assert np.array_equal(out, np.array([-0.25, 0.0, 1.0]))


def test_g_function_subadditive_exactly():
    # verified in exact rational arithmetic, where it is a theorem of the
    # two-slope form of the generator
    rng = np.random.default_rng(5)
    hi2 = Fraction(BAND.sigma_hi) ** 2
    lo2 = Fraction(BAND.sigma_lo) ** 2

    def g(a: Fraction) -> Fraction:
        return (hi2 * max(a, 0) - lo2 * max(-a, 0)) / 2

    for _ in range(500):
        a, b = (Fraction(float(v)) for v in rng.uniform(-5, 5, size=2))
        assert g(a) - g(b) <= g(a - b)


def test_space_grid_validation():
    with pytest.raises(ValueError):
        SpaceGrid(1.0, -1.0, 11)
    with pytest.raises(ValueError):
        SpaceGrid(0.0, 1.0, 2)


def test_affine_payoff_is_fixed_point_dyadic_grid():
    # dyadic nodes make the second difference exactly zero, so the affine
    # initial condition never moves
    grid = SpaceGrid(-8.0, 8.0, 257)
    sol = solve_gheat(parse("x"), BAND, grid, 1.0)
    assert np.array_equal(sol.u, grid.nodes())


def test_affine_payoff_generic_grid():
    grid = SpaceGrid(-8.0, 8.0, 301)
    sol = solve_gheat(parse("0.3*x + 1"), BAND, grid, 1.0)
    assert np.allclose(sol.u, 0.3 * grid.nodes() + 1.0, rtol=0, atol=1e-9)


def test_convex_payoff_diffuses_at_upper_volatility():
    grid = SpaceGrid(-8.0, 8.0, 801)
    sol = solve_gheat(parse("x^2"), BAND, grid, 1.0)
    assert abs(evaluate(sol, 0.0) - 1.0) <= 1e-2
    assert abs(evaluate(sol, 1.0) - 2.0) <= 1e-2


def test_concave_payoff_diffuses_at_lower_volatility():
    grid = SpaceGrid(-8.0, 8.0, 801)
    sol = solve_gheat(parse("-(x^2)"), BAND, grid, 1.0)
    assert abs(evaluate(sol, 0.0) + 0.25) <= 1e-2


def test_degenerate_band_reduces_to_classical_heat():
    band = VolatilityBand(0.7, 0.7)
    grid = SpaceGrid(-8.0, 8.0, 801)
    sol = solve_gheat(parse("x^2"), band, grid, 1.0)
    assert abs(evaluate(sol, 0.0) - 0.49) <= 1e-2


def test_constant_payoff_is_exactly_preserved():
    grid = SpaceGrid(-4.0, 4.0, 101)
    sol = solve_gheat(parse("2.7"), BAND, grid, 0.5)
    assert np.all(sol.u == 2.7)


def test_comparison_principle():
    grid = SpaceGrid(-6.0, 6.0, 301)
    low = solve_gheat(parse("sin(x)"), BAND, grid, 0.5)
    high = solve_gheat(parse("sin(x) + 0.5"), BAND, grid, 0.5)
    assert np.all(low.u <= high.u)


def test_translation_equivariance_interior():
    # shift by a whole number of grid cells; discretisation commutes with the
    # shift, only boundary handling differs and it decays into the interior
    grid = SpaceGrid(-9.0, 9.0, 601)
    m = 10
    dx = grid.dx
    base = solve_gheat(parse("sin(x)"), BAND, grid, 0.25)
    shifted = solve_gheat(parse(f"sin(x - {m * dx!r})"), BAND, grid, 0.25)
    mid = slice(150, 451)
    assert np.allclose(shifted.u[mid], base.u[np.arange(150, 451) - m], rtol=0, atol=1e-10)


def test_cfl_bound_and_final_time():
    grid = SpaceGrid(-4.0, 4.0, 101)
    sol = solve_gheat(parse("x^2"), BAND, grid, 0.3)
    assert sol.dt == 0.9 * grid.dx ** 2 / BAND.sigma_hi ** 2
    assert sol.n_time_steps == int(np.ceil(0.3 / sol.dt))


def test_solver_validation():
    grid = SpaceGrid(-4.0, 4.0, 101)
    with pytest.raises(ValueError):
        solve_gheat(parse("x"), BAND, grid, 0.0)
    with pytest.raises(ValueError):
        solve_gheat(parse("x"), BAND, grid, 1.0, safety=1.5)
    with pytest.raises(ValueError):
        solve_gheat(parse("1/x"), BAND, grid, 1.0)  # division by zero on a node


def test_evaluate_nodes_and_midpoints():
    grid = SpaceGrid(0.0, 1.0, 3)
    sol = solve_gheat(parse("x"), BAND, grid, 1e-6)
    assert evaluate(sol, 0.5) == 0.5
    assert evaluate(sol, 0.25) == 0.25  # midpoint of nodes 0 and 0.5
    with pytest.raises(ValueError):
        evaluate(sol, 1.5)


def test_trust_radius():
    grid = SpaceGrid(-9.0, 9.0, 101)
    sol = solve_gheat(parse("x"), BAND, grid, 1.0)
    assert within_trust_radius(sol, 0.0)
    assert not within_trust_radius(sol, 8.0)


def test_default_domain_padding():
    lo, hi = default_domain([-1.0, 1.0], BAND, 1.0)
    assert lo == -9.0 and hi == 9.0
