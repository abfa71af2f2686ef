import numpy as np
import pytest

from gcalc.scenario import FamilySpec, TimeGrid, VolatilityBand, control_family
from gcalc.sublinear import (
    NonFiniteValueError,
    axiom_report,
    estimate,
    estimate_many,
)

BAND = VolatilityBand(0.5, 1.0)
GRID = TimeGrid(1.0, 16)
FAMILY = control_family(BAND, GRID, FamilySpec(n_levels=3, n_switch=2, n_random=3))


def _terminal_sq(gp):
    return gp.B[..., -1] ** 2


def _terminal(gp):
    return gp.B[..., -1]


def test_constant_functional_is_preserved():
    est = estimate(lambda gp: np.full(gp.B.shape[0], -3.5), FAMILY, GRID, 100, 1)
    assert est.value == -3.5
    assert est.lower_value == -3.5
    assert all(s.stderr == 0.0 for s in est.per_control)


def test_squared_terminal_matches_heat_closed_forms():
    # worst case sigma_hi^2 T = 1, best case sigma_lo^2 T = 0.25
    est = estimate(_terminal_sq, FAMILY, GRID, 100_000, seed=42)
    se = max(s.stderr for s in est.per_control)
    assert abs(est.value - 1.0) <= 3.0 * se
    assert abs(est.lower_value - 0.25) <= 3.0 * se
    assert est.argmax_control == 2  # the constant sigma_hi control


def test_affine_payoff_upper_equals_lower():
    x0 = 1.7
    est = estimate(lambda gp: x0 + gp.B[..., -1], FAMILY, GRID, 50_000, seed=3)
    se = max(s.stderr for s in est.per_control)
    assert abs(est.value - x0) <= 3.0 * se
    assert abs(est.lower_value - x0) <= 3.0 * se


def test_lower_never_exceeds_value():
    est = estimate(lambda gp: np.sin(gp.B[..., -1]) + 0.3 * gp.B[..., -1] ** 2,
                   FAMILY, GRID, 2000, seed=9)
    assert est.lower_value <= est.value


def test_non_finite_error_names_control_and_path():
    def bad(gp):
        vals = gp.B[..., -1].copy()
        vals[17] = np.inf
        return vals

    with pytest.raises(NonFiniteValueError) as exc:
        estimate(bad, FAMILY, GRID, 64, seed=5)
    assert exc.value.control_id == 0
    assert exc.value.path_index == 17


def test_tie_break_smallest_id():
    est = estimate(lambda gp: np.zeros(gp.B.shape[0]), FAMILY, GRID, 16, seed=1)
    assert est.argmax_control == 0


def test_family_enlargement_never_decreases_value():
    small = FAMILY[:2]
    est_small = estimate(_terminal_sq, small, GRID, 4000, seed=11)
    est_full = estimate(_terminal_sq, FAMILY, GRID, 4000, seed=11)
    assert est_full.value >= est_small.value


def test_degenerate_band_upper_meets_lower():
    fam = control_family(VolatilityBand(0.7, 0.7), GRID, FamilySpec(3, 2, 2))
    est = estimate(_terminal_sq, fam, GRID, 20_000, seed=13)
    se = max(s.stderr for s in est.per_control)
    assert est.value - est.lower_value <= 2.0 * se


def test_estimate_many_shares_drivers_with_estimate():
    ests = estimate_many([_terminal_sq, _terminal], FAMILY, GRID, 3000, seed=21)
    solo = estimate(_terminal_sq, FAMILY, GRID, 3000, seed=21)
    assert ests[0].value == solo.value
    assert ests[0].per_control == solo.per_control


def test_estimate_validation():
    with pytest.raises(ValueError):
        estimate(_terminal, FAMILY, GRID, 1, seed=0)
    with pytest.raises(ValueError):
        estimate(_terminal, [], GRID, 10, seed=0)


def test_determinism():
    a = estimate(_terminal_sq, FAMILY, GRID, 5000, seed=33)
    b = estimate(_terminal_sq, FAMILY, GRID, 5000, seed=33)
    assert a.value == b.value and a.per_control == b.per_control


def test_axioms_scaling_by_zero_gives_zero():
    rep = axiom_report(FAMILY, GRID, 256, 2, _terminal_sq, _terminal, lam=0.0, c=1.0)
    assert rep.positively_homogeneous


def test_axioms_square_vs_linear_all_pass():
    rep = axiom_report(FAMILY, GRID, 1024, 4, _terminal_sq, _terminal, lam=2.0, c=-3.5)
    assert rep.all_pass
    assert not rep.pathwise_dominates  # B^2 >= B fails on paths with B in (0,1)


def test_axioms_constant_is_exact():
    rep = axiom_report(FAMILY, GRID, 300, 6, _terminal_sq, _terminal,
                       lam=1.0, c=0.1234567891234567)
    assert rep.constant_preserving


def test_axioms_monotone_with_genuine_dominance():
    def X(gp):
        return _terminal(gp) + gp.B[..., -1] ** 2

    rep = axiom_report(FAMILY, GRID, 512, 8, X, _terminal, lam=0.5, c=2.0)
    assert rep.pathwise_dominates
    assert rep.monotone and rep.all_pass


def test_axioms_randomised_instances_exact():
    rng = np.random.default_rng(1234)
    for trial in range(5):
        a1, a2, a3 = rng.uniform(-2, 2, size=3)
        lam = float(rng.uniform(0, 3))
        c = float(rng.uniform(-5, 5))

        def Y(gp, a1=a1, a2=a2):
            return a1 * np.sin(gp.B[..., -1]) + a2 * gp.B[..., -1]

        def X(gp, a3=a3):
            return Y(gp) + a3 ** 2 * gp.B[..., -1] ** 2

        rep = axiom_report(FAMILY, GRID, 128, 100 + trial, X, Y, lam, c)
        assert rep.pathwise_dominates
        assert rep.all_pass


def test_axioms_lambda_validation():
    with pytest.raises(ValueError):
        axiom_report(FAMILY, GRID, 64, 0, _terminal, _terminal, lam=-1.0, c=0.0)
