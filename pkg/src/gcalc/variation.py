"""Tangent processes of the solution flow and their difference-quotient checks.

The first variation in the initial condition solves the linearised equation

    Y_{k+1} = Y_k + b_x(t_k, X_k) Y_k dt + sigma_x(t_k, X_k) Y_k dB_k
                  + h_x(t_k, X_k) Y_k dQV_k,        Y_0 = 1,

on the same grid, the same scheme and the same realized paths as the base
solution. The second variation adds the quadratic source terms
``b_xx Y^2`` (and so on) with P_0 = 0. The parameter variants carry the
inhomogeneous ``b_a`` terms, the doubled cross terms ``2 b_xa Y`` and the
pure ``b_aa`` terms, with initial values x'(alpha) and x''(alpha).

Discretising the tangent equations with the very same scheme is what makes
the checks here sharp: the difference quotient of the discrete flow
converges to the discrete tangent as the bump h shrinks at fixed dt, and
for coefficients affine in x the two agree up to rounding for every h.
:func:`convergence_study` measures the worst-case mean of
``sup_k |quotient - tangent|^p`` along a ladder of bumps and fits the
log-log slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import Expr, differentiate, is_zero
from .expr import evaluate as eval_expr
from .scenario import GPath, TimeGrid, generate_drivers, realize_path
from .sde import CoefficientSet, SdePath, _check_state, euler_solve

__all__ = [
    "TangentPath",
    "SecondTangentPath",
    "ConvergenceReport",
    "first_variation_x",
    "second_variation_x",
    "first_variation_alpha",
    "second_variation_alpha",
    "difference_quotient",
    "convergence_study",
    "fit_loglog_slope",
    "tangent_time_modulus",
    "alpha_continuity_ratio",
    "tangent_alpha_continuity_ratio",
]

SLOPE_FIT_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class TangentPath:
    """First-variation samples; same layout as the base solution."""

    Y: np.ndarray


@dataclass(frozen=True, eq=False)
class SecondTangentPath:
    """Second-variation samples."""

    P: np.ndarray


@dataclass(frozen=True)
class ConvergenceReport:
    """A (bump, error) ladder with its fitted log-log slope.

    ``fitted_slope`` is NaN when fewer than two ladder points exceed the
    rounding floor, which is the expected outcome for exact identities.
    ``fit_points`` says how many points entered the fit.
    """

    ladder: tuple[tuple[float, float], ...]
    fitted_slope: float
    p_order: float
    fit_points: int


def fit_loglog_slope(
    hs, errors, floor: float = SLOPE_FIT_FLOOR
) -> tuple[float, int]:
    """Least-squares slope of log(error) against log(h) above a rounding floor."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > floor
    if keep.sum() < 2:
        return float("nan"), int(keep.sum())
    slope = np.polyfit(np.log(np.abs(hs[keep])), np.log(errors[keep]), 1)[0]
    return float(slope), int(keep.sum())


def _tangent_sweep(
    coeffs: CoefficientSet,
    linear: tuple[Expr, Expr, Expr],
    sources: tuple[Expr, Expr, Expr] | None,
    xpath: SdePath,
    gpath: GPath,
    grid: TimeGrid,
    y0: float,
) -> np.ndarray:
    """Euler recursion shared by every tangent equation.

    Source terms that folded to the zero constant are skipped entirely, so a
    parameter tangent with vanishing inhomogeneities runs the exact same
    float operations as the initial-condition tangent.
    """
    n = grid.n_steps
    if gpath.B.shape[-1] != n + 1 or xpath.X.shape[-1] != n + 1:
        raise ValueError("paths are inconsistent with the time grid")
    lb, ls, lh = linear
    dt = grid.dt
    Y = np.empty(xpath.X.shape)
    Y[..., 0] = y0
    src = None
    if sources is not None:
        src = [None if is_zero(e) else e for e in sources]
        if all(e is None for e in src):
            src = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t_k = grid.time(k)
            xk = xpath.X[..., k]
            yk = Y[..., k]
            dB = gpath.B[..., k + 1] - gpath.B[..., k]
            dQ = gpath.QV[..., k + 1] - gpath.QV[..., k]
            yk1 = (
                yk
                + coeffs.value(lb, t_k, xk) * yk * dt
                + coeffs.value(ls, t_k, xk) * yk * dB
                + coeffs.value(lh, t_k, xk) * yk * dQ
            )
            if src is not None:
                sb, ss, sh = src
                if sb is not None:
                    yk1 = yk1 + coeffs.value(sb, t_k, xk) * dt
                if ss is not None:
                    yk1 = yk1 + coeffs.value(ss, t_k, xk) * dB
                if sh is not None:
                    yk1 = yk1 + coeffs.value(sh, t_k, xk) * dQ
            _check_state(np.asarray(yk1), k + 1)
            Y[..., k + 1] = yk1
    return Y


def first_variation_x(
    coeffs: CoefficientSet, xpath: SdePath, gpath: GPath, grid: TimeGrid
) -> TangentPath:
    """Sensitivity of the solution to its initial condition, Y_0 = 1."""
    Y = _tangent_sweep(
        coeffs, (coeffs.b_x, coeffs.sigma_x, coeffs.h_x), None, xpath, gpath, grid, 1.0
    )
    return TangentPath(Y)


def second_variation_x(
    coeffs: CoefficientSet,
    xpath: SdePath,
    ypath: TangentPath,
    gpath: GPath,
    grid: TimeGrid,
) -> SecondTangentPath:
    """Second derivative of the flow in x: quadratic sources, P_0 = 0."""
    n = grid.n_steps
    dt = grid.dt
    P = np.empty(xpath.X.shape)
    P[..., 0] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t_k = grid.time(k)
            xk = xpath.X[..., k]
            yk2 = ypath.Y[..., k] ** 2
            pk = P[..., k]
            dB = gpath.B[..., k + 1] - gpath.B[..., k]
            dQ = gpath.QV[..., k + 1] - gpath.QV[..., k]
            pk1 = (
                pk
                + (coeffs.value(coeffs.b_xx, t_k, xk) * yk2
                   + coeffs.value(coeffs.b_x, t_k, xk) * pk) * dt
                + (coeffs.value(coeffs.sigma_xx, t_k, xk) * yk2
                   + coeffs.value(coeffs.sigma_x, t_k, xk) * pk) * dB
                + (coeffs.value(coeffs.h_xx, t_k, xk) * yk2
                   + coeffs.value(coeffs.h_x, t_k, xk) * pk) * dQ
            )
            _check_state(np.asarray(pk1), k + 1)
            P[..., k + 1] = pk1
    return SecondTangentPath(P)


def _alpha_value(coeffs: CoefficientSet) -> float:
    if coeffs.alpha is None:
        raise ValueError("coefficient set needs an alpha value for parameter variations")
    return coeffs.alpha


def _initial_values(x_of_alpha: Expr, alpha: float) -> tuple[float, float, float]:
    x0 = float(eval_expr(x_of_alpha, 0.0, 0.0, alpha))
    dx = differentiate(x_of_alpha, "a")
    y0 = float(eval_expr(dx, 0.0, 0.0, alpha))
    p0 = float(eval_expr(differentiate(dx, "a"), 0.0, 0.0, alpha))
    return x0, y0, p0


def first_variation_alpha(
    coeffs: CoefficientSet, x_of_alpha: Expr, gpath: GPath, grid: TimeGrid
) -> TangentPath:
    """Sensitivity to the parameter: linear terms plus inhomogeneous a-terms.

    Solves the base path from x(alpha) first. With x(alpha) = a and
    parameter-free coefficients this reproduces :func:`first_variation_x`
    bit for bit on the same drivers.
    """
    alpha = _alpha_value(coeffs)
    x0, y0, _ = _initial_values(x_of_alpha, alpha)
    xpath = euler_solve(coeffs, x0, gpath, grid)
    Y = _tangent_sweep(
        coeffs,
        (coeffs.b_x, coeffs.sigma_x, coeffs.h_x),
        (coeffs.b_a, coeffs.sigma_a, coeffs.h_a),
        xpath,
        gpath,
        grid,
        y0,
    )
    return TangentPath(Y)


def second_variation_alpha(
    coeffs: CoefficientSet, x_of_alpha: Expr, gpath: GPath, grid: TimeGrid
) -> SecondTangentPath:
    """Second parameter derivative: all twelve integral terms, P_0 = x''(alpha).

    Per integrator (dt, dB, dQV) the integrand stacks the quadratic term
    (for example ``b_xx Y^2``), the linear term ``b_x P``, the doubled cross
    term ``2 b_xa Y`` and the pure parameter term ``b_aa``.
    """
    alpha = _alpha_value(coeffs)
    x0, y0, p0 = _initial_values(x_of_alpha, alpha)
    xpath = euler_solve(coeffs, x0, gpath, grid)
    Y = _tangent_sweep(
        coeffs,
        (coeffs.b_x, coeffs.sigma_x, coeffs.h_x),
        (coeffs.b_a, coeffs.sigma_a, coeffs.h_a),
        xpath,
        gpath,
        grid,
        y0,
    )
    n = grid.n_steps
    dt = grid.dt
    P = np.empty(xpath.X.shape)
    P[..., 0] = p0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            t_k = grid.time(k)
            xk = xpath.X[..., k]
            yk = Y[..., k]
            yk2 = yk ** 2
            pk = P[..., k]
            dB = gpath.B[..., k + 1] - gpath.B[..., k]
            dQ = gpath.QV[..., k + 1] - gpath.QV[..., k]
            v = coeffs.value
            pk1 = (
                pk
                + (v(coeffs.b_xx, t_k, xk) * yk2 + v(coeffs.b_x, t_k, xk) * pk
                   + 2.0 * v(coeffs.b_xa, t_k, xk) * yk + v(coeffs.b_aa, t_k, xk)) * dt
                + (v(coeffs.sigma_xx, t_k, xk) * yk2 + v(coeffs.sigma_x, t_k, xk) * pk
                   + 2.0 * v(coeffs.sigma_xa, t_k, xk) * yk + v(coeffs.sigma_aa, t_k, xk)) * dB
                + (v(coeffs.h_xx, t_k, xk) * yk2 + v(coeffs.h_x, t_k, xk) * pk
                   + 2.0 * v(coeffs.h_xa, t_k, xk) * yk + v(coeffs.h_aa, t_k, xk)) * dQ
            )
            _check_state(np.asarray(pk1), k + 1)
            P[..., k + 1] = pk1
    return SecondTangentPath(P)


def difference_quotient(
    coeffs: CoefficientSet,
    x0: float,
    h: float,
    gpath: GPath,
    grid: TimeGrid,
    order: int = 1,
) -> np.ndarray:
    """Forward difference quotient of the flow (order 1) or the tangent (order 2).

    Order 1 returns (X^{x0+h} - X^{x0}) / h on the shared path; order 2
    differences the first variations the same way.
    """
    if h == 0.0:
        raise ValueError("h must be nonzero")
    if order == 1:
        bumped = euler_solve(coeffs, x0 + h, gpath, grid)
        base = euler_solve(coeffs, x0, gpath, grid)
        return (bumped.X - base.X) / h
    if order == 2:
        base = euler_solve(coeffs, x0, gpath, grid)
        bumped = euler_solve(coeffs, x0 + h, gpath, grid)
        y_base = first_variation_x(coeffs, base, gpath, grid)
        y_bumped = first_variation_x(coeffs, bumped, gpath, grid)
        return (y_bumped.Y - y_base.Y) / h
    raise ValueError("order must be 1 or 2")


def _sup_power_error(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    return np.max(np.abs(a - b), axis=-1) ** p


def convergence_study(
    coeffs: CoefficientSet,
    h_ladder,
    p: float,
    family,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    order: int = 1,
    variable: str = "x",
    x0: float | None = None,
    x_of_alpha: Expr | None = None,
) -> ConvergenceReport:
    """Worst-case error of quotient against tangent along a bump ladder.

    For every bump h the error is the sublinear (max of per-control means)
    estimate of ``sup_k |Z^h_k - Y_k|^p`` for order 1 or
    ``sup_k |Q^h_k - P_k|^p`` for order 2, all controls and bumps sharing
    one driver set. Errors are fitted on log-log axes; monotone decay is
    expected for smooth coefficients but reported, not enforced.
    """
    hs = [float(h) for h in h_ladder]
    if not hs or any(h == 0.0 for h in hs):
        raise ValueError("h_ladder must be nonempty with nonzero entries")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_ladder must be strictly decreasing")
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if variable not in ("x", "alpha"):
        raise ValueError("variable must be 'x' or 'alpha'")
    if variable == "x" and x0 is None:
        raise ValueError("x0 is required for variable='x'")
    if variable == "alpha" and x_of_alpha is None:
        raise ValueError("x_of_alpha is required for variable='alpha'")

    drivers = generate_drivers(grid, seed, n_paths)
    per_control_errors: list[list[tuple[int, float]]] = [[] for _ in hs]

    for control in family:
        gpath = realize_path(drivers, control, grid)
        if variable == "x":
            base = euler_solve(coeffs, x0, gpath, grid)
            y_base = first_variation_x(coeffs, base, gpath, grid)
            if order == 1:
                ref = y_base.Y
            else:
                ref = second_variation_x(coeffs, base, y_base, gpath, grid).P
            for j, h in enumerate(hs):
                bumped = euler_solve(coeffs, x0 + h, gpath, grid)
                if order == 1:
                    quot = (bumped.X - base.X) / h
                else:
                    quot = (first_variation_x(coeffs, bumped, gpath, grid).Y - y_base.Y) / h
                err = float(np.mean(_sup_power_error(quot, ref, p)))
                per_control_errors[j].append((control.id, err))
        else:
            alpha = _alpha_value(coeffs)
            x0_a, _, _ = _initial_values(x_of_alpha, alpha)
            base = euler_solve(coeffs, x0_a, gpath, grid)
            y_base = first_variation_alpha(coeffs, x_of_alpha, gpath, grid)
            if order == 1:
                ref = y_base.Y
            else:
                ref = second_variation_alpha(coeffs, x_of_alpha, gpath, grid).P
            for j, h in enumerate(hs):
                bumped_coeffs = coeffs.with_alpha(alpha + h)
                xh, _, _ = _initial_values(x_of_alpha, alpha + h)
                if order == 1:
                    bumped = euler_solve(bumped_coeffs, xh, gpath, grid)
                    quot = (bumped.X - base.X) / h
                else:
                    y_bumped = first_variation_alpha(bumped_coeffs, x_of_alpha, gpath, grid)
                    quot = (y_bumped.Y - y_base.Y) / h
                err = float(np.mean(_sup_power_error(quot, ref, p)))
                per_control_errors[j].append((control.id, err))

    errors = []
    for j in range(len(hs)):
        best_id, best = per_control_errors[j][0]
        for cid, val in per_control_errors[j][1:]:
            if val > best:
                best, best_id = val, cid
        errors.append(best)
    slope, used = fit_loglog_slope(hs, errors)
    return ConvergenceReport(
        ladder=tuple(zip(hs, errors)),
        fitted_slope=slope,
        p_order=float(p),
        fit_points=used,
    )


def tangent_time_modulus(
    coeffs: CoefficientSet,
    x0: float,
    family,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> float:
    """Fitted constant C in max_k Ehat[|Y_{t_{k+1}} - Y_{t_k}|^2] <= C dt.

    The discrete analog of continuity of the tangent in time; the constant
    is reported, no specific value is asserted.
    """
    drivers = generate_drivers(grid, seed, n_paths)
    worst = np.zeros(grid.n_steps)
    for control in family:
        gpath = realize_path(drivers, control, grid)
        xpath = euler_solve(coeffs, x0, gpath, grid)
        Y = first_variation_x(coeffs, xpath, gpath, grid).Y
        sq = np.diff(Y, axis=-1) ** 2
        mean_k = np.mean(sq, axis=0) if sq.ndim > 1 else sq
        worst = np.maximum(worst, mean_k)
    return float(np.max(worst)) / grid.dt


def alpha_continuity_ratio(
    coeffs: CoefficientSet,
    x_of_alpha: Expr,
    beta: float,
    p: float,
    family,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> float:
    """Worst-case sup_t |X^alpha - X^beta|^p over |alpha - beta|^p on shared paths."""
    alpha = _alpha_value(coeffs)
    if alpha == beta:
        raise ValueError("alpha and beta must differ")
    other = coeffs.with_alpha(beta)
    drivers = generate_drivers(grid, seed, n_paths)
    best = -math.inf
    for control in family:
        gpath = realize_path(drivers, control, grid)
        xa = euler_solve(coeffs, _initial_values(x_of_alpha, alpha)[0], gpath, grid)
        xb = euler_solve(other, _initial_values(x_of_alpha, beta)[0], gpath, grid)
        best = max(best, float(np.mean(_sup_power_error(xa.X, xb.X, p))))
    return best / abs(alpha - beta) ** p


def tangent_alpha_continuity_ratio(
    coeffs: CoefficientSet,
    x_of_alpha: Expr,
    beta: float,
    family,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> float:
    """Same ratio for the parameter tangents Y^alpha and Y^beta (p = 2)."""
    alpha = _alpha_value(coeffs)
    if alpha == beta:
        raise ValueError("alpha and beta must differ")
    other = coeffs.with_alpha(beta)
    drivers = generate_drivers(grid, seed, n_paths)
    best = -math.inf
    for control in family:
        gpath = realize_path(drivers, control, grid)
        ya = first_variation_alpha(coeffs, x_of_alpha, gpath, grid).Y
        yb = first_variation_alpha(other, x_of_alpha, gpath, grid).Y
        best = max(best, float(np.mean(_sup_power_error(ya, yb, 2))))
    return best / abs(alpha - beta) ** 2
