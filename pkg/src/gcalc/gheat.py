"""Monotone explicit solver for the worst-case heat equation.

The equation is ``du/dt = G(d2u/dx2)`` with the sublinear generator

    G(alpha) = (sigma_hi^2 * max(alpha, 0) - sigma_lo^2 * max(-alpha, 0)) / 2

and initial condition given by a payoff expression in ``x``. Its solution at
``(t, x)`` equals the worst-case expectation of ``payoff(x + B_t)`` for the
uncertain-volatility driver, which makes this solver the independent oracle
for the scenario-supremum Monte Carlo estimator.

The scheme is forward Euler in time on the standard three-point second
difference. With ``dt <= dx^2 / sigma_hi^2`` every node update is a
nondecreasing function of the previous time slice (the generator carries the
one half), so the scheme is monotone and converges to the viscosity
solution. Boundary nodes keep their initial payoff values; results should
only be read well inside the domain, see :func:`within_trust_radius`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import Expr
from .expr import evaluate as eval_expr
from .scenario import VolatilityBand

__all__ = [
    "SpaceGrid",
    "HeatSolution",
    "g_function",
    "solve_gheat",
    "evaluate",
    "within_trust_radius",
    "default_domain",
]


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("need x_min < x_max")
        if self.nx < 3:
            raise ValueError("nx must be at least 3")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    def nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.nx) * self.dx


@dataclass(frozen=True, eq=False)
class HeatSolution:
    """Nodal values at t_final, plus the discretisation actually used."""

    grid: SpaceGrid
    band: VolatilityBand
    t_final: float
    u: np.ndarray
    n_time_steps: int
    dt: float


def g_function(alpha, band: VolatilityBand):
    """Sublinear generator; accepts scalars or arrays."""
    hi2 = band.sigma_hi ** 2
    lo2 = band.sigma_lo ** 2
    return 0.5 * (hi2 * np.maximum(alpha, 0.0) - lo2 * np.maximum(-alpha, 0.0))


def solve_gheat(
    payoff: Expr,
    band: VolatilityBand,
    grid: SpaceGrid,
    t_final: float,
    safety: float = 0.9,
) -> HeatSolution:
    """March the monotone explicit scheme up to t_final.

    ``dt = safety * dx^2 / sigma_hi^2`` is the monotonicity bound scaled by
    ``safety`` in (0, 1]; the number of steps is ``ceil(t_final / dt)`` and
    the last step is shortened to land exactly on ``t_final``.
    """
    if not t_final > 0.0:
        raise ValueError("t_final must be positive")
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    nodes = grid.nodes()
    u = np.asarray(eval_expr(payoff, 0.0, nodes, 0.0), dtype=float)
    if u.ndim == 0:
        u = np.full(grid.nx, float(u))
    u = u.copy()
    if not np.isfinite(u).all():
        raise ValueError("payoff is not finite on the space grid")

    dx2 = grid.dx ** 2
    dt = safety * dx2 / band.sigma_hi ** 2
    n_steps = max(1, math.ceil(t_final / dt))
    t_done = 0.0
    for m in range(n_steps):
        step = dt if m < n_steps - 1 else t_final - t_done
        step = min(max(step, 0.0), dt)
        d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx2
        u[1:-1] += step * g_function(d2, band)
        t_done += step
    return HeatSolution(
        grid=grid, band=band, t_final=t_final, u=u, n_time_steps=n_steps, dt=dt
    )


def evaluate(sol: HeatSolution, x: float) -> float:
    """Linear interpolation of the terminal slice; x must be inside the domain."""
    if x < sol.grid.x_min or x > sol.grid.x_max:
        raise ValueError(
            f"x={x} outside solution domain [{sol.grid.x_min}, {sol.grid.x_max}]"
        )
    return float(np.interp(x, sol.grid.nodes(), sol.u))


def within_trust_radius(sol: HeatSolution, x: float) -> bool:
    """Whether x is far enough from the frozen boundaries to trust the value.

    The rule keeps six worst-case standard deviations between the query point
    and either boundary, a conservative control of the domain-truncation
    error of the frozen-Dirichlet boundaries.
    """
    margin = 6.0 * sol.band.sigma_hi * math.sqrt(sol.t_final)
    return (x - sol.grid.x_min) >= margin and (sol.grid.x_max - x) >= margin


def default_domain(x_queries, band: VolatilityBand, t_final: float) -> tuple[float, float]:
    """Default truncation: eight worst-case standard deviations past the queries."""
    pad = 8.0 * band.sigma_hi * math.sqrt(t_final)
    xq = np.asarray(x_queries, dtype=float)
    return float(xq.min() - pad), float(xq.max() + pad)
