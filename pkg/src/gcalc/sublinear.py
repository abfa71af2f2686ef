"""Worst-case (sublinear) expectation of path functionals.

The estimator is a maximum of classical Monte Carlo means over a control
family, with the same driver paths reused for every control. Common drivers
do two jobs: they slash the variance of control comparisons, and they turn
the defining axioms of a sublinear expectation (monotonicity, constant
preservation, self-domination, positive homogeneity) into identities of the
max-of-means construction rather than statements in distribution.

Floating-point means are not quite linear, so :func:`axiom_report` checks
the axioms in exact rational arithmetic: the per-path functional values are
ordinary floats (hence exact dyadic rationals), and every mean, scaling,
difference and maximum of the report is computed over ``fractions.Fraction``.
The four checks therefore hold with zero tolerance whenever the construction
is correct, independent of rounding.

A functional maps a :class:`~gcalc.scenario.GPath` batch to one value per
path (an array of shape ``(n_paths,)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .scenario import GPath, TimeGrid, VolatilityControl, generate_drivers, realize_path

__all__ = [
    "ControlStat",
    "SublinearEstimate",
    "AxiomReport",
    "NonFiniteValueError",
    "estimate",
    "estimate_many",
    "axiom_report",
]

Functional = Callable[[GPath], np.ndarray]


class NonFiniteValueError(RuntimeError):
    """A functional produced a non-finite value on some path."""

    def __init__(self, control_id: int, path_index: int):
        super().__init__(
            f"non-finite functional value under control {control_id} "
            f"on path {path_index}"
        )
        self.control_id = control_id
        self.path_index = path_index


class ControlStat(NamedTuple):
    control_id: int
    mean: float
    stderr: float


@dataclass(frozen=True)
class SublinearEstimate:
    """Max-of-means estimate with per-control diagnostics.

    ``value`` is the largest per-control sample mean (ties broken by the
    smallest control id), ``lower_value`` the matching lower expectation
    ``-max of means of the negated functional``.
    """

    value: float
    lower_value: float
    argmax_control: int
    per_control: tuple[ControlStat, ...]
    n_paths: int


def _functional_values(
    functional: Functional, gpath: GPath, control_id: int, n_paths: int
) -> np.ndarray:
    vals = np.asarray(functional(gpath), dtype=float)
    if vals.shape != (n_paths,):
        raise ValueError(
            f"functional returned shape {vals.shape}, expected ({n_paths},)"
        )
    finite = np.isfinite(vals)
    if not finite.all():
        raise NonFiniteValueError(control_id, int(np.argmin(finite)))
    return vals


def _max_by_id(stats: Sequence[ControlStat]) -> tuple[float, int]:
    best = stats[0]
    for s in stats[1:]:
        if s.mean > best.mean:
            best = s
    return best.mean, best.control_id


def estimate_many(
    functionals: Sequence[Functional],
    family: Sequence[VolatilityControl],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> list[SublinearEstimate]:
    """Estimate several functionals in one sweep over the control family.

    All functionals see the same realized paths, which keeps their estimates
    comparable; per-control means are reduced with numpy's pairwise summation
    in path-index order, so results do not depend on any internal scheduling.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if not family:
        raise ValueError("control family must not be empty")
    drivers = generate_drivers(grid, seed, n_paths)
    sqrt_n = math.sqrt(n_paths)
    stats: list[list[ControlStat]] = [[] for _ in functionals]
    neg_means: list[list[tuple[int, float]]] = [[] for _ in functionals]
    for control in family:
        gpath = realize_path(drivers, control, grid)
        for j, functional in enumerate(functionals):
            vals = _functional_values(functional, gpath, control.id, n_paths)
            mean = float(np.mean(vals))
            stderr = float(np.std(vals, ddof=1)) / sqrt_n
            stats[j].append(ControlStat(control.id, mean, stderr))
            neg_means[j].append((control.id, float(np.mean(-vals))))
    out = []
    for j in range(len(functionals)):
        value, argmax = _max_by_id(stats[j])
        lower = -max(m for _, m in neg_means[j])
        out.append(
            SublinearEstimate(
                value=value,
                lower_value=lower,
                argmax_control=argmax,
                per_control=tuple(stats[j]),
                n_paths=n_paths,
            )
        )
    return out


def estimate(
    functional: Functional,
    family: Sequence[VolatilityControl],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> SublinearEstimate:
    """Sublinear expectation of one functional over the control family."""
    return estimate_many([functional], family, grid, n_paths, seed)[0]


@dataclass(frozen=True)
class AxiomReport:
    """Outcome of the four sublinear-expectation axioms on the estimator.

    Each flag is decided in exact rational arithmetic on the sampled values.
    ``monotone`` reports the implication "pathwise X >= Y on every sampled
    path implies estimate(X) >= estimate(Y)"; ``pathwise_dominates`` records
    whether the premise held, so a vacuous pass can be told apart.
    """

    monotone: bool
    constant_preserving: bool
    self_dominated: bool
    positively_homogeneous: bool
    pathwise_dominates: bool
    value_x: float
    value_y: float

    @property
    def all_pass(self) -> bool:
        return (
            self.monotone
            and self.constant_preserving
            and self.self_dominated
            and self.positively_homogeneous
        )


def _exact_upper(per_path: list[list[Fraction]], n_paths: int) -> Fraction:
    return max(sum(vals) / n_paths for vals in per_path)


def axiom_report(
    family: Sequence[VolatilityControl],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    X: Functional,
    Y: Functional,
    lam: float,
    c: float,
) -> AxiomReport:
    """Check the four axioms exactly on shared drivers.

    Per-path values of ``X`` and ``Y`` are evaluated once in float64; the
    derived functionals ``X - Y``, ``lam * X`` and the constant ``c`` are
    formed in exact arithmetic from those values, which is what makes the
    zero-tolerance comparison meaningful.
    """
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if not family:
        raise ValueError("control family must not be empty")

    drivers = generate_drivers(grid, seed, n_paths)
    xs: list[list[Fraction]] = []
    ys: list[list[Fraction]] = []
    dominates = True
    for control in family:
        gpath = realize_path(drivers, control, grid)
        xv = _functional_values(X, gpath, control.id, n_paths)
        yv = _functional_values(Y, gpath, control.id, n_paths)
        if not np.all(xv >= yv):
            dominates = False
        xs.append([Fraction(v) for v in xv.tolist()])
        ys.append([Fraction(v) for v in yv.tolist()])

    est_x = _exact_upper(xs, n_paths)
    est_y = _exact_upper(ys, n_paths)
    flam = Fraction(lam)
    fc = Fraction(c)

    est_diff = _exact_upper(
        [[a - b for a, b in zip(xc, yc)] for xc, yc in zip(xs, ys)], n_paths
    )
    est_scaled = _exact_upper([[flam * a for a in xc] for xc in xs], n_paths)
    est_const = _exact_upper([[fc] * n_paths for _ in family], n_paths)

    return AxiomReport(
        monotone=(not dominates) or est_x >= est_y,
        constant_preserving=est_const == fc,
        self_dominated=est_x - est_y <= est_diff,
        positively_homogeneous=est_scaled == flam * est_x,
        pathwise_dominates=dominates,
        value_x=float(est_x),
        value_y=float(est_y),
    )
