"""Scenario-supremum numerics for uncertain-volatility expectations.

The package approximates worst-case (sublinear) expectations by maxima of
classical Monte Carlo means over volatility scenarios, solves the driven
state equation and its first and second variational equations pathwise, and
cross-checks everything against a monotone finite-difference solver of the
worst-case heat equation plus closed forms and difference quotients.
"""

from .expr import Expr, differentiate, evaluate, parse, to_source
from .gheat import HeatSolution, SpaceGrid, g_function, solve_gheat
from .scenario import (
    DriverPath,
    FamilySpec,
    GPath,
    TimeGrid,
    VolatilityBand,
    VolatilityControl,
    control_family,
    generate_driver,
    generate_drivers,
    realize_path,
)
from .sde import CoefficientSet, SdePath, euler_solve, lipschitz_moment_ratio, moment_estimate
from .stability import (
    CoefficientSequence,
    ModulusSpec,
    bihari_bound,
    gronwall_bound,
    modulus_stability_study,
    stability_study,
)
from .sublinear import AxiomReport, SublinearEstimate, axiom_report, estimate, estimate_many
from .variation import (
    ConvergenceReport,
    SecondTangentPath,
    TangentPath,
    convergence_study,
    difference_quotient,
    first_variation_alpha,
    first_variation_x,
    second_variation_alpha,
    second_variation_x,
)

__version__ = "0.1.0"
