"""Volatility scenarios and discretised uncertain-volatility Brownian paths.

Volatility uncertainty is an interval [sigma_lo, sigma_hi]. One admissible
scenario (a :class:`VolatilityControl`) fixes a volatility level per time
step; under it the driving path has increments ``sigma_k * dW_k`` and its
quadratic variation grows by ``sigma_k^2 * dt`` per step. Suprema of
classical expectations over a family of such controls are the computable
lower representation of the worst-case (sublinear) expectation; the PDE
solver in :mod:`gcalc.gheat` provides the independent cross-check of how
adequate a finite family is.

Randomness is counter-based and fully reproducible: the raw stream for path
``i`` is Philox4x64 keyed by ``(seed, i)``, mapped to uniforms by
``u = ((word >> 11) + 0.5) * 2**-53`` and to standard normals by the inverse
normal CDF. Every output is a pure function of its arguments, so batch
generation equals per-path generation bit for bit and any parallel schedule
reproduces the sequential result. This generator definition is part of the
package contract and fixed per release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "VolatilityBand",
    "TimeGrid",
    "VolatilityControl",
    "DriverPath",
    "GPath",
    "FamilySpec",
    "generate_driver",
    "generate_drivers",
    "realize_path",
    "control_family",
]

_INV_2_53 = 2.0 ** -53
# keys >= 2**63 in the second word are reserved for control-level streams so
# they can never collide with per-path driver streams
_CONTROL_KEY_BASE = 2 ** 63


def _uniform01(key0: int, key1: int, n: int) -> np.ndarray:
    """Deterministic open-interval uniforms from a Philox stream."""
    bg = np.random.Philox(key=np.array([key0, key1], dtype=np.uint64))
    raw = bg.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


@dataclass(frozen=True)
class VolatilityBand:
    """Uncertainty interval [sigma_lo, sigma_hi] for the volatility."""

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self):
        if not (0.0 <= self.sigma_lo <= self.sigma_hi):
            raise ValueError(
                f"need 0 <= sigma_lo <= sigma_hi, got [{self.sigma_lo}, {self.sigma_hi}]"
            )
        if not self.sigma_hi > 0.0:
            raise ValueError("sigma_hi must be positive")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with times computed as k*T/n_steps, never accumulated."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps + 1) * self.horizon) / self.n_steps

    def time(self, k: int) -> float:
        return (k * self.horizon) / self.n_steps


@dataclass(frozen=True, eq=False)
class VolatilityControl:
    """One admissible scenario: a volatility level per time step."""

    id: int
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)


@dataclass(frozen=True, eq=False)
class DriverPath:
    """Gaussian increments dW with variance dt; last axis is the step axis.

    A single path is a 1-d array of length ``n_steps``; a batch stacks paths
    along the leading axis, row ``i`` being exactly the single path with
    ``path_index = i``.
    """

    increments: np.ndarray


@dataclass(frozen=True, eq=False)
class GPath:
    """Discretised path of the uncertain-volatility driver under one control.

    ``B`` holds the path values with ``B[..., 0] = 0`` and increments
    ``sigma_k * dW_k``; ``QV`` holds the quadratic variation with increments
    ``sigma_k^2 * dt``. ``QV`` carries no path axis, it is determined by the
    control alone and broadcasts against any batch of ``B``.
    """

    B: np.ndarray
    QV: np.ndarray


@dataclass(frozen=True)
class FamilySpec:
    """How to populate a control family.

    ``n_levels`` constant controls interpolate sigma_lo..sigma_hi (the two
    extremes always included), ``n_switch`` bang-bang controls switch between
    the extremes once at equispaced times in both phase orders, and
    ``n_random`` controls draw an independent uniform level per step from the
    stream keyed by ``seed``.
    """

    n_levels: int = 2
    n_switch: int = 0
    n_random: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")
        if self.n_switch < 0 or self.n_random < 0:
            raise ValueError("n_switch and n_random must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


def generate_driver(grid: TimeGrid, seed: int, path_index: int) -> DriverPath:
    """Increments of one driving path, a pure function of (seed, path_index)."""
    if seed < 0 or path_index < 0:
        raise ValueError("seed and path_index must be nonnegative")
    u = _uniform01(seed, path_index, grid.n_steps)
    return DriverPath(ndtri(u) * math.sqrt(grid.dt))


def generate_drivers(grid: TimeGrid, seed: int, n_paths: int) -> DriverPath:
    """Batch of driver paths; row i is bit-identical to generate_driver(grid, seed, i)."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    raw = np.empty((n_paths, grid.n_steps), dtype=np.uint64)
    for i in range(n_paths):
        bg = np.random.Philox(key=np.array([seed, i], dtype=np.uint64))
        raw[i] = bg.random_raw(grid.n_steps)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    return DriverPath(ndtri(u) * math.sqrt(grid.dt))


def realize_path(driver: DriverPath, control: VolatilityControl, grid: TimeGrid) -> GPath:
    """Turn classical driver increments into the path under one scenario."""
    inc = driver.increments
    if inc.shape[-1] != grid.n_steps or control.values.shape != (grid.n_steps,):
        raise ValueError(
            f"length mismatch: driver has {inc.shape[-1]} increments, control has "
            f"{control.values.shape[0]}, grid has {grid.n_steps} steps"
        )
    b_inc = control.values * inc
    B = np.zeros(inc.shape[:-1] + (grid.n_steps + 1,))
    np.cumsum(b_inc, axis=-1, out=B[..., 1:])
    qv_inc = control.values ** 2 * grid.dt
    QV = np.zeros(grid.n_steps + 1)
    np.cumsum(qv_inc, out=QV[1:])
    return GPath(B=B, QV=QV)


def control_family(
    band: VolatilityBand, grid: TimeGrid, spec: FamilySpec
) -> list[VolatilityControl]:
    """Build the control family: constants, then bang-bang, then random levels.

    Ids are consecutive from 0 in that order; the extreme constant controls
    are always present.
    """
    lo, hi = band.sigma_lo, band.sigma_hi
    n = grid.n_steps
    controls: list[VolatilityControl] = []

    for level in np.linspace(lo, hi, spec.n_levels):
        controls.append(VolatilityControl(len(controls), np.full(n, level)))

    if spec.n_switch > 0:
        t_left = grid.times()[:-1]
        n_times = (spec.n_switch + 1) // 2
        made = 0
        for i in range(1, n_times + 1):
            tau = (i * grid.horizon) / (n_times + 1)
            for first, second in ((lo, hi), (hi, lo)):
                if made == spec.n_switch:
                    break
                values = np.where(t_left < tau, first, second)
                controls.append(VolatilityControl(len(controls), values))
                made += 1

    for j in range(spec.n_random):
        u = _uniform01(spec.seed, _CONTROL_KEY_BASE + j, n)
        controls.append(VolatilityControl(len(controls), lo + (hi - lo) * u))

    return controls
