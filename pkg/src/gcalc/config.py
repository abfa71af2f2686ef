"""Experiment configuration: JSON in, validated objects out.

Every run is described by one JSON document. Validation errors carry the
path of the offending field (``coefficients.b`` and so on); expression
fields are parsed eagerly so a syntax error surfaces as a config error with
its byte offset. Seeds are mandatory wherever randomness is consumed, there
are no entropy-source defaults anywhere.

The validated object keeps a fully resolved echo of the configuration
(defaults filled in) that reproduces the run byte for byte when fed back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .expr import Expr, ParseError, parse
from .gheat import SpaceGrid
from .scenario import FamilySpec, TimeGrid, VolatilityBand
from .sde import CoefficientSet
from .stability import ModulusSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "EXPERIMENTS"]

EXPERIMENTS = (
    "gheat",
    "expect",
    "sde",
    "moments",
    "sensitivity",
    "stability",
    "bihari",
    "axioms",
    "cross_check",
)

DEFAULT_H_LADDER = [2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(mapping: dict, key: str, path: str) -> Any:
    if not isinstance(mapping, dict):
        raise ConfigError(path.rsplit(".", 1)[0] if "." in path else path, "must be an object")
    if key not in mapping:
        raise ConfigError(path, "missing required field")
    return mapping[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    return value


def _expression(source: Any, path: str) -> Expr:
    if not isinstance(source, str):
        raise ConfigError(path, f"must be an expression string, got {source!r}")
    try:
        return parse(source)
    except ParseError as e:
        raise ConfigError(path, str(e)) from e


def _wrap(path: str, build, *args):
    try:
        return build(*args)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path, str(e)) from e


@dataclass
class ExperimentConfig:
    experiment: str
    resolved: dict
    band: VolatilityBand | None = None
    grid: TimeGrid | None = None
    space_grid: SpaceGrid | None = None
    pde_safety: float = 0.9
    coefficients: CoefficientSet | None = None
    payoff: Expr | None = None
    x0: float = 0.0
    x_of_alpha: Expr | None = None
    family_spec: FamilySpec | None = None
    n_paths: int = 0
    seed: int = 0
    params: dict = field(default_factory=dict)


def _parse_band(raw: dict) -> tuple[VolatilityBand, dict]:
    blk = _require(raw, "band", "band")
    lo = _number(_require(blk, "sigma_lo", "band.sigma_lo"), "band.sigma_lo")
    hi = _number(_require(blk, "sigma_hi", "band.sigma_hi"), "band.sigma_hi")
    band = _wrap("band", VolatilityBand, lo, hi)
    return band, {"sigma_lo": lo, "sigma_hi": hi}


def _parse_grid(raw: dict) -> tuple[TimeGrid, dict]:
    blk = _require(raw, "grid", "grid")
    T = _number(_require(blk, "T", "grid.T"), "grid.T")
    n = _integer(_require(blk, "n_steps", "grid.n_steps"), "grid.n_steps")
    grid = _wrap("grid", TimeGrid, T, n)
    return grid, {"T": T, "n_steps": n}


def _parse_space_grid(raw: dict, required: bool) -> tuple[SpaceGrid | None, float, dict | None]:
    if "space_grid" not in raw:
        if required:
            raise ConfigError("space_grid", "missing required field")
        return None, 0.9, None
    blk = raw["space_grid"]
    x_min = _number(_require(blk, "x_min", "space_grid.x_min"), "space_grid.x_min")
    x_max = _number(_require(blk, "x_max", "space_grid.x_max"), "space_grid.x_max")
    nx = _integer(_require(blk, "nx", "space_grid.nx"), "space_grid.nx")
    safety = _number(blk.get("safety", 0.9), "space_grid.safety")
    if not 0.0 < safety <= 1.0:
        raise ConfigError("space_grid.safety", "must lie in (0, 1]")
    sgrid = _wrap("space_grid", SpaceGrid, x_min, x_max, nx)
    return sgrid, safety, {"x_min": x_min, "x_max": x_max, "nx": nx, "safety": safety}


def _parse_coefficients(raw: dict) -> tuple[CoefficientSet, dict]:
    blk = _require(raw, "coefficients", "coefficients")
    b = _expression(_require(blk, "b", "coefficients.b"), "coefficients.b")
    sigma = _expression(_require(blk, "sigma", "coefficients.sigma"), "coefficients.sigma")
    h = _expression(_require(blk, "h", "coefficients.h"), "coefficients.h")
    alpha = None
    if "alpha" in blk and blk["alpha"] is not None:
        alpha = _number(blk["alpha"], "coefficients.alpha")
    coeffs = _wrap("coefficients", CoefficientSet, b, sigma, h, alpha)
    echo = {"b": blk["b"], "sigma": blk["sigma"], "h": blk["h"]}
    if alpha is not None:
        echo["alpha"] = alpha
    return coeffs, echo


def _parse_family(raw: dict) -> tuple[FamilySpec, dict]:
    blk = _require(raw, "family", "family")
    n_levels = _integer(blk.get("n_levels", 2), "family.n_levels")
    n_switch = _integer(blk.get("n_switch", 0), "family.n_switch")
    n_random = _integer(blk.get("n_random", 0), "family.n_random")
    seed = _integer(blk.get("seed", 0), "family.seed")
    spec = _wrap("family", FamilySpec, n_levels, n_switch, n_random, seed)
    return spec, {
        "n_levels": n_levels,
        "n_switch": n_switch,
        "n_random": n_random,
        "seed": seed,
    }


def _parse_mc(raw: dict) -> tuple[int, int, dict]:
    blk = _require(raw, "mc", "mc")
    n_paths = _integer(_require(blk, "n_paths", "mc.n_paths"), "mc.n_paths")
    seed = _integer(_require(blk, "seed", "mc.seed"), "mc.seed")
    if n_paths < 2:
        raise ConfigError("mc.n_paths", "must be at least 2")
    if seed < 0:
        raise ConfigError("mc.seed", "must be nonnegative")
    return n_paths, seed, {"n_paths": n_paths, "seed": seed}


def _parse_modulus(blk: Any, path: str) -> tuple[ModulusSpec, dict]:
    kind = _require(blk, "kind", f"{path}.kind")
    if not isinstance(kind, str):
        raise ConfigError(f"{path}.kind", "must be a string")
    scale = _number(blk.get("scale", 1.0), f"{path}.scale")
    eps = _number(blk.get("eps", 0.0), f"{path}.eps")
    spec = _wrap(path, ModulusSpec, kind, scale, eps)
    return spec, {"kind": kind, "scale": scale, "eps": eps}


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a decoded JSON document into an ExperimentConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    experiment = _require(raw, "experiment", "experiment")
    if not isinstance(experiment, str):
        raise ConfigError("experiment", "must be a string")
    experiment = experiment.replace("-", "_")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            "experiment", f"unknown experiment {experiment!r}, expected one of {EXPERIMENTS}"
        )

    cfg = ExperimentConfig(experiment=experiment, resolved={"experiment": experiment})
    resolved = cfg.resolved

    needs_band = experiment in ("gheat", "expect", "sde", "moments", "sensitivity",
                                "stability", "axioms", "cross_check")
    needs_mc = experiment in ("expect", "sde", "moments", "sensitivity", "stability",
                              "axioms", "cross_check")
    needs_coeffs = experiment in ("sde", "moments", "sensitivity", "stability")
    needs_payoff = experiment in ("gheat", "expect", "cross_check")

    if needs_band:
        cfg.band, resolved["band"] = _parse_band(raw)
    grid, resolved["grid"] = _parse_grid(raw)
    cfg.grid = grid

    if needs_mc:
        cfg.family_spec, resolved["family"] = _parse_family(raw)
        cfg.n_paths, cfg.seed, resolved["mc"] = _parse_mc(raw)

    if needs_coeffs:
        cfg.coefficients, resolved["coefficients"] = _parse_coefficients(raw)

    if needs_payoff:
        payoff_src = _require(raw, "payoff", "payoff")
        cfg.payoff = _expression(payoff_src, "payoff")
        resolved["payoff"] = payoff_src

    if experiment in ("expect", "sde", "moments", "axioms", "stability"):
        cfg.x0 = _number(raw.get("x0", 0.0), "x0")
        resolved["x0"] = cfg.x0

    if experiment == "gheat" or experiment == "cross_check":
        required = experiment == "gheat"
        cfg.space_grid, cfg.pde_safety, echo = _parse_space_grid(raw, required)
        if echo is not None:
            resolved["space_grid"] = echo

    params = cfg.params
    if experiment == "moments":
        p_values = raw.get("p_values", [2.0, 4.0, 8.0])
        if not isinstance(p_values, list) or not p_values:
            raise ConfigError("p_values", "must be a nonempty list of numbers")
        params["p_values"] = [_number(p, f"p_values[{i}]") for i, p in enumerate(p_values)]
        for i, p in enumerate(params["p_values"]):
            if p <= 0:
                raise ConfigError(f"p_values[{i}]", "must be positive")
        resolved["p_values"] = params["p_values"]

    if experiment == "sensitivity":
        variable = raw.get("variable", "x")
        if variable not in ("x", "alpha"):
            raise ConfigError("variable", "must be 'x' or 'alpha'")
        params["variable"] = variable
        order = _integer(raw.get("order", 1), "order")
        if order not in (1, 2):
            raise ConfigError("order", "must be 1 or 2")
        params["order"] = order
        p = _number(raw.get("p", 2), "p")
        if p not in (2.0, 4.0):
            raise ConfigError("p", "must be 2 or 4")
        params["p"] = p
        ladder = raw.get("h_ladder", DEFAULT_H_LADDER)
        if not isinstance(ladder, list) or len(ladder) < 2:
            raise ConfigError("h_ladder", "must be a list with at least two bumps")
        params["h_ladder"] = [_number(h, f"h_ladder[{i}]") for i, h in enumerate(ladder)]
        if variable == "alpha":
            src = _require(raw, "x_of_alpha", "x_of_alpha")
            cfg.x_of_alpha = _expression(src, "x_of_alpha")
            resolved["x_of_alpha"] = src
            if cfg.coefficients.alpha is None:
                raise ConfigError("coefficients.alpha", "required for variable='alpha'")
        else:
            cfg.x0 = _number(raw.get("x0", 0.0), "x0")
            resolved["x0"] = cfg.x0
        resolved.update({"variable": variable, "order": order, "p": p,
                         "h_ladder": params["h_ladder"]})
        if "min_slope" in raw:
            params["min_slope"] = _number(raw["min_slope"], "min_slope")
            resolved["min_slope"] = params["min_slope"]

    if experiment == "stability":
        blk = _require(raw, "perturbations", "perturbations")
        psis = {}
        for name in ("psi_b", "psi_sigma", "psi_h"):
            src = _require(blk, name, f"perturbations.{name}")
            psis[name] = _expression(src, f"perturbations.{name}")
        params["psis"] = psis
        x0_shift = _number(blk.get("x0_shift", 0.0), "perturbations.x0_shift")
        params["x0_shift"] = x0_shift
        resolved["perturbations"] = {
            "psi_b": blk["psi_b"], "psi_sigma": blk["psi_sigma"],
            "psi_h": blk["psi_h"], "x0_shift": x0_shift,
        }
        if "rates" in raw:
            rates = raw["rates"]
            if not isinstance(rates, list) or not rates:
                raise ConfigError("rates", "must be a nonempty list of numbers")
            params["rates"] = [_number(c, f"rates[{i}]") for i, c in enumerate(rates)]
        else:
            n_max = _integer(raw.get("n_max", 16), "n_max")
            if n_max < 1:
                raise ConfigError("n_max", "must be positive")
            params["rates"] = [1.0 / n for n in range(1, n_max + 1)]
        resolved["rates"] = params["rates"]
        if "modulus" in raw:
            params["modulus"], resolved["modulus"] = _parse_modulus(raw["modulus"], "modulus")
        for key in ("min_slope", "max_slope"):
            if key in raw:
                params[key] = _number(raw[key], key)
                resolved[key] = params[key]

    if experiment == "bihari":
        params["u0"] = _number(_require(raw, "u0", "u0"), "u0")
        if params["u0"] < 0:
            raise ConfigError("u0", "must be nonnegative")
        params["s_ref"] = _number(raw.get("s_ref", 1.0), "s_ref")
        params["modulus"], resolved["modulus"] = _parse_modulus(
            _require(raw, "modulus", "modulus"), "modulus"
        )
        v = _require(raw, "v", "v")
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            params["v_expr"] = None
            params["v_const"] = float(v)
        else:
            params["v_expr"] = _expression(v, "v")
            params["v_const"] = None
        resolved.update({"u0": params["u0"], "s_ref": params["s_ref"], "v": v})

    if experiment == "axioms":
        blk = raw.get("axioms", {})
        lam = _number(blk.get("lambda", 2.0), "axioms.lambda")
        if lam < 0:
            raise ConfigError("axioms.lambda", "must be nonnegative")
        c = _number(blk.get("c", -3.5), "axioms.c")
        px = blk.get("payoff_x", "x^2")
        py = blk.get("payoff_y", "x")
        params["lambda"] = lam
        params["c"] = c
        params["payoff_x"] = _expression(px, "axioms.payoff_x")
        params["payoff_y"] = _expression(py, "axioms.payoff_y")
        resolved["axioms"] = {"lambda": lam, "c": c, "payoff_x": px, "payoff_y": py}

    if experiment == "cross_check":
        pts = raw.get("eval_points", [-1.0, 0.0, 1.0])
        if not isinstance(pts, list) or not pts:
            raise ConfigError("eval_points", "must be a nonempty list of numbers")
        params["eval_points"] = [_number(x, f"eval_points[{i}]") for i, x in enumerate(pts)]
        params["tol_extra"] = _number(raw.get("tol_extra", 0.0), "tol_extra")
        params["nx"] = _integer(raw.get("nx", 1601), "nx")
        resolved.update({
            "eval_points": params["eval_points"],
            "tol_extra": params["tol_extra"],
            "nx": params["nx"],
        })

    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON: {e}") from e
    return parse_config(raw)
