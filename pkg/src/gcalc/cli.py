"""Experiment runner.

    gcalc <subcommand> --config config.json [--out DIR] [--no-figures]

Subcommands mirror the experiment types (gheat, expect, sde, moments,
sensitivity, stability, bihari, axioms) plus cross-check and parse-check.
Each run writes CSV reports and a ``summary.json`` with the resolved
configuration echo, scalar results, emitted file paths and per-assertion
outcomes; matplotlib figures are rendered next to the CSVs unless
``--no-figures`` is given.

Exit codes: 0 when every declared assertion passes, 1 on assertion failure,
2 on configuration errors, 3 on runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import gheat as gheat_mod
from . import reports
from .config import ConfigError, ExperimentConfig, load_config
from .expr import DomainError, Expr
from .expr import evaluate as eval_expr
from .scenario import GPath, control_family
from .sde import BlowupError, euler_solve, moment_estimate
from .stability import (
    CoefficientSequence,
    bihari_bound,
    coefficient_gap_diagnostic,
    gronwall_bound,
    modulus_stability_study,
    stability_study,
)
from .sublinear import NonFiniteValueError, axiom_report, estimate_many
from .variation import convergence_study

__all__ = ["main", "run", "cross_check", "RunSummary"]

_COMMANDS = (
    "gheat",
    "expect",
    "sde",
    "moments",
    "sensitivity",
    "stability",
    "bihari",
    "axioms",
    "cross-check",
    "parse-check",
)


@dataclasses.dataclass
class RunSummary:
    experiment: str
    config: dict
    wall_clock_seconds: float
    results: dict
    csv_files: list[str]
    figure_files: list[str]
    assertions: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def _payoff_functional(payoff: Expr, x0: float):
    def functional(gpath: GPath) -> np.ndarray:
        return np.asarray(eval_expr(payoff, 0.0, x0 + gpath.B[..., -1], 0.0), dtype=float)

    return functional


def _per_control_rows(est):
    rows = [(s.control_id, s.mean, s.stderr) for s in est.per_control]
    rows.append(("summary", est.value, est.lower_value))
    return rows


def _run_gheat(cfg: ExperimentConfig, out, figures):
    sol = gheat_mod.solve_gheat(
        cfg.payoff, cfg.band, cfg.space_grid, cfg.grid.horizon, cfg.pde_safety
    )
    xs = cfg.space_grid.nodes()
    csv_path = out("gheat.csv")
    reports.write_csv(csv_path, ["x", "u"], zip(xs.tolist(), sol.u.tolist()))
    figs = []
    if figures:
        figs.append(out("gheat.png"))
        reports.figure_gheat(figs[-1], xs, sol.u, cfg.grid.horizon)
    results = {
        "t_final": cfg.grid.horizon,
        "n_time_steps": sol.n_time_steps,
        "dt": sol.dt,
        "u_min": float(sol.u.min()),
        "u_max": float(sol.u.max()),
    }
    return results, [csv_path], figs, {}


def _run_expect(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    est = estimate_many(
        [_payoff_functional(cfg.payoff, cfg.x0)], family, cfg.grid, cfg.n_paths, cfg.seed
    )[0]
    csv_path = out("expect.csv")
    reports.write_csv(csv_path, ["control_id", "mean", "stderr"], _per_control_rows(est))
    figs = []
    if figures:
        figs.append(out("expect.png"))
        reports.figure_expect(figs[-1], est.per_control, est.value, est.lower_value)
    results = {
        "value": est.value,
        "lower_value": est.lower_value,
        "argmax_control": est.argmax_control,
        "n_controls": len(family),
    }
    return results, [csv_path], figs, {}


def _run_sde(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)

    def terminal(gpath: GPath) -> np.ndarray:
        return euler_solve(cfg.coefficients, cfg.x0, gpath, cfg.grid).X[..., -1]

    est = estimate_many([terminal], family, cfg.grid, cfg.n_paths, cfg.seed)[0]
    csv_path = out("sde.csv")
    reports.write_csv(csv_path, ["control_id", "mean", "stderr"], _per_control_rows(est))
    figs = []
    if figures:
        figs.append(out("sde.png"))
        reports.figure_expect(figs[-1], est.per_control, est.value, est.lower_value)
    results = {
        "value": est.value,
        "lower_value": est.lower_value,
        "argmax_control": est.argmax_control,
    }
    return results, [csv_path], figs, {}


def _run_moments(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    ps = cfg.params["p_values"]
    values = [
        moment_estimate(cfg.coefficients, cfg.x0, p, family, cfg.grid, cfg.n_paths, cfg.seed)
        for p in ps
    ]
    csv_path = out("moments.csv")
    reports.write_csv(csv_path, ["p", "value"], zip(ps, values))
    figs = []
    if figures:
        figs.append(out("moments.png"))
        reports.figure_moments(figs[-1], ps, values)
    assertions = {"moments_finite": all(np.isfinite(values))}
    return {"p_values": ps, "values": values}, [csv_path], figs, assertions


def _run_sensitivity(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    p = cfg.params["p"]
    report = convergence_study(
        cfg.coefficients,
        cfg.params["h_ladder"],
        p,
        family,
        cfg.grid,
        cfg.n_paths,
        cfg.seed,
        order=cfg.params["order"],
        variable=cfg.params["variable"],
        x0=cfg.x0 if cfg.params["variable"] == "x" else None,
        x_of_alpha=cfg.x_of_alpha,
    )
    csv_path = out("sensitivity.csv")
    rows = [(h, e, p) for h, e in report.ladder]
    rows.append(("fitted_slope", report.fitted_slope, ""))
    reports.write_csv(csv_path, ["h", "error", "p"], rows)
    figs = []
    if figures:
        figs.append(out("sensitivity.png"))
        reports.figure_ladder(
            figs[-1], [h for h, _ in report.ladder], [e for _, e in report.ladder],
            report.fitted_slope, "bump h",
        )
    assertions = {}
    if "min_slope" in cfg.params:
        assertions["slope_at_least_min"] = (
            np.isfinite(report.fitted_slope)
            and report.fitted_slope >= cfg.params["min_slope"]
        )
    results = {
        "fitted_slope": report.fitted_slope,
        "fit_points": report.fit_points,
        "ladder": [list(t) for t in report.ladder],
    }
    return results, [csv_path], figs, assertions


def _run_stability(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    psis = cfg.params["psis"]
    seq = CoefficientSequence(
        base=cfg.coefficients,
        psi_b=psis["psi_b"],
        psi_sigma=psis["psi_sigma"],
        psi_h=psis["psi_h"],
        rates=tuple(cfg.params["rates"]),
        x0=cfg.x0,
        x0_seq=tuple(cfg.x0 + cfg.params["x0_shift"] * c for c in cfg.params["rates"]),
    )
    gaps = coefficient_gap_diagnostic(seq, family, cfg.grid, cfg.n_paths, cfg.seed)
    if "modulus" in cfg.params:
        report = modulus_stability_study(
            seq, cfg.params["modulus"], family, cfg.grid, cfg.n_paths, cfg.seed
        )
    else:
        report = stability_study(seq, family, cfg.grid, cfg.n_paths, cfg.seed)
    csv_path = out("stability.csv")
    rows = [(c, e) for c, e in report.ladder]
    rows.append(("fitted_slope", report.fitted_slope))
    reports.write_csv(csv_path, ["c_n", "error_n"], rows)
    figs = []
    if figures:
        figs.append(out("stability.png"))
        reports.figure_ladder(
            figs[-1], [c for c, _ in report.ladder], [e for _, e in report.ladder],
            report.fitted_slope, "perturbation rate c_n",
        )
    assertions = {}
    if "min_slope" in cfg.params:
        assertions["slope_at_least_min"] = (
            np.isfinite(report.fitted_slope)
            and report.fitted_slope >= cfg.params["min_slope"]
        )
    if "max_slope" in cfg.params:
        assertions["slope_at_most_max"] = (
            np.isfinite(report.fitted_slope)
            and report.fitted_slope <= cfg.params["max_slope"]
        )
    results = {
        "fitted_slope": report.fitted_slope,
        "ladder": [list(t) for t in report.ladder],
        "coefficient_gaps": [list(g) for g in gaps],
    }
    return results, [csv_path], figs, assertions


def _run_bihari(cfg: ExperimentConfig, out, figures):
    grid = cfg.grid
    ts = grid.times()
    if cfg.params["v_expr"] is not None:
        v = np.asarray(eval_expr(cfg.params["v_expr"], ts, 0.0, 0.0), dtype=float)
        v = np.broadcast_to(v, ts.shape).copy()
    else:
        v = np.full(ts.shape, cfg.params["v_const"])
    modulus = cfg.params["modulus"]
    if modulus.kind == "linear" and modulus.scale == 1.0:
        # pure Gronwall reduction is also exposed for reference in the CSV
        reference = gronwall_bound(cfg.params["u0"], v, grid)
    else:
        reference = None
    bound = bihari_bound(cfg.params["u0"], v, modulus, grid, s_ref=cfg.params["s_ref"])
    csv_path = out("bihari.csv")
    reports.write_csv(csv_path, ["t", "bound"], zip(ts.tolist(), bound.tolist()))
    figs = []
    if figures:
        figs.append(out("bihari.png"))
        reports.figure_bihari(figs[-1], ts, bound)
    results = {"bound_at_T": float(bound[-1]), "u0": cfg.params["u0"]}
    assertions = {}
    if reference is not None:
        gap = float(np.max(np.abs(bound - reference)))
        results["gronwall_gap"] = gap
        assertions["matches_gronwall"] = gap <= 1e-8 * max(1.0, float(np.max(reference)))
    return results, [csv_path], figs, assertions


def _run_axioms(cfg: ExperimentConfig, out, figures):
    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    X = _payoff_functional(cfg.params["payoff_x"], cfg.x0)
    Y = _payoff_functional(cfg.params["payoff_y"], cfg.x0)
    report = axiom_report(
        family, cfg.grid, cfg.n_paths, cfg.seed, X, Y,
        cfg.params["lambda"], cfg.params["c"],
    )
    flags = {
        "monotone": report.monotone,
        "constant_preserving": report.constant_preserving,
        "self_dominated": report.self_dominated,
        "positively_homogeneous": report.positively_homogeneous,
    }
    csv_path = out("axioms.csv")
    reports.write_csv(
        csv_path,
        ["axiom", "passed"],
        list(flags.items()) + [("pathwise_dominates", report.pathwise_dominates)],
    )
    figs = []
    if figures:
        figs.append(out("axioms.png"))
        reports.figure_axioms(figs[-1], flags)
    results = {
        "value_x": report.value_x,
        "value_y": report.value_y,
        "pathwise_dominates": report.pathwise_dominates,
    }
    return results, [csv_path], figs, dict(flags)


def cross_check(cfg: ExperimentConfig, out, figures):
    """PDE value against the scenario supremum at each evaluation point.

    Per point the gap must not exceed ``tol_pde + 3 stderr + tol_extra``
    where ``tol_pde`` comes from grid-refinement extrapolation (two thirds of
    the fine-to-half-resolution difference) and ``tol_extra`` is the
    configured allowance for control-family representation error, zero by
    default.
    """
    pts = cfg.params["eval_points"]
    T = cfg.grid.horizon
    if cfg.space_grid is not None:
        sgrid = cfg.space_grid
    else:
        lo, hi = gheat_mod.default_domain(pts, cfg.band, T)
        sgrid = gheat_mod.SpaceGrid(lo, hi, cfg.params["nx"])
    coarse_grid = gheat_mod.SpaceGrid(sgrid.x_min, sgrid.x_max, (sgrid.nx - 1) // 2 + 1)
    fine = gheat_mod.solve_gheat(cfg.payoff, cfg.band, sgrid, T, cfg.pde_safety)
    coarse = gheat_mod.solve_gheat(cfg.payoff, cfg.band, coarse_grid, T, cfg.pde_safety)

    family = control_family(cfg.band, cfg.grid, cfg.family_spec)
    functionals = [_payoff_functional(cfg.payoff, x) for x in pts]
    estimates = estimate_many(functionals, family, cfg.grid, cfg.n_paths, cfg.seed)

    rows = []
    assertions = {}
    u_vals, mc_vals, tols = [], [], []
    for x, est in zip(pts, estimates):
        u = gheat_mod.evaluate(fine, x)
        u_c = gheat_mod.evaluate(coarse, x)
        tol_pde = (2.0 / 3.0) * abs(u - u_c)
        stderr = est.per_control[
            [s.control_id for s in est.per_control].index(est.argmax_control)
        ].stderr
        tol = tol_pde + 3.0 * stderr + cfg.params["tol_extra"]
        gap = abs(u - est.value)
        ok = gap <= tol
        rows.append((x, u, est.value, stderr, gap, tol, ok))
        assertions[f"point_{x:g}"] = bool(ok)
        u_vals.append(u)
        mc_vals.append(est.value)
        tols.append(tol)

    csv_path = out("cross_check.csv")
    reports.write_csv(
        csv_path,
        ["x", "u_pde", "mc_value", "mc_stderr", "gap", "tol", "passed"],
        rows,
    )
    figs = []
    if figures:
        figs.append(out("cross_check.png"))
        reports.figure_cross_check(figs[-1], pts, u_vals, mc_vals, tols)
    results = {
        "gaps": [float(r[4]) for r in rows],
        "tolerances": [float(r[5]) for r in rows],
        "trusted": [bool(gheat_mod.within_trust_radius(fine, x)) for x in pts],
    }
    return results, [csv_path], figs, assertions


_RUNNERS = {
    "gheat": _run_gheat,
    "expect": _run_expect,
    "sde": _run_sde,
    "moments": _run_moments,
    "sensitivity": _run_sensitivity,
    "stability": _run_stability,
    "bihari": _run_bihari,
    "axioms": _run_axioms,
    "cross_check": cross_check,
}


def run(cfg: ExperimentConfig, out_dir: str, figures: bool = True) -> RunSummary:
    """Execute one experiment and write its reports under ``out_dir``."""
    reports.ensure_dir(out_dir)

    def out(name: str) -> str:
        return os.path.join(out_dir, name)

    started = time.perf_counter()
    results, csv_files, figure_files, assertions = _RUNNERS[cfg.experiment](
        cfg, out, figures
    )
    elapsed = time.perf_counter() - started
    summary = RunSummary(
        experiment=cfg.experiment,
        config=cfg.resolved,
        wall_clock_seconds=elapsed,
        results=results,
        csv_files=csv_files,
        figure_files=figure_files,
        assertions={k: bool(v) for k, v in assertions.items()},
    )
    with open(out("summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gcalc",
        description="scenario-supremum numerics for uncertain-volatility expectations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--out", default="gcalc_out", help="output directory (default gcalc_out)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.command == "parse-check":
            print(f"config ok: experiment {cfg.experiment!r}")
            return 0
        expected = args.command.replace("-", "_")
        if cfg.experiment != expected:
            raise ConfigError(
                "experiment",
                f"config declares {cfg.experiment!r} but subcommand is {expected!r}",
            )
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    try:
        summary = run(cfg, args.out, figures=not args.no_figures)
    except (BlowupError, NonFiniteValueError, DomainError) as e:
        print(f"runtime error in {cfg.experiment}: {e}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as e:
        print(f"runtime error in {cfg.experiment}: {e}", file=sys.stderr)
        return 3

    for name, ok in summary.assertions.items():
        print(f"[{cfg.experiment}] {name}: {'pass' if ok else 'FAIL'}")
    print(f"[{cfg.experiment}] wrote {', '.join(summary.csv_files)}")
    return 0 if summary.passed else 1


if __name__ == "__main__":
    sys.exit(main())
