"""Delimited output and figure rendering for experiment runs.

CSV files are the primary, byte-stable artifact: floats are written with
``repr`` (shortest round-trip form), rows end with a bare newline, and the
writer never touches locale, so identical runs produce identical bytes.
Each report also renders a matplotlib figure next to its CSV; figures are
for eyeballing and carry no determinism contract.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "figure_gheat",
    "figure_expect",
    "figure_ladder",
    "figure_moments",
    "figure_bihari",
    "figure_cross_check",
    "figure_axioms",
]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_gheat(path: str, xs, us, t_final: float) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, us, lw=1.5)
    ax.set_xlabel("x")
    ax.set_ylabel(f"u({t_final:g}, x)")
    ax.set_title("worst-case heat solution")
    ax.grid(alpha=0.3)
    _save(fig, path)


def figure_expect(path: str, stats, value: float, lower_value: float) -> None:
    ids = [s.control_id for s in stats]
    means = [s.mean for s in stats]
    errs = [3.0 * s.stderr for s in stats]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(ids, means, yerr=errs, fmt="o", ms=3, lw=0.8, capsize=2)
    ax.axhline(value, color="tab:red", lw=1.0, label=f"upper = {value:.5g}")
    ax.axhline(lower_value, color="tab:blue", lw=1.0, label=f"lower = {lower_value:.5g}")
    ax.set_xlabel("control id")
    ax.set_ylabel("per-control mean (3 SE bars)")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def figure_ladder(path: str, hs, errors, slope: float, xlabel: str) -> None:
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(hs, np.maximum(errors, 1e-300), "o-", ms=4, lw=1.0)
    if np.isfinite(slope) and np.all(errors > 0):
        anchor = errors[0] * (hs / hs[0]) ** slope
        ax.loglog(hs, anchor, "--", color="tab:red", lw=1.0, label=f"slope {slope:.2f}")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel("worst-case error")
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)


def figure_moments(path: str, ps, values) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(ps, values, "o-", lw=1.0)
    ax.set_xlabel("moment power p")
    ax.set_ylabel("worst-case sup-moment")
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)


def figure_bihari(path: str, ts, bound) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, bound, lw=1.5)
    ax.set_xlabel("t")
    ax.set_ylabel("comparison bound")
    ax.grid(alpha=0.3)
    _save(fig, path)


def figure_cross_check(path: str, xs, u_pde, mc_values, tols) -> None:
    xs = np.asarray(xs, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, u_pde, "s-", label="PDE", lw=1.0, ms=4)
    ax.errorbar(xs, mc_values, yerr=tols, fmt="o", ms=4, lw=0.8, capsize=3,
                label="scenario supremum (tolerance bars)")
    ax.set_xlabel("x")
    ax.set_ylabel("value")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)


def figure_axioms(path: str, flags: dict[str, bool]) -> None:
    names = list(flags)
    vals = [1.0 if flags[k] else 0.0 for k in names]
    fig, ax = plt.subplots(figsize=(6, 3))
    colors = ["tab:green" if v else "tab:red" for v in vals]
    ax.barh(names, [1.0] * len(names), color=colors, alpha=0.6)
    for i, v in enumerate(vals):
        ax.text(0.5, i, "pass" if v else "fail", va="center", ha="center")
    ax.set_xticks([])
    ax.set_title("sublinear-expectation axioms")
    _save(fig, path)


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
