"""Regenerate every reported table as CSV files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DIRECTION_ROWS = (
    ("alpha<rho<0", -2.0, -1.0, "Increasing", "Decreasing"),
    ("alpha<0<rho", -1.0, 0.5, "Increasing", "Increasing"),
    ("0<alpha<rho", 0.25, 0.5, "Decreasing", "Decreasing"),
    ("alpha=rho<0", -1.0, -1.0, "Constant", "Decreasing"),
    ("0<alpha=rho", 0.5, 0.5, "Constant", "Decreasing"),
)

CBD_COST_REFERENCE = {(-10.0, -1.0): 22.4, (-2.0, -1.0): 6.45, (-0.5, -1.0): 3.06,
                    (-0.5, -0.5): 6.02, (0.5, 0.5): -7.34, (0.75, 0.75): -22.8}

CONVERGENCE_N = (8, 16, 32, 64, 128, 256, 512)


def _write(path: Path, config: dict, what: str, columns, rows, notes=()):
    from .cli import _fmt
    lines = ["# config: " + json.dumps(config, sort_keys=True), f"# reproduces: {what}"]
    lines += [f"# {n}" for n in notes]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def directions(outdir: Path, cfg):
    from .merton import Preferences
    from .mortality import bundled_table
    from .recursion import consumption_direction, realized_direction
    table = bundled_table("female").from_age(65)
    s = float(table.survival()[0])
    rows = []
    for label, a, r, ref_c, ref_i in DIRECTION_ROWS:
        p = Preferences(a, r)
        rows.append([label, a, r, consumption_direction(p, s, True), consumption_direction(p, s, False),
                     realized_direction(p, table, True), realized_direction(p, table, False), ref_c, ref_i])
    cols = ["case", "alpha", "rho", "collectivised", "individual", "path_collectivised", "path_individual",
            "reference_collectivised", "reference_individual"]
    return _write(outdir / "table1_directions.csv", cfg, "direction of consumption with mu=r=0, beta=1", cols, rows)


def cbd_costs(outdir: Path, cfg):
    from .hjb import cost_of_systematic_risk_cbd
    from .merton import Preferences
    rows = [[a, r, cost_of_systematic_risk_cbd(Preferences(a, r)), ref] for (a, r), ref in CBD_COST_REFERENCE.items()]
    return _write(outdir / "table3_costs.csv", cfg, "cost of systematic longevity risk, one-factor CBD, lambda0=0.01",
                  ["alpha", "rho", "cost_pct", "reference_pct"], rows)


def convergence(outdir: Path, cfg):
    from .merton import MarketParams, Preferences
    from .mortality import bundled_table
    from .recursion import convergence_study
    st = convergence_study(Preferences(-1.0, -1.0), MarketParams(), bundled_table("female").from_age(65), CONVERGENCE_N)
    return _write(outdir / "convergence.csv", cfg, "gap |z_n,0 - z_inf,0| against fund size",
                  ["n", "gap"], [[n, g] for n, g in zip(st.n, st.gap)], [f"loglog_slope: {st.slope:.6f}"])


def heterogeneous(outdir: Path, cfg, paths: int, seed: int):
    from .merton import MarketParams
    from .simulate import SimConfig, random_fund, run_heterogeneous
    res = run_heterogeneous(random_fund(100, seed), MarketParams(), SimConfig(n_paths=paths, seed=seed, n_max=50))
    edges = np.linspace(0.90, 1.05, 16)
    counts, _ = np.histogram(np.clip(res.ratio, edges[0], edges[-1]), bins=edges)
    rows = [[lo, hi, c] for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    notes = [f"median_OR: {np.median(res.ratio):.6f}", f"share_above_0.98: {np.mean(res.ratio > 0.98):.4f}",
             f"max_conservation_error: {res.max_conservation_error:.3e}"]
    return _write(outdir / "fig_heterogeneous_or.csv", cfg, "optimality ratio histogram, 100-member fund, n_max=50",
                  ["bin_lo", "bin_hi", "count"], rows, notes)


def stylised(outdir: Path, cfg):
    from .errors import IllPosedPair
    from .merton import Preferences
    from .stylised import StylisedParams, cost_of_systematic_risk_stylised, wellposedness_class
    sp = StylisedParams(4.0, 1.0, 0.01, 1)
    grid = [v for v in np.round(np.linspace(-2.0, 0.95, 60), 10) if v != 0]
    rows = []
    for a in grid:
        for r in grid:
            p = Preferences(float(a), float(r))
            try:
                cost = cost_of_systematic_risk_stylised(p, sp)
            except IllPosedPair:
                cost = None
            rows.append([a, r, wellposedness_class(p, sp).value, cost])
    return _write(outdir / "fig_stylised_cost.csv", cfg, "stylised cost of systematic risk, a=4, b=1, lambda=0.01",
                  ["alpha", "rho", "class", "cost_pct"], rows)


def annuity(outdir: Path, cfg):
    from .cbd import CBDParams, annuity_rate
    rows = [[r, *annuity_rate(126636.0, CBDParams(), r)] for r in (0.027, 0.0)]
    return _write(outdir / "annuity.csv", cfg, "fair annuity for w0=126636 under CBD mortality",
                  ["r", "annuity", "method"], rows)


def reproduce(outdir: Path, paths: int = 10_000, seed: int = 0) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = {"subcommand": "repro", "format": "csv", "outdir": str(outdir), "paths": paths, "seed": seed}
    return [directions(outdir, cfg), convergence(outdir, cfg), heterogeneous(outdir, cfg, paths, seed),
            stylised(outdir, cfg), annuity(outdir, cfg), cbd_costs(outdir, cfg)]
