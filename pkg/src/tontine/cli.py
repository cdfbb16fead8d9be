"""Command-line entry point.

Every subcommand resolves its configuration as defaults, then the JSON file
given by ``--config``, then explicit flags, and echoes the result as the
first line of its output (``# config: {...}``). Exit codes: 0 success,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError

CBD_COST_PAIRS = ((-10.0, -1.0), (-2.0, -1.0), (-0.5, -1.0), (-0.5, -0.5), (0.5, 0.5), (0.75, 0.75))
MARKET = dict(mu=0.062, r=0.027, sigma=0.15)


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "csv"

    def to_json(self) -> str:
        return json.dumps({"subcommand": self.subcommand, "format": self.format, **self.params},
                          sort_keys=True, default=_json_default)

    @classmethod
    def from_header(cls, line: str) -> "RunConfig":
        """Inverse of the ``# config:`` header line."""
        prefix = "# config: "
        if not line.startswith(prefix):
            raise ValidationError("not a config header")
        d = json.loads(line[len(prefix):])
        sub = d.pop("subcommand")
        fmt = d.pop("format", "csv")
        return cls(sub, d, None, fmt)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def _fund_size(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return "inf"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    try:
        n = int(v)
    except (TypeError, ValueError):
        raise ValidationError(f"fund size must be a positive integer or 'inf', got {v!r}") from None
    if n < 1:
        raise ValidationError("fund size must be >= 1")
    return n


def _grid(v):
    """``"a,b,c"`` or ``"start:stop:num"`` into a list of floats."""
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    s = str(v)
    try:
        if ":" in s:
            lo, hi, num = s.split(":")
            return [float(x) for x in np.linspace(float(lo), float(hi), int(num))]
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse grid {v!r}") from None


def _table(spec, age):
    from .mortality import bundled_table, load_table
    table = bundled_table(spec) if spec in ("female", "male") else load_table(spec)
    return table.from_age(age) if age is not None else table


def _prefs(p, with_beta=True):
    from .merton import Preferences
    if with_beta:
        return Preferences(p["alpha"], p["rho"], beta=p.get("beta", 1.0))
    return Preferences(p["alpha"], p["rho"], delta=p.get("delta", 0.0))


def _mkt(p):
    from .merton import MarketParams
    return MarketParams(p["mu"], p["r"], p["sigma"])


def _hjb_grid(p):
    from .hjb import HJBGridConfig
    return HJBGridConfig(n_lambda=p["n_lambda"], n_time=p["n_time"])


# ---- runners: params -> (columns, rows, extra header lines)

def run_merton(p):
    from .merton import eis, merton_fraction, xi, xi_tilde
    prefs, mkt = _prefs(p), _mkt(p)
    a = merton_fraction(prefs, mkt)
    return ["a_star", "xi", "xi_tilde", "eis"], [[a, xi(prefs, mkt), xi_tilde(mkt, a), eis(prefs, mkt)]], []


def run_recursion(p):
    from .recursion import INF, solve_finite, solve_infinite, wealth_consumption_law
    prefs, mkt = _prefs(p), _mkt(p)
    table = _table(p["mortality"], p["age"])
    n = _fund_size(p["n"])
    if n in ("inf", 1):
        key = INF if n == "inf" else 1
        rec = solve_infinite(prefs, mkt, table, collectivised=key == INF)
        law = wealth_consumption_law(prefs, mkt, table, p["x0"], key, rec)
        mu_X, sig = law.mu_X, law.sigma_X
    else:
        key = n
        rec = solve_finite(n, prefs, mkt, table, with_infinite=False)
        mu_X = sig = [None] * table.times.size
    z, c = rec.z(key), rec.c_star(key)
    rows = [[t, zz, cc, m, s] for t, zz, cc, m, s in zip(table.times, z, c, mu_X, sig)]
    return ["t", "z", "c_star", "mu_X", "sigma_X"], rows, []


def run_simulate(p):
    from .simulate import SimConfig, simulate_homogeneous
    prefs, mkt = _prefs(p), _mkt(p)
    table = _table(p["mortality"], p["age"])
    n = _fund_size(p["n"])
    fan = simulate_homogeneous(prefs, mkt, table, p["x0"], n, SimConfig(n_paths=p["paths"], seed=p["seed"]))
    cols = ["t", "p05", "p50", "p95"]
    rows = [[t, a, b, c] for t, a, b, c in zip(fan.times, fan.percentiles[5], fan.percentiles[50], fan.percentiles[95])]
    if p.get("annuity") is not None:
        cols.append("annuity")
        rows = [r + [p["annuity"]] for r in rows]
    return cols, rows, []


def run_heterogeneous(p):
    from .simulate import SimConfig, random_fund
    from .simulate import run_heterogeneous as run
    members = random_fund(p["members"], p["fund_seed"])
    res = run(members, _mkt(p), SimConfig(n_paths=p["paths"], seed=p["seed"], n_max=p["nmax"]))
    rows = [[i, s, a, b, r] for i, s, a, b, r in zip(res.member_id, res.u_S, res.u_1, res.u_inf, res.ratio)]
    extra = [f"median_OR: {_fmt(float(np.median(res.ratio)))}",
             f"max_conservation_error: {_fmt(res.max_conservation_error)}"]
    return ["member_id", "u_S", "u_1", "u_inf", "OR"], rows, extra


def run_stylised_cost(p):
    from .errors import IllPosedPair
    from .merton import Preferences
    from .stylised import StylisedParams, cost_of_systematic_risk_stylised, wellposedness_class
    sp = StylisedParams(p["a"], p["b"], p["lambda0"], p["k"])
    # alpha = 0 or rho = 0 is outside the preference family; such grid points are skipped
    alphas = [v for v in _grid(p["alpha_grid"]) if abs(v) > 1e-12]
    rhos = [v for v in _grid(p["rho_grid"]) if abs(v) > 1e-12]
    rows = []
    for a in alphas:
        for r in rhos:
            prefs = Preferences(a, r)
            cls = wellposedness_class(prefs, sp)
            try:
                cost = cost_of_systematic_risk_stylised(prefs, sp)
            except IllPosedPair:
                cost = None
            rows.append([a, r, cls.value, cost])
    return ["alpha", "rho", "class", "cost_pct"], rows, []


def run_cbd_solve(p):
    from .hjb import solve_hjb
    s = solve_hjb(_prefs(p, False), _mkt(p), None, _hjb_grid(p), riskless=p["riskless"])
    lam, t, g = s.window()
    every = p["t_every"]
    rows = []
    for i, ti in enumerate(t):
        if every > 0 and not math.isclose(ti / every, round(ti / every), abs_tol=1e-9):
            continue
        rows.extend([l, ti, gv] for l, gv in zip(lam, g[i]))
    A, B = s.fit
    extra = [f"fit: A={_fmt(A)} B={_fmt(B)} max_log_residual={_fmt(s.fit_residual)}",
             "g column holds alpha*g"]
    return ["lambda", "t", "g"], rows, extra


def run_cbd_cost(p):
    from .cbd import CBDParams
    from .hjb import cost_of_systematic_risk_cbd
    from .merton import Preferences
    if p.get("alpha") is not None and p.get("rho") is not None:
        pairs = [(p["alpha"], p["rho"])]
    elif p.get("alpha") is None and p.get("rho") is None:
        pairs = list(CBD_COST_PAIRS)
    else:
        raise ValidationError("give both --alpha and --rho, or neither for the full table")
    cbd = CBDParams(lambda0=p["lambda0"])
    rows = []
    for a, r in pairs:
        cost = cost_of_systematic_risk_cbd(Preferences(a, r, delta=p["delta"]), _mkt(p), cbd, _hjb_grid(p))
        rows.append([a, r, cost])
    return ["alpha", "rho", "cost_pct"], rows, []


def run_cbd_simulate(p):
    from .cbd import CBDParams, simulate_mortality
    from .hjb import simulate_fund, solve_hjb
    cbd = CBDParams(lambda0=p["lambda0"])
    if p["what"] == "mortality":
        fan = simulate_mortality(cbd, p["model"], n_paths=p["paths"], n_steps=p["steps"],
                                 horizon=p["horizon"], seed=p["seed"])
        q = fan.percentiles
    elif p["what"] == "fund":
        prefs = _prefs(p, False)
        surface = solve_hjb(prefs, _mkt(p), cbd, _hjb_grid(p), riskless=False)
        fan = simulate_fund(prefs, _mkt(p), cbd, surface, p["w0"], p["k"], risky=p["risky"],
                            n_paths=p["paths"], n_steps=p["steps"], horizon=p["horizon"], seed=p["seed"],
                            consumption=p["consumption"], scheme=p["scheme"])
        q = fan.percentiles
    else:
        raise ValidationError("--what must be 'fund' or 'mortality'")
    rows = [[t, a, b, c] for t, a, b, c in zip(fan.times, q[5], q[50], q[95])]
    extra = []
    if p["what"] == "fund":
        extra = [f"median_total_consumption: {_fmt(float(np.median(fan.total_consumption)))}",
                 f"median_total_per_initial_member: {_fmt(float(np.median(fan.total_per_initial_member)))}",
                 f"depleted_fraction: {_fmt(fan.depleted_fraction)}"]
    return ["t", "p05", "p50", "p95"], rows, extra


def run_annuity(p):
    from .cbd import CBDParams, annuity_rate
    rate, method = annuity_rate(p["w0"], CBDParams(lambda0=p["lambda0"]), p["r"], method=p["method"],
                                n_paths=p["paths"], seed=p["seed"])
    return ["annuity", "method"], [[rate, method]], []


def run_repro(p):
    from .repro import reproduce
    written = reproduce(Path(p["outdir"]), paths=p["paths"], seed=p["seed"])
    return ["file"], [[str(w)] for w in written], []


# name -> (runner, defaults, help)
COMMANDS = {
    "merton": (run_merton, dict(alpha=-1.0, rho=-1.0, **MARKET), "Merton fraction, growth rates and EIS"),
    "recursion": (run_recursion, dict(alpha=-1.0, rho=-1.0, beta=1.0, **MARKET, mortality="female", age=65,
                                      n="inf", x0=1.0), "value recursion z, c* and the log-wealth law"),
    "simulate": (run_simulate, dict(alpha=-1.0, rho=-1.0, beta=1.0, **MARKET, mortality="female", age=65,
                                    n="inf", x0=126636.0, paths=10_000, seed=0, annuity=None),
                 "consumption fan of a homogeneous fund"),
    "heterogeneous": (run_heterogeneous, dict(**MARKET, members=100, fund_seed=0, paths=10_000, seed=0, nmax=50),
                      "optimality ratios of a random heterogeneous fund"),
    "stylised-cost": (run_stylised_cost, dict(a=4.0, b=1.0, lambda0=0.01, k=1, alpha_grid="-1.5:0.9:9",
                                              rho_grid="-1.5:0.9:9"),
                      "cost of systematic risk in the stylised model"),
    "cbd-solve": (run_cbd_solve, dict(alpha=-2.0, rho=-1.0, delta=0.0, **MARKET, n_lambda=400, n_time=3000,
                                      riskless=False, t_every=10.0), "solve the CBD HJB equation"),
    "cbd-cost": (run_cbd_cost, dict(alpha=None, rho=None, delta=0.0, **MARKET, n_lambda=400, n_time=3000,
                                    lambda0=0.01), "cost of systematic longevity risk under CBD mortality"),
    "cbd-simulate": (run_cbd_simulate, dict(what="fund", model="one_factor", alpha=0.5, rho=0.5, delta=0.0,
                                            **MARKET, n_lambda=400, n_time=3000, lambda0=0.01, w0=126636.0,
                                            k=1, risky=True, consumption="fit", scheme="euler", paths=10_000, steps=90,
                                            horizon=90.0, seed=0),
                     "fan of fund consumption or of the mortality rate"),
    "annuity": (run_annuity, dict(w0=126636.0, r=0.027, lambda0=0.01, method="deterministic", paths=100_000,
                                  seed=0), "actuarially fair annuity under CBD mortality"),
    "repro": (run_repro, dict(outdir="repro_out", paths=10_000, seed=0), "write every reproduced table"),
}

_TYPES = dict(alpha=float, rho=float, beta=float, delta=float, mu=float, r=float, sigma=float, x0=float,
              w0=float, a=float, b=float, lambda0=float, k=int, age=int, paths=int, seed=int, nmax=int,
              members=int, fund_seed=int, n_lambda=int, n_time=int, steps=int, horizon=float, t_every=float,
              annuity=float, n=str, mortality=str, alpha_grid=str, rho_grid=str, method=str, model=str,
              what=str, outdir=str, consumption=str, scheme=str, riskless=bool, risky=bool)


def _bool(v):
    s = str(v).lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {v!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tontine", description="Optimal pooled drawdown under longevity risk.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name, (_, defaults, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS,
                            description=f"{help_}. Flags override --config values.")
        sp.add_argument("--config", help="JSON file with parameter values")
        sp.add_argument("--output", "-o", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        for key, default in defaults.items():
            typ = _TYPES.get(key, str)
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, type=_bool, metavar="BOOL", help=f"default {default}")
            else:
                sp.add_argument(flag, type=typ, help=f"default {default}")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    name = args.subcommand
    defaults = COMMANDS[name][1]
    params = dict(defaults)
    fmt, out = "csv", None
    ns = vars(args)
    if "config" in ns:
        try:
            with open(ns["config"]) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {ns['config']}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {ns['config']} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        if file_cfg.pop("subcommand", name) != name:
            raise ValidationError("config file was written for a different subcommand")
        fmt = file_cfg.pop("format", fmt)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys for {name}: {', '.join(sorted(unknown))}")
        for k, v in file_cfg.items():
            typ = _TYPES.get(k, str)
            if v is not None:
                try:
                    v = _bool(v) if typ is bool else typ(v)
                except (TypeError, ValueError, argparse.ArgumentTypeError):
                    raise ValidationError(f"config key {k}: cannot convert {v!r}") from None
            params[k] = v
    for k in defaults:
        if k in ns:
            params[k] = ns[k]
    fmt = ns.get("format", fmt)
    if fmt not in ("csv", "json"):
        raise ValidationError("format must be csv or json")
    out = ns.get("output", out)
    return RunConfig(name, params, out, fmt)


def render(cfg: RunConfig, columns, rows, extra) -> str:
    if cfg.format == "json":
        doc = {"config": json.loads(cfg.to_json()), "notes": extra, "columns": columns,
               "rows": [[_jsonable(v) for v in r] for r in rows]}
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    lines = [f"# config: {cfg.to_json()}"] + [f"# {e}" for e in extra] + [",".join(columns)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else (str(v) if math.isinf(v) else v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = resolve(args)
        columns, rows, extra = COMMANDS[cfg.subcommand][0](cfg.params)
        text = render(cfg, columns, rows, extra)
    except ValidationError as exc:
        print(f"tontine {args.subcommand}: invalid input: {exc}", file=sys.stderr)
        print(f"run 'tontine {args.subcommand} --help' for the accepted flags", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"tontine {args.subcommand}: numerical failure: {exc}", file=sys.stderr)
        return 3
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
