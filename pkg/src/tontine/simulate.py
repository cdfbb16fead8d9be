"""Monte Carlo of the discrete-time optimal strategy.

Homogeneous funds are stepped with the exact lognormal law of wealth per
survivor. Heterogeneous funds follow the pooling rule: each survivor acts
as if in a homogeneous fund of the current size (or an infinite one beyond
``n_max``), and the wealth of those who die is shared among survivors in
proportion to ``(1 - s) * wealth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominator, ValidationError
from .merton import MarketParams, Preferences, merton_fraction, xi_tilde
from .mortality import MortalityTable, bundled_table
from .recursion import INF, _as_n, solve_finite, solve_infinite
from .rng import block_generator, path_normals, path_uniforms

MARKET_STREAM = 0
DEATH_STREAM = 1
FUND_STREAM = 99


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    seed: int = 0
    n_max: int = 50
    delta_t: float = 1.0
    percentiles: tuple = (5, 50, 95)
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1")


@dataclass
class Fan:
    times: np.ndarray
    percentiles: dict
    log_wealth: np.ndarray = field(repr=False)
    consumption: np.ndarray = field(repr=False)


def simulate_homogeneous(prefs: Preferences, mkt: MarketParams, table: MortalityTable, x0: float,
                         n=INF, cfg: SimConfig = SimConfig()) -> Fan:
    """Consumption per survivor for a homogeneous fund with ``n = 1`` or ``inf``."""
    n = _as_n(n)
    if n not in (1, INF):
        raise ValidationError("exact path simulation needs n = 1 or n = inf")
    if not x0 > 0:
        raise ValidationError("x0 must be positive")
    C = 1.0 if n == INF else 0.0
    rec = solve_infinite(prefs, mkt, table, collectivised=n == INF)
    cstar = rec.c_star(n)
    a_star = merton_fraction(prefs, mkt)
    drift = xi_tilde(mkt, a_star) * table.delta_t
    vol = a_star * mkt.sigma * math.sqrt(table.delta_t)
    with np.errstate(divide="ignore"):
        log_s = np.log(table.survival())
        log_keep = np.log1p(-cstar)
    T = table.times.size
    if cfg.antithetic:
        # second half of the paths mirrors the first
        half = path_normals(cfg.seed, -(-cfg.n_paths // 2), max(T - 1, 1), stream=MARKET_STREAM)
        Z = np.concatenate([half, -half])[:cfg.n_paths]
    else:
        Z = path_normals(cfg.seed, cfg.n_paths, max(T - 1, 1), stream=MARKET_STREAM)
    logX = np.empty((cfg.n_paths, T))
    logX[:, 0] = math.log(x0)
    for j in range(T - 1):
        logX[:, j + 1] = logX[:, j] - C * log_s[j] + log_keep[j] + drift + vol * Z[:, j]
    cons = cstar[None, :] * np.exp(logX)
    pct = {p: np.percentile(cons, p, axis=0) for p in cfg.percentiles}
    return Fan(table.times, pct, logX, cons)


@dataclass(frozen=True)
class FundMember:
    """A member with power utility ``c**alpha / alpha``."""

    id: int
    alpha: float
    wealth: float
    table: MortalityTable
    alive: bool = True
    age: int | None = None
    sex: str | None = None

    def __post_init__(self):
        if self.wealth < 0:
            raise ValidationError("wealth must be non-negative")

    @property
    def prefs(self) -> Preferences:
        return Preferences(self.alpha, self.alpha)


def random_fund(n: int = 100, seed: int = 0, alpha_range=(-1.5, -0.5), wealth_range=(0.5, 1.5),
                ages=(60, 69)) -> list[FundMember]:
    """Random population: uniform alpha and wealth, integer retirement age, fair-coin sex."""
    g = block_generator(seed, FUND_STREAM, 0)
    alphas = g.uniform(*alpha_range, size=n)
    wealth = g.uniform(*wealth_range, size=n)
    age = g.integers(ages[0], ages[1] + 1, size=n)
    male = g.random(n) < 0.5
    tables = {s: bundled_table(s) for s in ("female", "male")}
    out = []
    for i in range(n):
        sex = "male" if male[i] else "female"
        out.append(FundMember(i, float(alphas[i]), float(wealth[i]), tables[sex].from_age(int(age[i])),
                              age=int(age[i]), sex=sex))
    return out


def homogeneous_expected_utility(member: FundMember, n=INF, mkt: MarketParams = MarketParams()) -> float:
    """Expected lifetime utility ``(x z_{n,0})**alpha / alpha`` in a homogeneous fund of size ``n``."""
    n = _as_n(n)
    prefs = member.prefs
    if n == INF:
        lz = solve_infinite(prefs, mkt, member.table).log_z[INF][0]
    elif n == 1:
        lz = solve_infinite(prefs, mkt, member.table, collectivised=False).log_z[1][0]
    else:
        lz = solve_finite(n, prefs, mkt, member.table, with_infinite=False).log_z[n][0]
    a = member.alpha
    return math.exp(a * (math.log(member.wealth) + lz)) / a


def optimality_ratio(u_S, u_1, u_inf):
    """``(u_S - u_1) / (u_inf - u_1)``."""
    u_S, u_1, u_inf = (np.asarray(v, dtype=float) for v in (u_S, u_1, u_inf))
    den = u_inf - u_1
    if np.any(den == 0):
        raise DegenerateDenominator("u_inf equals u_1; the ratio is undefined")
    out = (u_S - u_1) / den
    return float(out) if out.ndim == 0 else out


@dataclass
class HeterogeneousResult:
    """Per-member utilities from a heterogeneous fund run.

    ``u_S`` uses the pooled-fund path of each member (same market, same
    death time) as a control variate; ``u_S_raw`` is the plain sample mean.
    """

    member_id: np.ndarray
    u_S: np.ndarray
    u_S_raw: np.ndarray
    se: np.ndarray
    se_raw: np.ndarray
    u_1: np.ndarray
    u_inf: np.ndarray
    ratio: np.ndarray
    max_conservation_error: float
    max_budget_excess: float
    empty_fund_paths: int


def _member_tables(members, mkt, n_max, T):
    """``log_z[m, k, t]`` for fund sizes k = 1..n_max, with k = n_max + 1 meaning inf."""
    M = len(members)
    lz = np.zeros((M, n_max + 2, T))
    surv = np.zeros((M, T))
    for m, mem in enumerate(members):
        rec = solve_finite(n_max, mem.prefs, mkt, mem.table)
        Tm = mem.table.times.size
        for k in range(1, n_max + 1):
            lz[m, k, :Tm] = rec.log_z[k]
        lz[m, n_max + 1, :Tm] = rec.log_z[INF]
        surv[m, :Tm] = mem.table.survival()
    return lz, surv


def _death_index(members, U):
    """Index of the last grid time each member is alive, by inverse transform."""
    out = np.empty(U.shape, dtype=int)
    for m, mem in enumerate(members):
        cdf = np.cumsum(mem.table.p)
        out[:, m] = np.minimum(np.searchsorted(cdf, U[:, m] * cdf[-1], side="right"), len(mem.table.p) - 1)
    return out


def run_heterogeneous(members: list[FundMember], mkt: MarketParams = MarketParams(),
                      cfg: SimConfig = SimConfig()) -> HeterogeneousResult:
    """Simulate the pooled heterogeneous fund and estimate each member's utility."""
    if not members:
        raise ValidationError("the fund needs at least one member")
    if len({m.table.delta_t for m in members}) != 1:
        raise ValidationError("members must share the time step")
    dt = members[0].table.delta_t
    M = len(members)
    P = cfg.n_paths
    T = max(m.table.times.size for m in members)
    n_max = cfg.n_max
    lz, surv = _member_tables(members, mkt, n_max, T)
    alpha = np.array([m.alpha for m in members])
    q = alpha / (1.0 - alpha)
    a_star = np.array([merton_fraction(m.prefs, mkt) for m in members])
    drift = np.array([xi_tilde(mkt, a) for a in a_star]) * dt
    vol = a_star * mkt.sigma * math.sqrt(dt)

    Z = path_normals(cfg.seed, P, max(T - 1, 1), stream=MARKET_STREAM)
    U = path_uniforms(cfg.seed, P, (M,), stream=DEATH_STREAM)
    death = _death_index(members, U)

    X = np.tile(np.array([m.wealth for m in members], dtype=float), (P, 1))
    Xinf = X.copy()
    util = np.zeros((P, M))
    util_inf = np.zeros((P, M))
    cons_err = 0.0
    budget = 0.0
    empty = 0
    rows = np.arange(M)
    for t in range(T):
        alive = death >= t
        if not alive.any():
            break
        n_t = alive.sum(axis=1)
        k = np.where(n_t <= n_max, n_t, n_max + 1)
        logz = lz[rows[None, :], k[:, None], t]
        cstar = np.exp(-q[None, :] * logz)
        c = np.where(alive, cstar * X, 0.0)
        budget = max(budget, float(np.max(c - X, initial=0.0)))
        cinf = np.where(alive, np.exp(-q * lz[:, n_max + 1, t])[None, :] * Xinf, 0.0)
        with np.errstate(divide="ignore"):
            util += np.where(alive, c**alpha / alpha, 0.0)
            util_inf += np.where(alive, cinf**alpha / alpha, 0.0)
        if t == T - 1:
            break
        growth = np.exp(drift[None, :] + vol[None, :] * Z[:, t][:, None])
        Xring = np.where(alive, (X - c) * growth, 0.0)
        survive = death >= t + 1
        dying = alive & ~survive
        s_t = surv[:, t][None, :]
        gamma = np.where(survive, (1.0 - s_t) * Xring, 0.0)
        pot = np.where(dying, Xring, 0.0).sum(axis=1)
        gsum = gamma.sum(axis=1)
        share = np.where(gsum[:, None] > 0, gamma / np.where(gsum > 0, gsum, 1.0)[:, None], 0.0)
        # no positive contribution: split by wealth, then equally
        fallback = (gsum <= 0) & (pot > 0)
        if fallback.any():
            wsum = np.where(survive, Xring, 0.0).sum(axis=1)
            by_w = np.where(survive, Xring, 0.0) / np.where(wsum > 0, wsum, 1.0)[:, None]
            eq = survive / np.maximum(survive.sum(axis=1), 1)[:, None]
            alt = np.where((wsum > 0)[:, None], by_w, eq)
            share = np.where(fallback[:, None], alt, share)
        newX = np.where(survive, Xring + pot[:, None] * share, 0.0)
        before = Xring.sum(axis=1)
        after = newX.sum(axis=1)
        has_heirs = survive.any(axis=1)
        empty += int(np.sum(alive.any(axis=1) & ~has_heirs))
        scale = np.maximum(np.abs(before), 1e-300)
        err = np.where(has_heirs, np.abs(after - before) / scale, 0.0)
        cons_err = max(cons_err, float(err.max(initial=0.0)))
        X = newX
        s_safe = np.where(s_t > 0, s_t, 1.0)
        Xinf = np.where(survive, (Xinf - cinf) * growth / s_safe, 0.0)

    u_1 = np.array([homogeneous_expected_utility(m, 1, mkt) for m in members])
    u_inf = np.array([homogeneous_expected_utility(m, INF, mkt) for m in members])
    raw = util.mean(axis=0)
    se_raw = util.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(M)
    diff = util - util_inf
    u_S = u_inf + diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(M)
    ratio = optimality_ratio(u_S, u_1, u_inf)
    return HeterogeneousResult(np.array([m.id for m in members]), u_S, raw, se, se_raw, u_1, u_inf,
                               np.atleast_1d(ratio), cons_err, budget, empty)
