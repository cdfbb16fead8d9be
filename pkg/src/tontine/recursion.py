"""Backward Epstein--Zin recursions for pooled drawdown funds.

For a fund of ``n`` identical members the optimal value per unit wealth
``z_{n,t}`` satisfies

    z_{n,t}**q = 1 + theta_{n,t}**q,    q = rho / (1 - rho),

with ``theta`` built from next period's values, and the optimal fraction of
wealth consumed is ``c* = z**(rho / (rho - 1)) = 1 / (1 + theta**q)``.
Everything is carried in logs: ``log z = logaddexp(0, q log theta) / q``.
``n = inf`` is the fully pooled fund, ``n = 1`` an individual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateConsumption, NumericOverflow, ValidationError
from .merton import MarketParams, Preferences, merton_fraction, xi, xi_tilde
from .mortality import MortalityTable, log_binomial_transition

INF = math.inf


def _as_n(n):
    if n in ("inf", "infinity") or n == INF:
        return INF
    n = int(n)
    if n < 1:
        raise ValidationError("fund size n must be >= 1")
    return n


def _log_s(table: MortalityTable) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(table.survival())


@dataclass
class ValueRecursion:
    """Solved recursion on the grid ``times``.

    ``log_z`` maps a fund size (an int or ``inf``) to the array of
    ``log z_{n,t}`` over ``times``.
    """

    times: np.ndarray
    prefs: Preferences
    log_z: dict = field(repr=False)

    def z(self, n=INF) -> np.ndarray:
        return np.exp(self.log_z[_as_n(n)])

    def c_star(self, n=INF) -> np.ndarray:
        q = self.prefs.rho / (1.0 - self.prefs.rho)
        return np.exp(-q * self.log_z[_as_n(n)])

    @property
    def sizes(self):
        return sorted(self.log_z, key=lambda k: (k == INF, k))


def _log_z_from_log_theta(log_theta, q, t):
    with np.errstate(over="ignore", invalid="ignore"):
        lz = np.logaddexp(0.0, q * log_theta) / q
    if not np.all(np.isfinite(lz)):
        raise NumericOverflow(f"z left the representable range at t={t}")
    return lz


def _log_phi0(prefs: Preferences, mkt: MarketParams, dt: float) -> float:
    return math.log(prefs.beta) / prefs.rho + xi(prefs, mkt) * dt


def solve_infinite(prefs: Preferences, mkt: MarketParams, table: MortalityTable,
                   collectivised: bool = True) -> ValueRecursion:
    """Closed recursion for ``n = inf`` (or ``n = 1`` if not collectivised).

    ``theta_t = beta**(1/rho) exp(xi dt) s_t**(1/alpha - C) z_{t+dt}`` with
    ``C = 1`` for the pooled fund and ``C = 0`` for an individual.
    """
    a, rho = prefs.alpha, prefs.rho
    q = rho / (1.0 - rho)
    C = 1.0 if collectivised else 0.0
    times = table.times
    log_s = _log_s(table)
    lphi0 = _log_phi0(prefs, mkt, table.delta_t)
    lz = np.zeros(times.size)
    for j in range(times.size - 2, -1, -1):
        with np.errstate(invalid="ignore"):
            log_theta = lphi0 + (1.0 / a - C) * log_s[j] + lz[j + 1]
        lz[j] = _log_z_from_log_theta(log_theta, q, times[j])
    return ValueRecursion(times, prefs, {INF if collectivised else 1: lz})


def solve_finite(n_max: int, prefs: Preferences, mkt: MarketParams, table: MortalityTable,
                 with_infinite: bool = True) -> ValueRecursion:
    """Recursion for every fund size ``1..n_max``.

    ``theta_{n,t} = beta**(1/rho) exp(xi dt)
    (sum_i (i/n)**(1-alpha) S_t(n,i) z_{i,t+dt}**alpha)**(1/alpha)``,
    summed over ``i = 1..n`` survivors in log space.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    a, rho = prefs.alpha, prefs.rho
    q = rho / (1.0 - rho)
    times = table.times
    surv = table.survival()
    lphi0 = _log_phi0(prefs, mkt, table.delta_t)
    ns = np.arange(1, n_max + 1)
    N, I = np.meshgrid(ns, ns, indexing="ij")
    valid = I <= N
    log_frac = np.where(valid, (1.0 - a) * np.log(I / N), -np.inf)
    lz = np.zeros((n_max, times.size))
    for j in range(times.size - 2, -1, -1):
        s = surv[j]
        logS = np.where(valid, log_binomial_transition(np.where(valid, N, I), I, s), -np.inf)
        terms = log_frac + logS + a * lz[:, j + 1][None, :]
        with np.errstate(divide="ignore"):
            lsum = logsumexp(np.where(valid, terms, -np.inf), axis=1)
        with np.errstate(invalid="ignore"):
            log_theta = lphi0 + lsum / a
        lz[:, j] = _log_z_from_log_theta(log_theta, q, times[j])
    out = {int(n): lz[n - 1] for n in ns}
    if with_infinite:
        out.update(solve_infinite(prefs, mkt, table).log_z)
    return ValueRecursion(times, prefs, out)


def consumption_fraction(z, rho: float):
    """Optimal fraction of wealth consumed, ``z**(rho / (rho - 1))``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise NumericOverflow("z must be strictly positive")
    out = z ** (rho / (rho - 1.0))
    return float(out) if out.ndim == 0 else out


@dataclass
class LognormalLaw:
    """Normal laws of log wealth and log consumption per survivor."""

    times: np.ndarray
    mu_X: np.ndarray
    sigma_X: np.ndarray
    mu_c: np.ndarray
    sigma_c: np.ndarray
    C_flag: int


def wealth_consumption_law(prefs: Preferences, mkt: MarketParams, table: MortalityTable, x0: float,
                           n=INF, recursion: ValueRecursion | None = None) -> LognormalLaw:
    """Exact laws of ``log X_t`` and ``log c_t`` for ``n = 1`` or ``n = inf``."""
    n = _as_n(n)
    if n not in (1, INF):
        raise ValidationError("closed-form laws exist only for n = 1 and n = inf")
    if not x0 > 0:
        raise ValidationError("x0 must be positive")
    C = 1 if n == INF else 0
    rec = recursion if recursion is not None else solve_infinite(prefs, mkt, table, collectivised=bool(C))
    lz = rec.log_z[n]
    rho = prefs.rho
    q = rho / (1.0 - rho)
    times = table.times
    dt = table.delta_t
    a_star = merton_fraction(prefs, mkt)
    xt = xi_tilde(mkt, a_star)
    log_s = _log_s(table)
    mu = np.empty(times.size)
    mu[0] = math.log(x0)
    for j in range(times.size - 1):
        # 1 - c* = theta**q / z**q = 1 - exp(-q log z)
        keep = -np.expm1(-q * lz[j])
        if not keep > 0:
            raise DegenerateConsumption(f"all wealth consumed at t={times[j]} before the horizon")
        mu[j + 1] = mu[j] - C * log_s[j] + math.log(keep) + xt * dt
    elapsed = times - times[0]
    sig = mkt.sigma * abs(a_star) * np.sqrt(elapsed)
    mu_c = -q * lz + mu
    return LognormalLaw(times, mu, sig, mu_c, sig.copy(), C)


def mean_log_consumption_growth(prefs: Preferences, mkt: MarketParams, table: MortalityTable, n=INF) -> np.ndarray:
    """``E[log c_{t+dt} - log c_t]`` per step, from the one-step survival and phi."""
    n = _as_n(n)
    C = 1.0 if n == INF else 0.0
    rho = prefs.rho
    log_s = _log_s(table)[:-1]
    a_star = merton_fraction(prefs, mkt)
    log_phi = _log_phi0(prefs, mkt, table.delta_t) + (1.0 / prefs.alpha - C) * log_s
    return -C * log_s + rho / (1.0 - rho) * log_phi + xi_tilde(mkt, a_star) * table.delta_t


def eis_finite_difference(prefs: Preferences, mkt: MarketParams, table: MortalityTable,
                          eps: float = 1e-4, n=INF) -> float:
    """Central difference in ``r`` of mean log-consumption growth per year."""
    from dataclasses import replace
    up = mean_log_consumption_growth(prefs, replace(mkt, r=mkt.r + eps), table, n)
    dn = mean_log_consumption_growth(prefs, replace(mkt, r=mkt.r - eps), table, n)
    return float(np.mean((up - dn) / (2 * eps)) / table.delta_t)


def consumption_direction(prefs: Preferences, s: float, collectivised: bool) -> str:
    """Direction of deterministic consumption when ``mu = r = 0`` and ``beta = 1``.

    Consumption changes by the factor ``s**((1/alpha - C/rho) rho/(1-rho))``
    each step.
    """
    if not 0.0 < s <= 1.0:
        raise ValidationError("s must lie in (0, 1]")
    a, rho = prefs.alpha, prefs.rho
    C = 1.0 if collectivised else 0.0
    expo = (1.0 / a - C / rho) * rho / (1.0 - rho)
    slope = expo * math.log(s)
    if slope == 0.0:
        return "Constant"
    return "Increasing" if slope > 0 else "Decreasing"


@dataclass
class ConvergenceStudy:
    n: np.ndarray
    gap: np.ndarray
    slope: float
    intercept: float


def convergence_study(prefs: Preferences, mkt: MarketParams, table: MortalityTable, n_list) -> ConvergenceStudy:
    """Gap ``|z_{n,0} - z_{inf,0}|`` over ``n_list`` and its log-log slope."""
    n_list = np.asarray(sorted(int(v) for v in n_list))
    if n_list.size < 4:
        raise ValidationError("need at least four fund sizes")
    rec = solve_finite(int(n_list[-1]), prefs, mkt, table)
    z_inf = math.exp(rec.log_z[INF][0])
    gap = np.array([abs(math.exp(rec.log_z[int(n)][0]) - z_inf) for n in n_list])
    if np.all(gap > 0):
        slope, intercept = np.polyfit(np.log(n_list), np.log(gap), 1)
    else:
        slope, intercept = 0.0, -np.inf
    return ConvergenceStudy(n_list, gap, float(slope), float(intercept))


def realized_direction(prefs: Preferences, table: MortalityTable, collectivised: bool, tol: float = 1e-12) -> str:
    """Direction of the consumption path produced by the recursion with ``mu = r = 0``."""
    mkt = MarketParams(mu=0.0, r=0.0, sigma=1.0)
    n = INF if collectivised else 1
    rec = solve_infinite(prefs, mkt, table, collectivised=collectivised)
    law = wealth_consumption_law(prefs, mkt, table, 1.0, n, rec)
    d = np.diff(law.mu_c)
    if np.all(np.abs(d) <= tol):
        return "Constant"
    if np.all(d > tol):
        return "Increasing"
    if np.all(d < -tol):
        return "Decreasing"
    return "Mixed"
