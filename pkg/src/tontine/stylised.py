"""Stylised mortality ``d lambda = a lambda**2 dt + b lambda**1.5 dW`` with closed-form value.

With ``mu = r = delta = 0`` the reduced HJB equation has the power solution

    alpha * g(lambda) = (lambda * bracket)**exponent,   exponent = alpha (rho - 1) / rho,

    bracket = (k alpha - 1) rho / (alpha (rho - 1)) + a + b**2 (alpha (rho - 1) - rho) / (2 rho),

which is real only when ``bracket > 0``. The value function is
``V = w**alpha * g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import IllPosedPair, RegimeViolation, ValidationError
from .merton import MarketParams, Preferences
from .rng import path_normals


@dataclass(frozen=True)
class StylisedParams:
    a: float = 4.0
    b: float = 1.0
    lambda0: float = 0.01
    k: int = 1

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValidationError("lambda0 must be positive")
        if self.k not in (0, 1):
            raise ValidationError("k must be 0 or 1")

    def drift(self, lam, t=0.0):
        return self.a * np.asarray(lam, dtype=float) ** 2

    def vol(self, lam, t=0.0):
        return self.b * np.asarray(lam, dtype=float) ** 1.5

    def riskless(self) -> "StylisedParams":
        return StylisedParams(self.a, 0.0, self.lambda0, self.k)


class Wellposedness(str, Enum):
    ATTAINED_MAX = "AttainedMax"
    ZERO_VALUE = "ZeroValue"
    ILL_POSED = "IllPosed"


def bracket(prefs: Preferences, sp: StylisedParams) -> float:
    a, rho = prefs.alpha, prefs.rho
    return ((sp.k * a - 1.0) * rho / (a * (rho - 1.0)) + sp.a
            + sp.b**2 * (a * (rho - 1.0) - rho) / (2.0 * rho))


def exponent(prefs: Preferences) -> float:
    return prefs.alpha * (prefs.rho - 1.0) / prefs.rho


@dataclass(frozen=True)
class AnalyticValue:
    bracket: float
    exponent: float
    value: float | None
    classification: Wellposedness


def _check_regime(mkt: MarketParams | None, prefs: Preferences):
    if mkt is not None and (mkt.mu != 0 or mkt.r != 0):
        raise RegimeViolation("the closed form needs mu = r = 0")
    if prefs.delta != 0:
        raise RegimeViolation("the closed form needs delta = 0")


def wellposedness_class(prefs: Preferences, sp: StylisedParams) -> Wellposedness:
    """Attained maximum, zero value, or ill-posed.

    A positive bracket gives a real maximiser. Otherwise opposite-sign
    ``(alpha, rho)`` have supremum zero (the trivial solution) and
    same-sign pairs have no real solution. For ``a = b = 0`` and ``k = 1``
    this is exactly the quadrant picture; for other ``a, b`` it is a
    heuristic.
    """
    if bracket(prefs, sp) > 0:
        return Wellposedness.ATTAINED_MAX
    if prefs.alpha * prefs.rho < 0:
        return Wellposedness.ZERO_VALUE
    return Wellposedness.ILL_POSED


def analytic_h(prefs: Preferences, sp: StylisedParams, lam):
    """``alpha * g`` and its first two lambda-derivatives."""
    br = bracket(prefs, sp)
    if not br > 0:
        raise IllPosedPair(f"bracket {br:.6g} <= 0: no real solution")
    e = exponent(prefs)
    lam = np.asarray(lam, dtype=float)
    h = (lam * br) ** e
    return h, e * h / lam, e * (e - 1.0) * h / lam**2


def analytic_value(prefs: Preferences, sp: StylisedParams, w: float, lam: float | None = None,
                   mkt: MarketParams | None = None) -> AnalyticValue:
    """Closed-form ``V(w, lambda)``; ``value`` is ``None`` unless the bracket is positive."""
    _check_regime(mkt, prefs)
    if not w > 0:
        raise ValidationError("w must be positive")
    lam = sp.lambda0 if lam is None else lam
    br = bracket(prefs, sp)
    e = exponent(prefs)
    cls = wellposedness_class(prefs, sp)
    if cls is not Wellposedness.ATTAINED_MAX:
        return AnalyticValue(br, e, 0.0 if cls is Wellposedness.ZERO_VALUE else None, cls)
    v = w**prefs.alpha * (lam * br) ** e / prefs.alpha
    return AnalyticValue(br, e, float(v), cls)


def cost_of_systematic_risk_stylised(prefs: Preferences, sp: StylisedParams) -> float:
    """Extra initial wealth, in percent, that matches the value without systematic risk.

    Solves ``m**alpha bracket(b)**exponent = bracket(0)**exponent``, so
    ``m = (bracket(0) / bracket(b))**((rho - 1) / rho)``.
    """
    b_sys = bracket(prefs, sp)
    b_det = bracket(prefs, sp.riskless())
    if not (b_sys > 0 and b_det > 0):
        raise IllPosedPair(f"bracket(b)={b_sys:.4g}, bracket(0)={b_det:.4g}: one problem has no real solution")
    rho = prefs.rho
    m = math.exp((rho - 1.0) / rho * (math.log(b_det) - math.log(b_sys)))
    return (m - 1.0) * 100.0


def hjb_residual(prefs: Preferences, sp: StylisedParams, g_fn, lam=None, t: float = 0.0,
                 dg_dt=None) -> float:
    """Max abs residual of the reduced HJB equation for ``g`` on a lambda grid.

    ``g_fn(lam)`` returns ``g`` or a tuple ``(g, g', g'')``. Without
    derivatives they are taken by central differences in ``log lambda``,
    which limits the attainable residual. Points where ``g = 0`` contribute
    zero (the trivial solution).
    """
    lam = np.logspace(-2, 1, 200) if lam is None else np.asarray(lam, dtype=float)
    a, rho = prefs.alpha, prefs.rho
    out = g_fn(lam)
    if isinstance(out, tuple):
        g, g1, g2 = (np.asarray(v, dtype=float) for v in out)
    else:
        g = np.asarray(out, dtype=float)
        eps = 1e-4
        gp = np.asarray(g_fn(lam * math.exp(eps)), dtype=float)
        gm = np.asarray(g_fn(lam * math.exp(-eps)), dtype=float)
        gL = (gp - gm) / (2 * eps)
        gLL = (gp - 2 * g + gm) / eps**2
        g1 = gL / lam
        g2 = (gLL - gL) / lam**2
    gt = 0.0 if dg_dt is None else np.asarray(dg_dt(lam), dtype=float)
    h = a * g
    if np.any(h < 0):
        raise ValidationError("alpha * g must be non-negative")
    nz = h > 0
    hp = np.where(nz, h, 1.0)
    react = np.where(nz, h * ((1.0 / rho - 1.0) * hp ** (rho / ((rho - 1.0) * a)) + lam * (sp.k - 1.0 / a)), 0.0)
    res = react + gt + sp.drift(lam) * g1 + 0.5 * sp.vol(lam) ** 2 * g2
    return float(np.max(np.abs(res)))


@dataclass
class MCValue:
    value: float
    se: float
    tail_bound: float
    n_paths: int


def vnm_value_mc(prefs: Preferences, sp: StylisedParams, w0: float, *, n_paths: int = 20_000,
                 seed: int = 0, horizon: float = 12.0, n_steps: int = 6000) -> MCValue:
    """Monte Carlo value of the closed-form feedback policy when ``alpha = rho``.

    Uses the mortality clock ``ds = lambda dt``, in which ``lambda`` is a
    geometric Brownian motion and sampled exactly. Under the policy
    ``c = w * bracket * lambda`` (``mu = r = 0``, nothing in the stock)
    wealth is ``w0 exp((k - bracket) s)`` and the survival-discounted utility
    is ``(1/rho) bracket**rho w0**rho integral e**(-kappa s) lambda_s**(rho - 1) ds``
    with ``kappa = 1 - rho (k - bracket)``. The integral is truncated at
    ``horizon`` in ``s``; ``tail_bound`` is the neglected part evaluated with the
    closed-form mean of ``lambda_s**(rho - 1)``.
    """
    a_, rho = prefs.alpha, prefs.rho
    if a_ != rho:
        raise ValidationError("vnm_value_mc needs alpha = rho")
    if wellposedness_class(prefs, sp) is not Wellposedness.ATTAINED_MAX:
        raise IllPosedPair("the policy is only defined when the bracket is positive")
    br = bracket(prefs, sp)
    kappa = 1.0 - rho * (sp.k - br)
    ds = horizon / n_steps
    s = np.linspace(0.0, horizon, n_steps + 1)
    gamma = kappa - (rho - 1.0) * (sp.a - 0.5 * sp.b**2) - 0.5 * (rho - 1.0) ** 2 * sp.b**2
    tail = abs(sp.lambda0 ** (rho - 1.0) * math.exp(-gamma * horizon) / gamma) if gamma > 0 else math.inf
    pref = br**rho * w0**rho / rho
    vals = np.empty(n_paths)
    chunk = 2048
    for start in range(0, n_paths, chunk):
        stop = min(n_paths, start + chunk)
        z = path_normals(seed, stop, n_steps, stream=31, start=start)
        logl = np.empty((stop - start, n_steps + 1))
        logl[:, 0] = math.log(sp.lambda0)
        logl[:, 1:] = math.log(sp.lambda0) + np.cumsum((sp.a - 0.5 * sp.b**2) * ds + sp.b * math.sqrt(ds) * z, axis=1)
        f = np.exp(-kappa * s[None, :] + (rho - 1.0) * logl)
        vals[start:stop] = pref * np.trapezoid(f, s, axis=1)
    return MCValue(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths)), abs(pref) * tail, n_paths)


def vnm_value_deterministic(prefs: Preferences, sp: StylisedParams, w0: float, horizon: float | None = None) -> float:
    """``b = 0`` value of the feedback policy by quadrature along the explicit lambda path.

    With ``b = 0``, ``lambda_t = lambda0 / (1 - a lambda0 t)`` (explosion at
    ``1 / (a lambda0)``) and the policy gives ``w_t = w0 (lambda_t/lambda0)**((k - bracket)/a)``.
    """
    from scipy.integrate import quad
    if prefs.alpha != prefs.rho or sp.b != 0:
        raise ValidationError("needs alpha = rho and b = 0")
    br = bracket(prefs, sp)
    rho, l0, a = prefs.rho, sp.lambda0, sp.a
    t_exp = 1.0 / (a * l0) if a > 0 else math.inf
    T = t_exp if horizon is None else min(horizon, t_exp)

    def integrand(t):
        lam = l0 / (1.0 - a * l0 * t) if a != 0 else l0
        ratio = lam / l0
        s = math.log(ratio) / a if a != 0 else l0 * t
        w = w0 * math.exp((sp.k - br) * s)
        return math.exp(-s) * (br * lam * w) ** rho / rho

    val, _ = quad(integrand, 0.0, T, limit=400)
    return float(val)
