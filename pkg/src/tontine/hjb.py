"""Crank--Nicolson solver for the reduced HJB equation of insured drawdown.

With ``V(t, lambda, w) = w**alpha * g(lambda, t)`` the HJB equation reduces
to a scalar PDE for ``g``. We solve for the positive quantity
``h = alpha * g`` (so ``V = w**alpha * h / alpha``), in the variables
``L = log(lambda)`` and ``u = log(h)``:

    u_t + A u_L + D (u_LL + u_L**2 - u_L)
        + alpha * (xi - delta/rho + (1/rho - 1) exp(p u) + lambda (k - 1/alpha)) = 0

with ``A = drift / lambda``, ``D = vol**2 / (2 lambda**2)`` and
``p = rho / (alpha (rho - 1))``. ``exp(p u)`` is the optimal consumption
rate per unit wealth. The equation is integrated backwards from the payoff
``h(T_f) = lambda**(alpha (rho - 1) / rho)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .cbd import CBDParams
from .errors import NonConvergence, PositivityLoss, ValidationError
from .merton import MarketParams, Preferences, merton_fraction, xi
from .rng import path_normals


@dataclass(frozen=True)
class HJBGridConfig:
    n_lambda: int = 400
    n_time: int = 3000
    theta: float = 0.5
    domain: tuple = (0.001, 20.0)
    report_window: tuple = (0.01, 10.0)
    fit_window: tuple = (0.01, 1.0)
    t_final: float = 150.0
    tol: float = 1e-10
    max_iter: int = 50
    store_every: int = 10

    def __post_init__(self):
        lo, hi = self.domain
        rlo, rhi = self.report_window
        if not (0 < lo < rlo < rhi < hi):
            raise ValidationError("domain must strictly contain the report window")
        if self.n_lambda < 100:
            raise ValidationError("n_lambda must be >= 100")
        if self.n_time < 1 or self.t_final <= 0:
            raise ValidationError("need a positive horizon and at least one time step")
        if self.theta != 0.5:
            raise ValidationError("only the Crank-Nicolson weight theta=0.5 is supported")

    def refined(self, factor: int = 2) -> "HJBGridConfig":
        """Grid with the lambda and time spacings divided by ``factor``."""
        from dataclasses import replace
        return replace(self, n_lambda=(self.n_lambda - 1) * factor + 1, n_time=self.n_time * factor,
                       store_every=self.store_every * factor)


@dataclass
class GSurface:
    """Solution ``h = alpha * g`` on the full grid.

    ``log_g[i, j]`` is ``log h`` at ``t_grid[i]`` and ``lambda_grid[j]``;
    ``fit`` is ``(A, B)`` with ``h(lambda, 0) ~ A * lambda**B`` on the fit
    window, and ``fit_residual`` the max abs log-residual of that fit.
    """

    lambda_grid: np.ndarray
    t_grid: np.ndarray
    log_g: np.ndarray
    fit: tuple
    fit_residual: float
    exponent: float
    alpha: float
    rho: float
    riskless: bool
    boundary_slopes: np.ndarray = field(repr=False)
    report_window: tuple = (0.01, 10.0)

    @property
    def g(self) -> np.ndarray:
        return np.exp(self.log_g)

    def at(self, lam, t: float = 0.0):
        """``h`` at time ``t`` (nearest stored slice), cubic in ``log lambda``."""
        i = int(np.argmin(np.abs(self.t_grid - t)))
        spline = CubicSpline(np.log(self.lambda_grid), self.log_g[i])
        return np.exp(spline(np.log(np.asarray(lam, dtype=float))))

    def window(self):
        """Grid restricted to the report window."""
        lo, hi = self.report_window
        m = (self.lambda_grid >= lo) & (self.lambda_grid <= hi)
        return self.lambda_grid[m], self.t_grid, self.g[:, m]

    def fitted(self, lam):
        A, B = self.fit
        return A * np.asarray(lam, dtype=float) ** B


class _Problem:
    """Discretised right-hand side ``F(u, t)`` of ``u_tau = F`` (tau = T_f - t)."""

    def __init__(self, prefs, mkt, model, grid, riskless, k):
        a, rho = prefs.alpha, prefs.rho
        self.L = np.linspace(math.log(grid.domain[0]), math.log(grid.domain[1]), grid.n_lambda)
        self.lam = np.exp(self.L)
        self.h = self.L[1] - self.L[0]
        self.model = model
        self.riskless = riskless
        self.p = rho / (a * (rho - 1.0))
        self.c_nl = a * (1.0 / rho - 1.0)
        self.r0 = a * (xi(prefs, mkt) - prefs.delta / rho)
        self.r_lam = a * k - 1.0

    def coefs(self, t):
        A = self.model.drift(self.lam, t) / self.lam
        if self.riskless:
            D = np.zeros_like(self.lam)
        else:
            D = 0.5 * (self.model.vol(self.lam, t) / self.lam) ** 2
        return A, D

    def _derivs(self, u, sl, sr):
        h = self.h
        ext = np.empty(u.size + 2)
        ext[1:-1] = u
        # sl=None: outflow end, linear extrapolation instead of a slope condition
        ext[0] = 2 * u[0] - u[1] if sl is None else u[1] - 2 * h * sl
        ext[-1] = u[-2] + 2 * h * sr
        ux = (ext[2:] - ext[:-2]) / (2 * h)
        uxx = (ext[2:] - 2 * u + ext[:-2]) / h**2
        return ux, uxx

    def F(self, u, t, sl, sr, coefs=None):
        A, D = self.coefs(t) if coefs is None else coefs
        ux, uxx = self._derivs(u, sl, sr)
        return (D * (uxx + ux * ux - ux) + A * ux + self.r0 + self.r_lam * self.lam
                + self.c_nl * np.exp(self.p * u))

    def jacobian(self, u, t, sl, sr, coefs=None):
        """Tridiagonal dF/du in banded storage (upper, diag, lower)."""
        A, D = self.coefs(t) if coefs is None else coefs
        h = self.h
        ux, _ = self._derivs(u, sl, sr)
        up = D * (1 / h**2 + (2 * ux - 1) / (2 * h)) + A / (2 * h)
        lo = D * (1 / h**2 - (2 * ux - 1) / (2 * h)) - A / (2 * h)
        react = self.c_nl * self.p * np.exp(self.p * u)
        diag = -2 * D / h**2 + react
        if sl is None:
            # extrapolated end: ux = (u1 - u0)/h, uxx = 0
            up[0] = (D[0] * (2 * ux[0] - 1) + A[0]) / h
            diag[0] = -up[0] + react[0]
        else:
            # ghost node with fixed slope: the inner neighbour counts twice
            up[0] = 2 * D[0] / h**2
        lo[-1] = 2 * D[-1] / h**2
        ab = np.zeros((3, u.size))
        ab[0, 1:] = up[:-1]
        ab[1] = diag
        ab[2, :-1] = lo[1:]
        return ab


def solve_hjb(prefs: Preferences, mkt: MarketParams = MarketParams(), model=None,
              grid: HJBGridConfig = HJBGridConfig(), riskless: bool = False, k: int = 1,
              boundary_slopes=None) -> GSurface:
    """Backward Crank--Nicolson solve of the reduced HJB equation.

    ``model`` supplies ``drift(lam, t)`` and ``vol(lam, t)``; it defaults to
    the one-factor CBD model. The riskless pass (``vol = 0``) is first order
    in lambda and needs a condition only at the inflow end: the slope of
    ``log h`` in ``log lambda`` is fixed to the payoff exponent at the upper
    end and extrapolated linearly at the lower end. The full pass takes
    its boundary slopes from the riskless solution at every time step
    (one-sided differences), computing that solution first unless
    ``boundary_slopes`` of shape ``(n_time + 1, 2)`` is given.

    Each step takes an improved-Euler predictor and then Newton iterations
    on the Crank--Nicolson equations until the update is below ``grid.tol``.
    """
    if prefs.alpha * prefs.rho < 0:
        raise ValidationError("alpha and rho must have the same sign; the value function is zero otherwise")
    model = CBDParams() if model is None else model
    exponent = prefs.alpha * (prefs.rho - 1.0) / prefs.rho
    if not riskless and boundary_slopes is None:
        boundary_slopes = solve_hjb(prefs, mkt, model, grid, riskless=True, k=k).boundary_slopes
    prob = _Problem(prefs, mkt, model, grid, riskless, k)
    n_t = grid.n_time
    times = np.linspace(0.0, grid.t_final, n_t + 1)

    u = exponent * prob.L
    slopes = np.empty((n_t + 1, 2))
    store_idx = set(range(0, n_t + 1, grid.store_every)) | {0}
    stored = {n_t: u.copy()} if n_t in store_idx else {}

    def bc(n):
        if riskless:
            return None, exponent
        return boundary_slopes[n, 0], boundary_slopes[n, 1]

    slopes[n_t] = _one_sided_slopes(u, prob.h)
    for n in range(n_t, 0, -1):
        u = _step(prob, grid, u, times[n], times[n - 1], bc(n), bc(n - 1))
        slopes[n - 1] = _one_sided_slopes(u, prob.h)
        if n - 1 in store_idx:
            stored[n - 1] = u.copy()

    order = sorted(stored)
    log_g = np.array([stored[i] for i in order])
    t_grid = times[order]
    lam = prob.lam
    m = (lam >= grid.fit_window[0]) & (lam <= grid.fit_window[1])
    B, logA = np.polyfit(prob.L[m], log_g[0, m], 1)
    resid = float(np.max(np.abs(log_g[0, m] - (logA + B * prob.L[m]))))
    return GSurface(lam, t_grid, log_g, (float(np.exp(logA)), float(B)), resid, exponent,
                    prefs.alpha, prefs.rho, riskless, slopes, grid.report_window)


def _step(prob, grid, u, t_old, t_new, bc_old, bc_new, depth=0):
    """One Crank--Nicolson step from ``t_old`` back to ``t_new``.

    If Newton fails the step is split in two (boundary slopes interpolated),
    up to ``_MAX_SPLIT`` times.
    """
    try:
        return _cn_step(prob, grid, u, t_old, t_new, bc_old, bc_new)
    except (NonConvergence, PositivityLoss):
        if depth >= _MAX_SPLIT:
            raise
    t_mid = 0.5 * (t_old + t_new)
    bc_mid = tuple(None if a is None else 0.5 * (a + b) for a, b in zip(bc_old, bc_new))
    u = _step(prob, grid, u, t_old, t_mid, bc_old, bc_mid, depth + 1)
    return _step(prob, grid, u, t_mid, t_new, bc_mid, bc_new, depth + 1)


_MAX_SPLIT = 6


def _cn_step(prob, grid, u, t_old, t_new, bc_old, bc_new):
    dt = t_old - t_new
    c_old, c_new = prob.coefs(t_old), prob.coefs(t_new)
    with np.errstate(over="ignore", invalid="ignore"):
        f_old = prob.F(u, t_old, *bc_old, c_old)
        # improved-Euler predictor
        pred = u + dt * f_old
        v = u + 0.5 * dt * (f_old + prob.F(pred, t_new, *bc_new, c_new))
        if not np.all(np.isfinite(v)):
            v = u.copy()
        for _ in range(grid.max_iter):
            G = v - u - 0.5 * dt * (prob.F(v, t_new, *bc_new, c_new) + f_old)
            ab = -0.5 * dt * prob.jacobian(v, t_new, *bc_new, c_new)
            ab[1] += 1.0
            if not (np.all(np.isfinite(G)) and np.all(np.isfinite(ab))):
                j = int(np.argmax(~np.isfinite(G)))
                raise PositivityLoss(f"log g left the representable range at lambda={prob.lam[j]:.4g}, t={t_new:.4g}")
            dv = solve_banded((1, 1), ab, -G)
            v = v + dv
            if np.max(np.abs(dv)) < grid.tol:
                return v
    raise NonConvergence(f"corrector did not converge at t={t_new:.4g}")


def _one_sided_slopes(u, h):
    return (u[1] - u[0]) / h, (u[-1] - u[-2]) / h


def optimal_controls(w, S, g, prefs: Preferences, mkt: MarketParams = MarketParams()):
    """Feedback consumption rate and number of shares.

    ``g`` is the value coefficient in ``V = w**alpha * g``.
    """
    w = np.asarray(w, dtype=float)
    a, rho = prefs.alpha, prefs.rho
    c = w * (a * np.asarray(g, dtype=float)) ** (rho / (a * (rho - 1.0)))
    q = w * mkt.excess / (np.asarray(S, dtype=float) * (1.0 - a) * mkt.sigma**2)
    return c, q


def cost_from_surfaces(det: GSurface, stoch: GSurface, lambda0: float = 0.01) -> float:
    """Percentage extra initial wealth needed under systematic risk."""
    hd = float(det.at(lambda0, 0.0))
    hs = float(stoch.at(lambda0, 0.0))
    return (math.exp((math.log(hd) - math.log(hs)) / det.alpha) - 1.0) * 100.0


def cost_of_systematic_risk_cbd(prefs: Preferences, mkt: MarketParams = MarketParams(),
                                p: CBDParams = CBDParams(), grid: HJBGridConfig = HJBGridConfig(),
                                lambda0: float | None = None) -> float:
    """Cost of systematic longevity risk at ``lambda0`` and t = 0, in percent."""
    det = solve_hjb(prefs, mkt, p, grid, riskless=True)
    stoch = solve_hjb(prefs, mkt, p, grid, riskless=False, boundary_slopes=det.boundary_slopes)
    return cost_from_surfaces(det, stoch, p.lambda0 if lambda0 is None else lambda0)


@dataclass
class FundSimulation:
    times: np.ndarray
    percentiles: dict
    total_consumption: np.ndarray
    depleted_fraction: float
    wealth: np.ndarray = field(repr=False)
    consumption: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    survival: np.ndarray = field(repr=False)

    @property
    def total_per_initial_member(self) -> np.ndarray:
        dt = np.diff(self.times)
        return (self.consumption[:, :-1] * self.survival[:, :-1] * dt).sum(axis=1)


def _surface_log_h(surface: GSurface, lam, t):
    """``log h`` by linear interpolation in ``log lambda`` on the nearest stored slice."""
    i = int(np.argmin(np.abs(surface.t_grid - t)))
    L = np.log(surface.lambda_grid)
    row = surface.log_g[i]
    x = np.log(lam)
    out = np.interp(x, L, row)
    lo_slope = (row[1] - row[0]) / (L[1] - L[0])
    hi_slope = (row[-1] - row[-2]) / (L[-1] - L[-2])
    out = np.where(x < L[0], row[0] + lo_slope * (x - L[0]), out)
    return np.where(x > L[-1], row[-1] + hi_slope * (x - L[-1]), out)


def simulate_fund(prefs: Preferences, mkt: MarketParams, p: CBDParams, surface: GSurface, w0: float,
                  k: int = 1, *, risky: bool = True, n_paths: int = 10_000, n_steps: int = 90,
                  horizon: float = 90.0, seed: int = 0, percentiles=(5, 50, 95),
                  consumption: str = "fit", scheme: str = "euler") -> FundSimulation:
    """Simulate wealth per survivor under the optimal feedback controls.

    The consumption rate ``h**p`` per unit wealth comes from the power fit
    ``h ~ A lambda**B`` (``consumption="fit"``) or from the solved surface
    (``"surface"``). The risky fraction is the Merton fraction, or zero when
    ``risky`` is false. ``scheme="euler"`` is Euler--Maruyama with wealth
    floored at zero (no consumption afterwards); ``"exact"`` freezes the
    rates over a step and integrates wealth exactly in log space, which
    stays positive and is stable when ``lambda * dt`` is large.

    Percentiles are of consumption per survivor; ``survival`` holds
    ``exp(-int lambda)`` along each path.
    """
    if not w0 > 0:
        raise ValidationError("w0 must be positive")
    if consumption not in ("surface", "fit"):
        raise ValidationError("consumption must be 'surface' or 'fit'")
    if scheme not in ("euler", "exact"):
        raise ValidationError("scheme must be 'euler' or 'exact'")
    a, rho = prefs.alpha, prefs.rho
    A, B = surface.fit
    pw = rho / (a * (rho - 1.0))
    frac = merton_fraction(prefs, mkt) if risky else 0.0
    dt = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    z = path_normals(seed, n_paths, 2 * n_steps, stream=21)
    zm, zl = z[:, :n_steps], z[:, n_steps:]

    x = np.full(n_paths, p.A1_0 + p.A2_0 * p.x0)
    w = np.full(n_paths, float(w0))
    W = np.empty((n_paths, n_steps + 1))
    C = np.zeros((n_paths, n_steps + 1))
    LAM = np.empty((n_paths, n_steps + 1))
    broke = np.zeros(n_paths, dtype=bool)
    sig = frac * mkt.sigma
    for j in range(n_steps + 1):
        lam = np.logaddexp(0.0, x)
        t = times[j]
        if consumption == "fit":
            rate = (A * lam**B) ** pw
        else:
            rate = np.exp(pw * _surface_log_h(surface, lam, t))
        c = np.where(broke, 0.0, rate * w)
        W[:, j], C[:, j], LAM[:, j] = w, c, lam
        if j == n_steps:
            break
        dW = np.sqrt(dt) * zm[:, j]
        if scheme == "exact":
            w = w * np.exp((k * lam + mkt.r + frac * mkt.excess - rate - 0.5 * sig * sig) * dt + sig * dW)
        else:
            w = w + (k * lam * w + mkt.r * w + frac * mkt.excess * w - c) * dt + sig * w * dW
            broke |= w <= 0
            w = np.where(broke, 0.0, w)
        x = x + p.factor_drift(t) * dt + p.factor_vol(t) * np.sqrt(dt) * zl[:, j]
    total = C[:, :-1].sum(axis=1) * dt
    surv = np.exp(-np.concatenate([np.zeros((n_paths, 1)), np.cumsum(LAM[:, :-1], axis=1) * dt], axis=1))
    pct = {q: np.percentile(C, q, axis=0) for q in percentiles}
    depleted = broke | (W[:, -1] < 1e-6 * w0)
    return FundSimulation(times, pct, total, float(depleted.mean()), W, C, LAM, surv)
