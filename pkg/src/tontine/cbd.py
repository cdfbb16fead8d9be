"""One-factor continuous-time Cairns--Blake--Dowd mortality.

The force of mortality is ``lambda = log(1 + exp(x))`` where
``x = A1 + A2 * age`` is the CBD logit. The one-factor model replaces the
stochastic slope ``A2`` by its deterministic trend, which makes ``lambda`` a
scalar diffusion whose drift and volatility are given by the nine fitted
coefficients ``B1..B9``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, ValidationError
from .rng import path_normals

# Fitted SDE coefficients B1..B9.
CBD_COEFFICIENTS = (0.00118, 0.00306, 1.08e-5, 0.00140, 1.05, 0.137, 0.0799, 1.03e-5, 0.00134)


@dataclass(frozen=True)
class CBDParams:
    """Coefficients of the continuous-time CBD model.

    ``chol`` is the printed upper-triangular volatility matrix. Note that it
    reproduces ``cov`` as ``chol.T @ chol`` (to the printed precision), not
    as ``chol @ chol.T``; the factor dynamics use ``chol`` as printed so that
    the one- and two-factor models share the same noise.
    """

    B: tuple = CBD_COEFFICIENTS
    mu1: float = -0.00669
    mu2: float = 0.000590
    cov: tuple = ((0.00611, -0.0000939), (-0.0000939, 0.000001509))
    chol: tuple = ((0.0782, -0.00120), (0.0, 0.000257))
    x0: float = 65.0
    A2_0: float = 0.1058
    lambda0: float = 0.01

    def __post_init__(self):
        if len(self.B) != 9:
            raise ValidationError("CBD model needs exactly nine coefficients B1..B9")
        cov = np.asarray(self.cov, dtype=float)
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ValidationError("factor covariance must be symmetric positive-definite")
        if not self.lambda0 > 0:
            raise ValidationError("lambda0 must be positive")

    @property
    def A1_0(self) -> float:
        """Level factor at t=0 chosen so that lambda(0) = lambda0."""
        return float(np.log(np.expm1(self.lambda0)) - self.A2_0 * self.x0)

    def drift(self, lam, t):
        return cbd_drift(lam, t, self)

    def vol(self, lam, t):
        return cbd_vol(lam, t, self)

    def factor_drift(self, t):
        """Drift of the one-factor logit ``x``."""
        return self.mu1 + self.mu2 * (self.x0 + t) + self.A2_0 + self.mu2 * t

    def factor_vol(self, t):
        """Volatility of the one-factor logit ``x``."""
        (c11, c12), (_, c22) = self.chol
        return np.sqrt(c11**2 + c12**2 + ((self.x0 + t) * c22) ** 2)


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("force of mortality must be positive")
    return lam


def cbd_drift(lam, t, p: CBDParams = CBDParams()):
    """Drift of the one-factor CBD force of mortality, as fitted."""
    lam = _check_lambda(lam)
    B1, B2, B3, B4, B5, B6 = p.B[:6]
    E = np.exp(lam)
    num = (E - 1) * (B1 * t * (E - 1) + B1 * t + B2 * (B3 * t**2 + B4 * t + B5) + B6 * E)
    return num / ((E - 1) ** 2 + 2 * E - 1)


def cbd_vol(lam, t, p: CBDParams = CBDParams()):
    """Volatility of the one-factor CBD force of mortality, as fitted."""
    lam = _check_lambda(lam)
    B7, B8, B9 = p.B[6:]
    return B7 * np.expm1(lam) * np.sqrt(B8 * t**2 + B9 * t + 1) * np.exp(-lam)


def cbd_drift_ito(lam, t, p: CBDParams = CBDParams()):
    """Drift of lambda from Ito's lemma applied to the logit SDE directly.

    Independent of ``B1..B9``; agrees with :func:`cbd_drift` up to the
    rounding of the printed coefficients.
    """
    lam = _check_lambda(lam)
    d1 = -np.expm1(-lam)  # d lambda / dx
    d2 = d1 * np.exp(-lam)  # d^2 lambda / dx^2
    return d1 * p.factor_drift(t) + 0.5 * p.factor_vol(t) ** 2 * d2


def cbd_vol_ito(lam, t, p: CBDParams = CBDParams()):
    lam = _check_lambda(lam)
    return -np.expm1(-lam) * p.factor_vol(t)


def lambda_from_factors(A1, A2, age):
    """Force of mortality ``-log(1 - q)`` for logistic death probability ``q``."""
    x = np.asarray(A1) + np.asarray(A2) * np.asarray(age)
    return np.logaddexp(0.0, x)


@dataclass
class MortalityFan:
    times: np.ndarray
    percentiles: dict
    death_bins: np.ndarray
    death_density: np.ndarray
    lam_paths: np.ndarray = field(repr=False)


def simulate_mortality(p: CBDParams = CBDParams(), model: str = "one_factor", *, n_paths: int = 10_000,
                       n_steps: int = 100, horizon: float = 150.0, seed: int = 0,
                       percentiles=(5, 50, 95), n_bins: int = 100) -> MortalityFan:
    """Euler--Maruyama simulation of the CBD factors and the implied death time.

    Both models are driven by the same two Brownian motions, so paths of the
    two models with a common seed are directly comparable. Death is sampled
    by comparing the integrated hazard with an Exp(1) variable.
    """
    if model not in ("one_factor", "two_factor"):
        raise ValidationError(f"unknown mortality model {model!r}")
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    dt = horizon / n_steps
    times = np.linspace(0.0, horizon, n_steps + 1)
    z = path_normals(seed, n_paths, 2 * n_steps + 1, stream=11)
    dW1 = z[:, :n_steps] * np.sqrt(dt)
    dW2 = z[:, n_steps:2 * n_steps] * np.sqrt(dt)
    expo = -np.log(np.clip(_uniform_from_normal(z[:, -1]), 1e-300, 1.0))
    (c11, c12), (_, c22) = p.chol

    lam = np.empty((n_paths, n_steps + 1))
    if model == "two_factor":
        A1 = np.full(n_paths, p.A1_0)
        A2 = np.full(n_paths, p.A2_0)
        lam[:, 0] = lambda_from_factors(A1, A2, p.x0)
        for k in range(n_steps):
            A1 = A1 + p.mu1 * dt + c11 * dW1[:, k] + c12 * dW2[:, k]
            A2 = A2 + p.mu2 * dt + c22 * dW2[:, k]
            lam[:, k + 1] = lambda_from_factors(A1, A2, p.x0 + times[k + 1])
    else:
        x = np.full(n_paths, p.A1_0 + p.A2_0 * p.x0)
        lam[:, 0] = np.logaddexp(0.0, x)
        for k in range(n_steps):
            t = times[k]
            # same noise the two-factor logit receives, rescaled to the fitted variance
            g1, g2 = c11, c12 + (p.x0 + t) * c22
            norm = np.hypot(g1, g2)
            dW = (g1 * dW1[:, k] + g2 * dW2[:, k]) / norm if norm > 0 else dW1[:, k]
            x = x + p.factor_drift(t) * dt + p.factor_vol(t) * dW
            lam[:, k + 1] = np.logaddexp(0.0, x)

    cum = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(lam[:, :-1] * dt, axis=1)], axis=1)
    idx = np.array([np.searchsorted(row, e) for row, e in zip(cum, expo)])
    idx = np.clip(idx, 1, n_steps)
    # linear interpolation of the death time inside the step
    lo = cum[np.arange(n_paths), idx - 1]
    rate = lam[np.arange(n_paths), idx - 1]
    death = times[idx - 1] + np.clip((expo - lo) / rate, 0.0, dt)
    bins = np.linspace(0.0, horizon, n_bins + 1)
    density, _ = np.histogram(death, bins=bins, density=True)
    pct = {q: np.percentile(lam, q, axis=0) for q in percentiles}
    return MortalityFan(times, pct, bins, density, lam)


def _uniform_from_normal(z):
    from scipy.special import ndtr
    return ndtr(z)


def deterministic_lambda(p: CBDParams = CBDParams(), times=None, lambda0: float | None = None):
    """Zero-volatility path of the fitted lambda SDE and its integrated hazard."""
    l0 = p.lambda0 if lambda0 is None else lambda0
    times = np.linspace(0.0, 150.0, 1501) if times is None else np.asarray(times, dtype=float)
    sol = solve_ivp(lambda t, y: [float(cbd_drift(y[0], t, p)), y[0]], (times[0], times[-1]),
                    [l0, 0.0], t_eval=times, rtol=1e-10, atol=1e-13)
    return sol.y[0], sol.y[1]


def annuity_rate(w0: float, p: CBDParams = CBDParams(), r: float = 0.027, *, method: str = "deterministic",
                 horizon: float = 150.0, n_paths: int = 100_000, seed: int = 0) -> tuple[float, str]:
    """Level continuous payment bought by ``w0`` at an actuarially fair price.

    ``method`` is ``"deterministic"`` (survival along the zero-volatility
    lambda path) or ``"mc"`` (survival averaged over simulated paths).
    Returns ``(rate, method)``.
    """
    if not w0 > 0:
        raise ValidationError("w0 must be positive")
    if method == "deterministic":
        times = np.linspace(0.0, horizon, int(horizon * 20) + 1)
        _, cum = deterministic_lambda(p, times)
        survival = np.exp(-cum)
    elif method == "mc":
        fan = simulate_mortality(p, "one_factor", n_paths=n_paths, n_steps=int(horizon * 4),
                                 horizon=horizon, seed=seed)
        times = fan.times
        dt = times[1] - times[0]
        lam = fan.lam_paths
        cum = np.concatenate([np.zeros((lam.shape[0], 1)),
                              np.cumsum(0.5 * (lam[:, 1:] + lam[:, :-1]) * dt, axis=1)], axis=1)
        survival = np.exp(-cum).mean(axis=0)
    else:
        raise ValidationError(f"unknown annuity method {method!r}")
    factor = np.trapezoid(np.exp(-r * times) * survival, times)
    return float(w0 / factor), method
