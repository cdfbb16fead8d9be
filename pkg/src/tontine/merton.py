"""Single-period Merton quantities shared by the discrete and continuous models."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class Preferences:
    """Homogeneous Epstein--Zin preferences.

    ``alpha`` is risk aversion, ``rho`` satiation. ``beta`` is the per-period
    discount factor of the discrete model and ``delta`` the discount rate of
    the continuous model; ``beta = exp(-delta * dt)`` links the two.
    """

    alpha: float
    rho: float
    beta: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "rho"):
            v = getattr(self, name)
            if not math.isfinite(v) or v == 0 or v >= 1:
                raise ValidationError(f"{name} must lie in (-inf, 1) \\ {{0}}, got {v}")
        if not 0 < self.beta <= 1:
            raise ValidationError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.delta >= 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta}")

    @classmethod
    def from_delta(cls, alpha: float, rho: float, delta: float, dt: float = 1.0) -> "Preferences":
        return cls(alpha, rho, beta=math.exp(-delta * dt), delta=delta)

    @property
    def is_vnm(self) -> bool:
        return self.alpha == self.rho


@dataclass(frozen=True)
class MarketParams:
    """Black--Scholes market. Defaults are the UK 2019 calibration."""

    mu: float = 0.062
    r: float = 0.027
    sigma: float = 0.15

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")

    @property
    def excess(self) -> float:
        return self.mu - self.r


def merton_fraction(prefs: Preferences, mkt: MarketParams) -> float:
    """Constant optimal proportion of wealth held in the risky asset.

    Not clamped: short positions and leverage are allowed.
    """
    return mkt.excess / ((1.0 - prefs.alpha) * mkt.sigma**2)


def _growth(a: float, alpha: float, mkt: MarketParams) -> float:
    return a * mkt.excess + mkt.r - 0.5 * a * a * (1.0 - alpha) * mkt.sigma**2


def xi(prefs: Preferences, mkt: MarketParams) -> float:
    """Certainty-equivalent growth rate of optimally invested wealth.

    For alpha < 0 the optimisation is an inf rather than a sup, but the
    stationary point and hence the formula are the same.
    """
    return _growth(merton_fraction(prefs, mkt), prefs.alpha, mkt)


def xi_tilde(mkt: MarketParams, a_star: float) -> float:
    """Drift of log wealth when a fraction ``a_star`` is held in the stock."""
    return _growth(a_star, 0.0, mkt)


def eis(prefs: Preferences, mkt: MarketParams) -> float:
    """Elasticity of intertemporal substitution of the optimal strategy."""
    a, rho = prefs.alpha, prefs.rho
    return (1.0 / (1.0 - rho)) * (
        1.0 - mkt.excess * (1.0 + a * (rho - 2.0)) / ((a - 1.0) ** 2 * mkt.sigma**2)
    )
