"""Independent reference values frozen into the test suite.

Nothing here imports the package; every number comes from a different
method (grid search, arbitrary precision, computer algebra, direct
optimisation, quadrature) than the code under test. Re-run to regenerate.
"""

import math

import mpmath as mp
import numpy as np
import sympy as sp
from scipy.optimize import minimize_scalar


def merton_grid(alpha, mu=0.062, r=0.027, sigma=0.15):
    a = np.arange(-5.0, 5.0 + 1e-7, 1e-6)
    f = a * (mu - r) + r - 0.5 * a * a * (1 - alpha) * sigma**2
    k = int(np.argmax(f)) if alpha < 1 else None
    return a[k], f[k]


def binom_mp(n, i, s):
    mp.mp.dps = 50
    return mp.binomial(n, i) * mp.mpf(s) ** i * (1 - mp.mpf(s)) ** (n - i)


def ces_argmax(rho, theta):
    obj = lambda c: -((c**rho + theta**rho * (1 - c) ** rho) ** (1 / rho))
    res = minimize_scalar(obj, bounds=(1e-12, 1 - 1e-12), method="bounded", options={"xatol": 1e-14})
    return res.x


def cbd_symbolic(lam0=0.01, t0=0.0):
    lam, t = sp.symbols("lambda t", positive=True)
    B = [sp.Rational(str(v)) for v in (0.00118, 0.00306, 1.08e-5, 0.00140, 1.05, 0.137, 0.0799, 1.03e-5, 0.00134)]
    E = sp.exp(lam)
    drift = (E - 1) * (B[0] * t * (E - 1) + B[0] * t + B[1] * (B[2] * t**2 + B[3] * t + B[4]) + B[5] * E) / (
        (E - 1) ** 2 + 2 * E - 1)
    vol = B[6] * (E - 1) * sp.sqrt(B[7] * t**2 + B[8] * t + 1) * sp.exp(-lam)
    subs = {lam: sp.Rational(str(lam0)), t: sp.Rational(str(t0))}
    return sp.N(drift.subs(subs), 30), sp.N(vol.subs(subs), 30)


def two_member_theta(alpha, s, beta=1.0, xi_dt=0.0):
    # z_{i,T} = 1 for all i: sum_i (i/2)**(1-alpha) S(2,i)
    S1 = 2 * s * (1 - s)
    S2 = s * s
    total = (0.5) ** (1 - alpha) * S1 + 1.0 * S2
    return beta ** (1 / alpha) * math.exp(xi_dt) * total ** (1 / alpha)


if __name__ == "__main__":
    print("merton alpha=-1:", merton_grid(-1.0))
    print("merton alpha=0.5:", merton_grid(0.5))
    print("binomial(1000,990,0.99):", mp.nstr(binom_mp(1000, 990, 0.99), 20))
    print("two-period c* rho=0.5, theta=1:", ces_argmax(0.5, 1.0))
    theta = (math.sqrt(2) - 1) ** 2
    print("c* for z=2 at rho=1/3:", ces_argmax(1 / 3, theta))
    theta = (math.sqrt(2) + 1) ** 2
    print("c* for z=1/2 at rho=-1:", ces_argmax(-1.0, theta))
    print("cbd drift, vol at (0.01, 0):", cbd_symbolic())
    print("cbd drift, vol at (0.5, 20):", cbd_symbolic(0.5, 20.0))
    print("theta n=2, s=0.5, alpha=-1:", two_member_theta(-1.0, 0.5))
    print("theta n=2, s=0.5, alpha=0.5:", two_member_theta(0.5, 0.5))
    print("high precision log1p(e^x) at x=-3.7:", mp.nstr(mp.log(1 + mp.e ** mp.mpf("-3.7")), 20))
