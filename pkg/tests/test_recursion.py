import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from tontine.errors import DegenerateConsumption, NumericOverflow, ValidationError
from tontine.merton import MarketParams, Preferences, eis, merton_fraction, xi
from tontine.mortality import MortalityTable, bundled_table
from tontine.recursion import (
    INF,
    consumption_direction,
    consumption_fraction,
    convergence_study,
    eis_finite_difference,
    mean_log_consumption_growth,
    solve_finite,
    solve_infinite,
    wealth_consumption_law,
)

FLAT = MarketParams(mu=0.0, r=0.0, sigma=0.2)

# bounded scalar maximisation of the CES aggregator (scripts/oracles.py)
CES_TWO_PERIOD = 0.5000000148324042
CES_Z2_RHO_THIRD = 0.7071067932831252
CES_ZHALF_RHO_NEG1 = 0.7071067831149225
# three-term survivor sum for n=2, s=0.5
THETA_N2 = {-1.0: 2.6666666666666665, 0.5: 0.36427669529663687}

nonzero = lambda lo, hi: st.floats(lo, hi).filter(lambda v: abs(v) > 1e-2)


def scalar_recursion(prefs, mkt, table, C):
    """Plain-power backward pass, no logs."""
    a, rho = prefs.alpha, prefs.rho
    q = rho / (1 - rho)
    s = table.survival()
    z = np.ones(len(s))
    phi0 = prefs.beta ** (1 / rho) * math.exp(xi(prefs, mkt) * table.delta_t)
    for t in range(len(s) - 2, -1, -1):
        theta = phi0 * s[t] ** (1 / a - C) * z[t + 1]
        z[t] = (1 + theta**q) ** (1 / q)
    return z


def ces(c, theta, rho):
    return (c**rho + theta**rho * (1 - c) ** rho) ** (1 / rho)


def test_single_period_consumes_everything(mkt):
    t = MortalityTable(65, 1.0, (1.0,))
    r = solve_infinite(Preferences(-1, -1), mkt, t)
    assert r.z()[0] == 1.0 and r.c_star()[0] == 1.0


def test_two_period_no_mortality():
    t = MortalityTable(0, 1.0, (0.0, 1.0))
    r = solve_infinite(Preferences(0.5, 0.5), FLAT, t)
    assert r.c_star()[0] == pytest.approx(CES_TWO_PERIOD, abs=1e-7)


def test_consumption_fraction_examples():
    assert consumption_fraction(1.0, -1.0) == 1.0
    assert consumption_fraction(1.0, 0.3) == 1.0
    assert consumption_fraction(2.0, 1 / 3) == pytest.approx(CES_Z2_RHO_THIRD, abs=1e-7)
    assert consumption_fraction(0.5, -1.0) == pytest.approx(CES_ZHALF_RHO_NEG1, abs=1e-7)
    with pytest.raises(NumericOverflow):
        consumption_fraction(0.0, 0.5)


@pytest.mark.parametrize("alpha, rho", [(-1.0, -1.0), (0.5, 0.5)])
def test_two_member_fund_one_step(alpha, rho):
    t = MortalityTable(0, 1.0, (0.5, 0.5))
    r = solve_finite(2, Preferences(alpha, rho), FLAT, t)
    q = rho / (1 - rho)
    theta = THETA_N2[alpha]
    assert r.z(2)[0] == pytest.approx((1 + theta**q) ** (1 / q), rel=1e-12)
    assert np.all(r.z(2)[-1] == 1.0)


@pytest.mark.parametrize("alpha, rho", [(-1.0, -1.0), (-2.0, -0.5), (0.5, 0.3), (-0.5, 0.5)])
def test_scalar_recursion_consistency(female65, mkt, alpha, rho):
    p = Preferences(alpha, rho, beta=0.98)
    inf = solve_infinite(p, mkt, female65).z()
    one = solve_finite(1, p, mkt, female65, with_infinite=False).z(1)
    assert np.allclose(inf, scalar_recursion(p, mkt, female65, 1), rtol=1e-12, atol=0)
    assert np.allclose(one, scalar_recursion(p, mkt, female65, 0), rtol=1e-12, atol=0)
    assert np.allclose(one, solve_infinite(p, mkt, female65, collectivised=False).z(1), rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(rho=nonzero(-5.0, 0.9), log_theta=st.floats(-4.0, 4.0))
def test_c_star_maximises_ces(rho, log_theta):
    theta = math.exp(log_theta)
    q = rho / (1 - rho)
    c = 1 / (1 + theta**q)
    res = minimize_scalar(lambda x: -ces(x, theta, rho), bounds=(1e-12, 1 - 1e-12), method="bounded",
                          options={"xatol": 1e-12})
    assert c == pytest.approx(res.x, abs=1e-6)
    assert ces(c, theta, rho) >= -res.fun * (1 - 1e-12)


def test_recursion_c_star_is_ces_argmax(female65, mkt):
    p = Preferences(-2.0, -0.5)
    r = solve_finite(8, p, mkt, female65)
    q = p.rho / (1 - p.rho)
    for n in (1, 8, INF):
        lz = r.log_z[n]
        for t in (0, 10, 30):
            theta = math.exp(math.log(math.expm1(q * lz[t])) / q)
            res = minimize_scalar(lambda x: -ces(x, theta, p.rho), bounds=(1e-12, 1 - 1e-12), method="bounded",
                                  options={"xatol": 1e-12})
            assert r.c_star(n)[t] == pytest.approx(res.x, abs=1e-7)


@pytest.mark.parametrize("prefs", [Preferences(-1, -1), Preferences(0.5, 0.5), Preferences(-3, 0.4)])
def test_z_increases_with_fund_size(female65, mkt, prefs):
    r = solve_finite(64, prefs, mkt, female65)
    Z = np.array([r.z(n) for n in range(1, 65)] + [r.z(INF)])
    # more pooling never hurts; equality at the terminal time
    assert np.all(np.diff(Z, axis=0) >= -1e-13)


def test_z_bounds_and_c_star_range(female65, mkt):
    for p in (Preferences(0.5, 0.5), Preferences(-1, 0.3)):
        r = solve_finite(10, p, mkt, female65)
        assert all(np.all(r.z(n) >= 1.0) for n in r.sizes)
    # for rho < 0 the aggregator exponent flips and z <= 1
    r = solve_finite(10, Preferences(-1, -1), mkt, female65)
    assert all(np.all(r.z(n) <= 1.0) for n in r.sizes)
    for p in (Preferences(0.5, 0.5), Preferences(-1, -1), Preferences(-4, 0.6)):
        c = solve_infinite(p, mkt, female65).c_star()
        assert np.all((c > 0) & (c <= 1)) and c[-1] == 1.0


def test_lognormal_law_shape(female65, mkt):
    p = Preferences(-1, -1)
    law = wealth_consumption_law(p, mkt, female65, 126636.0)
    a = merton_fraction(p, mkt)
    assert law.mu_X[0] == math.log(126636.0) and law.sigma_X[0] == 0
    assert np.allclose(law.sigma_X, 0.15 * a * np.sqrt(female65.times - 65), rtol=1e-15)
    assert np.array_equal(law.sigma_c, law.sigma_X)
    lz = solve_infinite(p, mkt, female65).log_z[INF]
    assert np.allclose(law.mu_c, p.rho / (p.rho - 1) * lz + law.mu_X, rtol=1e-14)
    assert law.C_flag == 1


@pytest.mark.parametrize("n", [1, INF])
def test_mean_growth_matches_law(female65, mkt, n):
    p = Preferences(-1.5, -0.5)
    law = wealth_consumption_law(p, mkt, female65, 1.0, n)
    g = mean_log_consumption_growth(p, mkt, female65, n)
    assert np.allclose(np.diff(law.mu_c)[:-1], g[:-1], atol=1e-10)


def test_flat_market_consumption_ratio(female65):
    p = Preferences(-2.0, -1.0)
    law = wealth_consumption_law(p, FLAT, female65, 1.0, INF)
    s = female65.survival()[:-2]
    expected = (1 / p.alpha - 1 / p.rho) * p.rho / (1 - p.rho) * np.log(s)
    assert np.allclose(np.diff(law.mu_c)[:-1], expected, atol=1e-12)


def test_eis_finite_difference(female65, mkt):
    for p in (Preferences(-1, -1), Preferences(-2, -0.5), Preferences(0.5, 0.3)):
        assert eis_finite_difference(p, mkt, female65) == pytest.approx(eis(p, mkt), rel=1e-3)
    flat = MarketParams(0.03, 0.03, 0.2)
    assert eis_finite_difference(Preferences(-2, -1), flat, female65) == pytest.approx(0.5, rel=1e-3)


def test_directions():
    s = 0.99
    assert consumption_direction(Preferences(-2, -1), s, True) == "Increasing"
    assert consumption_direction(Preferences(-1, -1), s, True) == "Constant"
    assert consumption_direction(Preferences(-1, 0.5), s, False) == "Increasing"
    assert consumption_direction(Preferences(-1, 0.5), 1.0, False) == "Constant"
    with pytest.raises(ValidationError):
        consumption_direction(Preferences(-1, -1), 0.0, True)


def test_convergence_study(female65, mkt):
    st_ = convergence_study(Preferences(-1, -1), mkt, female65, (8, 16, 32, 64))
    assert np.all(np.diff(st_.gap) < 0)
    assert st_.gap.argmax() == 0
    no_death = MortalityTable(0, 1.0, (0,) * 9 + (1,))
    flat = convergence_study(Preferences(-1, -1), mkt, no_death, (2, 4, 8, 16))
    assert np.allclose(flat.gap, 0, atol=1e-14)
    with pytest.raises(ValidationError):
        convergence_study(Preferences(-1, -1), mkt, female65, (8, 16, 32))


def test_degenerate_consumption_before_horizon(mkt):
    t = MortalityTable(0, 1.0, (0.5, 0.5, 0.0))
    with pytest.raises(DegenerateConsumption):
        wealth_consumption_law(Preferences(-1, -1), mkt, t, 1.0, INF)


def test_bad_fund_sizes(female65, mkt):
    with pytest.raises(ValidationError):
        solve_finite(0, Preferences(-1, -1), mkt, female65)
    with pytest.raises(ValidationError):
        wealth_consumption_law(Preferences(-1, -1), mkt, female65, 1.0, 5)
    with pytest.raises(ValidationError):
        wealth_consumption_law(Preferences(-1, -1), mkt, female65, 0.0, 1)


def test_large_fund_in_log_space(female65, mkt):
    r = solve_finite(300, Preferences(-10.0, -1.0), mkt, female65)
    z = r.z(300)
    assert np.all(np.isfinite(z)) and np.all(z > 0)
    assert abs(z[0] - r.z(INF)[0]) < abs(r.z(1)[0] - r.z(INF)[0])


def test_male_table_runs(mkt):
    t = bundled_table("male").from_age(67)
    r = solve_infinite(Preferences(-1, -1), mkt, t)
    assert r.times[0] == 67 and np.all(np.isfinite(r.z()))
