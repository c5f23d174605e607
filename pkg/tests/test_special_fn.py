import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from tempfrac.special_fn import (
    RelaxationQuery,
    TemperedParams,
    f1_standard,
    kernel_bound,
    laplace_symbol,
    levy_tail,
    log_f1_standard,
    mittag_leffler,
    relaxation,
    relaxation_dt,
    relaxation_grid,
    relaxation_transform,
    stable_density,
    tempered_density,
)

GRID = [(b, lam, mu) for b in (0.3, 0.5, 0.8) for lam in (0.0, 0.5, 2.0) for mu in (0.7, 1.0, 5.0)]


def talbot_relaxation(beta, lam, mu, t, derivative=False):
    """Independent oracle: numerical inverse Laplace transform in mpmath."""
    mp.mp.dps = 30

    def F(s):
        psi = (s + lam) ** beta - lam**beta
        g_hat = psi / (s * (mu + psi))
        return s * g_hat - 1 if derivative else g_hat

    return float(mp.invertlaplace(F, t, method="talbot"))


# --- parameter types -----------------------------------------------------


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_params_reject_bad_beta(beta):
    with pytest.raises(ValueError):
        TemperedParams(beta, 1.0)


def test_params_reject_negative_lambda():
    with pytest.raises(ValueError):
        TemperedParams(0.5, -1.0)


def test_query_validation_and_flags():
    p = TemperedParams(0.5, 4.0)
    with pytest.raises(ValueError):
        RelaxationQuery(p, 0.0, 1.0)
    with pytest.raises(ValueError):
        RelaxationQuery(p, 1.0, -1.0)
    assert RelaxationQuery(p, 2.0, 1.0).outside_hypothesis
    assert RelaxationQuery(p, 1.0, 1.0).has_pole
    assert not RelaxationQuery(p, 3.0, 1.0).has_pole
    assert not RelaxationQuery(TemperedParams(0.5), 1.0, 1.0).has_pole


# --- symbol, tail and kernel ---------------------------------------------


def test_laplace_symbol_small_s_no_cancellation():
    p = TemperedParams(0.3, 2.0)
    s = 1e-12
    mp.mp.dps = 40
    exact = float((mp.mpf(s) + 2) ** mp.mpf(0.3) - mp.mpf(2) ** mp.mpf(0.3))
    assert laplace_symbol(p, s) == pytest.approx(exact, rel=1e-12)


def test_laplace_symbol_untempered():
    p = TemperedParams(0.7)
    s = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(laplace_symbol(p, s), s**0.7, rtol=1e-14)


@pytest.mark.parametrize("beta,lam,t", [(0.3, 2.0, 0.4), (0.5, 0.5, 3.0), (0.8, 1.0, 0.01), (0.5, 0.0, 2.0)])
def test_levy_tail_matches_mpmath(beta, lam, t):
    mp.mp.dps = 30
    # phi(t, inf) = int_t^inf beta/Gamma(1-beta) e^{-lam r} r^{-1-beta} dr
    c = beta / mp.gamma(1 - beta)
    exact = c * mp.quad(lambda r: mp.exp(-lam * r) * r ** (-1 - beta), [t, mp.inf])
    assert levy_tail(TemperedParams(beta, lam), t) == pytest.approx(float(exact), rel=1e-12)


def test_levy_tail_monotone_and_singular():
    p = TemperedParams(0.6, 1.0)
    t = np.geomspace(1e-8, 10, 50)
    v = levy_tail(p, t)
    assert np.all(np.diff(v) < 0)
    assert v[0] > 1e4


def test_kernel_bound_formula():
    beta, lam, t = 0.4, 1.5, 0.8
    expected = math.exp(-lam * t) * t ** (beta - 1) * math.gamma(1 - beta) / (math.pi * math.sin(beta * math.pi))
    assert kernel_bound(TemperedParams(beta, lam), t) == pytest.approx(expected, rel=1e-14)


# --- densities -------------------------------------------------------------


def test_stable_density_levy_closed_form():
    # D(x) at level t for beta = 1/2: x / (2 sqrt(pi)) t^{-3/2} exp(-x^2 / (4t))
    t = np.array([0.05, 0.3, 1.0, 7.0])
    x = 1.3
    levy = x / (2 * math.sqrt(math.pi)) * t**-1.5 * np.exp(-(x**2) / (4 * t))
    np.testing.assert_allclose(stable_density(0.5, x, t), levy, rtol=1e-12)


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_f1_matches_mpmath_integral(beta):
    # f_1(u) = (1/pi) int_0^inf e^{-u r} e^{-r^beta cos(beta pi)} sin(r^beta sin(beta pi)) dr
    mp.mp.dps = 25
    for u in (0.4, 2.0, 30.0):
        exact = mp.quad(lambda r: mp.exp(-u * r - r**beta * mp.cos(beta * mp.pi)) * mp.sin(r**beta * mp.sin(beta * mp.pi)),
                        [0, 1, 10, mp.inf]) / mp.pi
        assert f1_standard(beta, u) == pytest.approx(float(exact), rel=1e-8)


def test_log_f1_consistent():
    u = np.array([0.2, 1.0, 5.0, 2e3])
    np.testing.assert_allclose(np.exp(log_f1_standard(0.4, u)), f1_standard(0.4, u), rtol=1e-10)


@pytest.mark.parametrize("beta,lam,x", [(0.5, 1.0, 0.7), (0.3, 2.0, 0.4), (0.8, 0.5, 1.5)])
def test_tempered_density_laplace_transform(beta, lam, x):
    p = TemperedParams(beta, lam)
    for s in (0.5, 2.0):
        val, _ = integrate.quad(lambda y: math.exp(-s * y) * float(tempered_density(p, x, y)), 0, np.inf, limit=400)
        assert val == pytest.approx(math.exp(-x * laplace_symbol(p, s)), rel=1e-7)


# --- Mittag-Leffler -------------------------------------------------------


@pytest.mark.parametrize("x", [0.0, 0.1, 1.0, 4.0, 12.0, 40.0])
def test_mittag_leffler_half_closed_form(x):
    exact = float(mp.exp(mp.mpf(x) ** 2) * mp.erfc(x))
    assert mittag_leffler(0.5, -x) == pytest.approx(exact, rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("beta", [0.3, 0.8])
@pytest.mark.parametrize("z", [-0.3, -2.0, -6.0, -25.0])
def test_mittag_leffler_mpmath_series(beta, z):
    mp.mp.dps = 80
    exact = mp.nsum(lambda k: mp.mpf(z) ** k / mp.gamma(beta * k + 1), [0, mp.inf])
    assert mittag_leffler(beta, z) == pytest.approx(float(exact), rel=1e-9, abs=1e-14)


def test_mittag_leffler_beta_one_is_exp():
    assert mittag_leffler(1.0, -2.5) == pytest.approx(math.exp(-2.5), rel=1e-12)


# --- relaxation function --------------------------------------------------


@pytest.mark.parametrize("beta,lam,mu", GRID)
def test_relaxation_matches_talbot(beta, lam, mu):
    p = TemperedParams(beta, lam)
    for t in (0.05, 0.7, 2.0):
        assert relaxation(RelaxationQuery(p, mu, t)) == pytest.approx(talbot_relaxation(beta, lam, mu, t), abs=1e-10)


@pytest.mark.parametrize("beta,lam,mu", [(0.5, 2.0, 0.7), (0.3, 0.5, 5.0), (0.8, 2.0, 1.0), (0.5, 0.0, 1.0)])
def test_relaxation_dt_matches_talbot(beta, lam, mu):
    p = TemperedParams(beta, lam)
    for t in (0.1, 1.0):
        got = relaxation_dt(RelaxationQuery(p, mu, t))
        assert got == pytest.approx(talbot_relaxation(beta, lam, mu, t, derivative=True), rel=1e-8, abs=1e-11)


def test_relaxation_initial_value_and_range():
    p = TemperedParams(0.5, 1.0)
    assert relaxation(RelaxationQuery(p, 3.0, 0.0)) == 1.0
    t = np.linspace(0, 5, 60)
    g = relaxation_grid(p, 3.0, t)
    assert np.all((g > 0) & (g <= 1))
    assert np.all(np.diff(g) < 0)


def test_relaxation_at_excluded_mu_is_continuous():
    # mu = lam^beta is outside the integral formula's hypothesis; the limit from either side agrees
    p = TemperedParams(0.5, 4.0)
    at = relaxation(RelaxationQuery(p, 2.0, 0.8))
    lo = relaxation(RelaxationQuery(p, 2.0 - 1e-7, 0.8))
    hi = relaxation(RelaxationQuery(p, 2.0 + 1e-7, 0.8))
    assert at == pytest.approx(lo, abs=1e-6)
    assert at == pytest.approx(hi, abs=1e-6)


def test_relaxation_grid_agrees_with_pointwise():
    p = TemperedParams(0.3, 2.0)
    t = np.array([0.0, 1e-3, 0.2, 1.0, 4.0])
    g = relaxation_grid(p, 0.7, t)
    pts = [relaxation(RelaxationQuery(p, 0.7, ti)) for ti in t]
    np.testing.assert_allclose(g, pts, atol=1e-10)


def test_relaxation_large_mu_small_t():
    p = TemperedParams(0.5, 1.0)
    for t in (1e-8, 1e-4):
        for mu in (1.0, 4096.0):
            assert relaxation(RelaxationQuery(p, mu, t)) == pytest.approx(talbot_relaxation(0.5, 1.0, mu, t), abs=1e-9)


def test_relaxation_transform_closed_form():
    p = TemperedParams(0.5, 1.0)
    s = 2.0
    psi = math.sqrt(3.0) - 1.0
    assert relaxation_transform(p, 0.7, s) == pytest.approx(psi / (s * (0.7 + psi)), rel=1e-14)


def test_relaxation_untempered_is_mittag_leffler():
    p = TemperedParams(0.8)
    t = np.linspace(0.01, 2, 30)
    g = relaxation_grid(p, 5.0, t)
    ml = [mittag_leffler(0.8, -5.0 * ti**0.8) for ti in t]
    np.testing.assert_allclose(g, ml, atol=1e-9)


def test_derivative_bound_holds_without_pole():
    t = np.geomspace(0.01, 2.0, 15)
    for beta, lam, mu in GRID:
        if lam and mu < lam**beta:
            continue
        p = TemperedParams(beta, lam)
        dg = np.array([relaxation_dt(RelaxationQuery(p, mu, ti)) for ti in t])
        assert np.all(np.abs(dg) <= mu * kernel_bound(p, t) * (1 + 1e-9))


def test_derivative_bound_counterexample_with_pole():
    # the residue term decays like exp(s0 t) with s0 > -lam, slower than the kernel bound
    p = TemperedParams(0.5, 2.0)
    q = RelaxationQuery(p, 0.7, 2.0)
    assert q.has_pole
    assert abs(relaxation_dt(q)) > 0.7 * kernel_bound(p, 2.0)
