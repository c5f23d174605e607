import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gamma

from tempfrac import rng
from tempfrac.special_fn import RelaxationQuery, TemperedParams, laplace_symbol, levy_tail, relaxation
from tempfrac.subordinate_mc import (
    TemperingStats,
    build_path,
    expected_acceptance,
    first_passage_indices,
    integrate_against_density,
    inverse_at,
    inverse_density_grid,
    inverse_density_limit_zero,
    inverse_density_quadrature,
    sample_inverse,
    sample_stable_increment,
    sample_tempered_increment,
    x_cutoff,
)


def laplace_z(draws, s, exact):
    e = np.exp(-s * draws)
    return abs(e.mean() - exact) / (e.std(ddof=1) / math.sqrt(draws.size))


# --- increments ------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
def test_stable_laplace_transform(beta):
    d = sample_stable_increment(beta, 0.7, rng.new_stream(1), size=50_000)
    assert laplace_z(d, 1.5, math.exp(-0.7 * 1.5**beta)) < 4


def test_stable_half_matches_levy_cdf():
    # D(x) for beta = 1/2 has P(D <= y) = erfc(x / (2 sqrt y))
    from scipy import stats
    from scipy.special import erfc

    d = sample_stable_increment(0.5, 1.0, rng.new_stream(2), size=20_000)
    res = stats.kstest(d, lambda y: erfc(1.0 / (2 * np.sqrt(y))))
    assert res.pvalue > 1e-3


@pytest.mark.parametrize("beta,lam,dx", [(0.5, 1.0, 0.5), (0.3, 2.0, 0.2), (0.8, 0.5, 1.0)])
def test_tempered_laplace_and_acceptance(beta, lam, dx):
    p = TemperedParams(beta, lam)
    stats = TemperingStats()
    d = sample_tempered_increment(p, dx, rng.new_stream(4), size=50_000, stats=stats)
    assert laplace_z(d, 1.0, math.exp(-dx * laplace_symbol(p, 1.0))) < 4
    q = expected_acceptance(p, dx)
    assert abs(stats.acceptance_rate - q) < 4 * math.sqrt(q * (1 - q) / stats.proposed)


def test_tempered_mean():
    p = TemperedParams(0.5, 1.0)
    d = sample_tempered_increment(p, 1.0, rng.new_stream(6), size=100_000)
    # E D(1) = beta lam^(beta - 1)
    assert abs(d.mean() - 0.5) < 4 * d.std() / math.sqrt(d.size)


def test_zero_lambda_equals_stable_stream():
    a = sample_tempered_increment(TemperedParams(0.6, 0.0), 0.3, rng.new_stream(8), size=100)
    b = sample_stable_increment(0.6, 0.3, rng.new_stream(8), size=100)
    np.testing.assert_array_equal(a, b)


def test_subdivision_keeps_acceptance_high():
    p = TemperedParams(0.5, 100.0)
    assert expected_acceptance(p, 1.0) >= 0.1
    stats = TemperingStats()
    d = sample_tempered_increment(p, 1.0, rng.new_stream(1), size=2000, stats=stats)
    assert stats.acceptance_rate > 0.08
    assert laplace_z(d, 5.0, math.exp(-laplace_symbol(p, 5.0))) < 4


def test_sampler_argument_checks():
    with pytest.raises(ValueError):
        sample_stable_increment(0.5, 0.0, 1)
    with pytest.raises(ValueError):
        sample_stable_increment(1.2, 1.0, 1)
    assert isinstance(sample_stable_increment(0.5, 1.0, 1), float)


# --- paths and inversion ---------------------------------------------------


def test_path_levels_increase_and_pass_horizon(tmp_path):
    p = TemperedParams(0.5, 1.0)
    path = build_path(p, 1e-2, 3.0, seed=5)
    assert np.all(np.diff(path.levels) > 0)
    assert path.levels[0] == 0.0 and path.horizon > 3.0 and path.levels[-2] <= 3.0
    out = tmp_path / "path.csv"
    path.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "x,D_lambda_of_x" and len(lines) == path.levels.size + 1


def test_path_is_deterministic():
    p = TemperedParams(0.3, 2.0)
    a = build_path(p, 1e-2, 2.0, seed=3, path_index=4)
    b = build_path(p, 1e-2, 2.0, seed=3, path_index=4)
    c = build_path(p, 1e-2, 2.0, seed=3, path_index=5)
    np.testing.assert_array_equal(a.levels, b.levels)
    assert not np.array_equal(a.levels[:10], c.levels[:10])


def test_inverse_brackets_level():
    p = TemperedParams(0.5, 1.0)
    path = build_path(p, 1e-2, 2.0, seed=1)
    for t in (0.0, 0.3, 1.7):
        s = inverse_at(path, t)
        k = int(round(s.e_upper / path.dx))
        assert path.levels[k - 1] <= t < path.levels[k]
        assert s.midpoint == pytest.approx(s.e_upper - path.dx / 2)
    with pytest.raises(ValueError):
        inverse_at(path, path.horizon + 1)


def test_first_passage_matches_single_paths():
    p = TemperedParams(0.5, 1.0)
    t = np.array([1.0, 0.2, 0.6])
    k = first_passage_indices(p, t, 5, 1e-2, seed=7)
    for i in range(5):
        path = build_path(p, 1e-2, 1.0, seed=7, path_index=i)
        for j, tj in enumerate(t):
            assert k[i, j] * 1e-2 == pytest.approx(inverse_at(path, tj).e_upper)


def test_inverse_mean_untempered():
    # E E(t) = t^beta / Gamma(1 + beta) for the stable inverse
    beta, t = 0.6, 1.0
    e = sample_inverse(TemperedParams(beta), [t], 20_000, 1e-3, seed=2)[:, 0]
    assert abs(e.mean() - t**beta / gamma(1 + beta)) < 4 * e.std() / math.sqrt(e.size) + 1e-3


def test_inverse_laplace_matches_relaxation():
    p = TemperedParams(0.5, 1.0)
    e = sample_inverse(p, [0.5], 20_000, 1e-3, seed=9)[:, 0]
    w = np.exp(-2.0 * e)
    exact = relaxation(RelaxationQuery(p, 2.0, 0.5))
    assert abs(w.mean() - exact) < 4 * w.std() / math.sqrt(w.size) + 2e-3


# --- density ---------------------------------------------------------------


def test_density_half_closed_form():
    # E(t) for beta = 1/2 is |N(0, 2t)|: g(t, x) = exp(-x^2 / 4t) / sqrt(pi t)
    t = 0.7
    x = np.array([1e-4, 0.1, 0.5, 1.0, 3.0])
    np.testing.assert_allclose(inverse_density_grid(TemperedParams(0.5), t, x),
                               np.exp(-(x**2) / (4 * t)) / np.sqrt(math.pi * t), rtol=1e-9)


@pytest.mark.parametrize("beta,lam,t", [(0.5, 1.0, 0.5), (0.3, 2.0, 1.0), (0.8, 0.5, 0.1)])
def test_density_integrates_to_one(beta, lam, t):
    p = TemperedParams(beta, lam)
    tot = integrate_against_density(p, t, lambda x: np.ones((1, x.size)))
    assert tot[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("beta,lam,t,mu", [(0.5, 1.0, 0.5, 2.0), (0.3, 2.0, 1.0, 0.7), (0.8, 0.5, 2.0, 5.0)])
def test_density_x_laplace_is_relaxation(beta, lam, t, mu):
    p = TemperedParams(beta, lam)
    val = integrate_against_density(p, t, lambda x: np.exp(-mu * x)[None, :], x_max=x_cutoff(p, t, decay=mu))
    assert val[0] == pytest.approx(relaxation(RelaxationQuery(p, mu, t)), abs=1e-8)


def test_density_limit_at_zero():
    p = TemperedParams(0.4, 1.0)
    t = 0.8
    near = inverse_density_quadrature(p, t, 1e-7)
    assert near == pytest.approx(inverse_density_limit_zero(p, t), rel=1e-4)
    assert inverse_density_limit_zero(p, t) == pytest.approx(float(levy_tail(p, t)))


def test_density_rejects_bad_arguments():
    p = TemperedParams(0.5, 1.0)
    with pytest.raises(ValueError):
        inverse_density_grid(p, 0.0, [1.0])
    with pytest.raises(ValueError):
        inverse_density_grid(p, 1.0, [0.0])


def test_density_pointwise_against_scipy_quad():
    # direct y-integral of levy_tail(t - y) q(y, x) without substitutions
    from tempfrac.special_fn import tempered_density

    p = TemperedParams(0.7, 1.5)
    t, x = 1.2, 0.4
    f = lambda y: float(levy_tail(p, t - y)) * float(tempered_density(p, x, y))
    val, _ = integrate.quad(f, 0, t, limit=500, points=[t / 2], epsabs=1e-12)
    assert inverse_density_quadrature(p, t, x) == pytest.approx(val, rel=1e-6)
