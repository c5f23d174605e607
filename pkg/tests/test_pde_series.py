import math

import numpy as np
import pytest
from scipy import integrate

from tempfrac.pde_series import (
    EigenExpansion,
    IntervalDomain,
    SolutionEstimate,
    eigenpairs,
    heat_kernel,
    heat_solution,
    l2_norm,
    project,
    relaxation_modes,
    tempered_solution_series,
    tempered_solution_subordination,
)
from tempfrac.special_fn import RelaxationQuery, TemperedParams, relaxation

PI = math.pi
DOM = IntervalDomain(PI)


def test_domain_validation():
    with pytest.raises(ValueError):
        IntervalDomain(0.0)
    with pytest.raises(ValueError):
        IntervalDomain(1.0, dims=2, axis_lengths=(1.0,))
    box = IntervalDomain(1.0, dims=2, axis_lengths=(1.0, 2.0))
    assert box.lengths == (1.0, 2.0)
    assert box.on_boundary([0.0, 1.0]) and not box.on_boundary([0.5, 1.0])


def test_eigenpairs_orthonormal():
    dom = IntervalDomain(2.5)
    for n in (1, 2, 5):
        eta_n, psi_n = eigenpairs(dom, n)
        assert eta_n == pytest.approx((n * PI / 2.5) ** 2)
        for m in (1, 2, 5):
            _, psi_m = eigenpairs(dom, m)
            val, _ = integrate.quad(lambda x: psi_n(x) * psi_m(x), 0, 2.5, limit=200)
            assert val == pytest.approx(1.0 if n == m else 0.0, abs=1e-12)


def test_eigenfunctions_vanish_on_boundary():
    _, psi = eigenpairs(DOM, 3)
    assert psi(0.0) == 0.0 and psi(PI) == 0.0


def test_eigenpairs_box():
    box = IntervalDomain(1.0, dims=2, axis_lengths=(1.0, 2.0))
    eta, psi = eigenpairs(box, (1, 2))
    assert eta == pytest.approx(PI**2 + PI**2)
    assert psi(np.array([0.5, 0.5])) == pytest.approx(math.sqrt(2) * math.sqrt(1.0) * math.sin(PI / 2) * math.sin(PI / 2))
    with pytest.raises(ValueError):
        eigenpairs(box, 1)


def test_project_single_mode_recovers_coefficient():
    _, psi = eigenpairs(DOM, 3)
    exp = project(lambda x: 2.0 * psi(x), DOM, n_max=8)
    expected = np.zeros(8)
    expected[2] = 2.0
    np.testing.assert_allclose(exp.coeffs, expected, atol=1e-12)
    assert abs(exp.parseval_defect) < 1e-10


def test_project_polynomial_closed_form():
    # <x(pi - x), psi_n> = sqrt(2/pi) * 4 / n^3 for odd n, 0 for even n
    exp = project(lambda x: x * (PI - x), DOM, n_max=16)
    n = np.arange(1, 17)
    exact = np.where(n % 2 == 1, math.sqrt(2 / PI) * 4 / n.astype(float) ** 3, 0.0)
    np.testing.assert_allclose(exp.coeffs, exact, atol=1e-12)


def test_parseval_defect_decreases():
    f = lambda x: np.where(x < 1.0, x, 1.0) * (PI - x)
    defects = [project(f, DOM, n_max=n).parseval_defect for n in (4, 8, 16, 32)]
    assert all(a >= b >= -1e-12 for a, b in zip(defects, defects[1:]))


def test_adaptive_truncation_meets_tail_rule():
    exp = project(lambda x: x * (PI - x), DOM)
    norm = math.sqrt(exp.norm_sq)
    assert exp.tail <= 1e-8 * norm
    assert exp.n_max in (64, 128, 256, 512, 1024, 2048, 4096)


def test_project_box_tensor():
    box = IntervalDomain(PI, dims=2)
    f = lambda p: np.sin(p[..., 0]) * np.sin(2 * p[..., 1])
    exp = project(f, box, n_max=4)
    # sin(x) sin(2y) = (pi/2) psi_1(x) psi_2(y)
    assert exp.coeffs[0, 1] == pytest.approx(PI / 2, abs=1e-12)
    assert np.sum(np.abs(exp.coeffs)) == pytest.approx(PI / 2, abs=1e-10)


def test_heat_solution_single_mode():
    exp = EigenExpansion.single_mode(DOM, 2)
    x, t = 0.9, 0.3
    _, psi = eigenpairs(DOM, 2)
    est = heat_solution(exp, t, x)
    assert est.method == "classical_heat"
    assert est.value == pytest.approx(math.exp(-4 * t) * psi(x))


def test_heat_kernel_images():
    # Dirichlet kernel on (0, pi) by the method of images
    t, x, y = 1.0, PI / 2, PI / 2
    k = np.arange(-20, 21)
    g = lambda z: np.exp(-(z**2) / (4 * t)) / math.sqrt(4 * PI * t)
    images = float(np.sum(g(x - y + 2 * PI * k) - g(x + y + 2 * PI * k)))
    assert heat_kernel(DOM, t, x, y) == pytest.approx(images, rel=1e-12)
    assert heat_kernel(DOM, 0.3, 0.4, 2.0) == pytest.approx(heat_kernel(DOM, 0.3, 2.0, 0.4), rel=1e-14)
    assert heat_kernel(DOM, 0.3, 0.0, 2.0) == 0.0


def test_series_single_mode_is_relaxation_times_mode():
    p = TemperedParams(0.5, 1.0)
    exp = EigenExpansion.single_mode(DOM, 1)
    for t in (0.1, 1.0):
        est = tempered_solution_series(exp, p, t, PI / 4)
        g = relaxation(RelaxationQuery(p, 1.0, t))
        assert est.value == pytest.approx(g * math.sqrt(2 / PI) * math.sin(PI / 4), rel=1e-14)
        assert est.truncation_error == 0.0


@pytest.mark.parametrize("beta,lam", [(0.5, 1.0), (0.3, 2.0), (0.8, 0.0)])
def test_series_matches_subordination(beta, lam):
    p = TemperedParams(beta, lam)
    exp = project(lambda x: x * (PI - x), DOM, n_max=32)
    for t in (0.1, 1.0):
        for x in (0.4, PI / 2):
            a = tempered_solution_series(exp, p, t, x).value
            b = tempered_solution_subordination(exp, p, t, x).value
            assert a == pytest.approx(b, abs=1e-8)


def test_boundary_values_zero():
    p = TemperedParams(0.5, 1.0)
    exp = project(lambda x: x * (PI - x), DOM, n_max=16)
    for x in (0.0, PI):
        assert tempered_solution_series(exp, p, 0.5, x).value == 0.0
        assert tempered_solution_subordination(exp, p, 0.5, x).value == 0.0
    with pytest.raises(ValueError):
        tempered_solution_series(exp, p, 0.5, PI + 0.1)


def test_series_at_time_zero_is_initial_data():
    p = TemperedParams(0.4, 1.0)
    exp = project(lambda x: x * (PI - x), DOM, n_max=256)
    assert tempered_solution_series(exp, p, 0.0, 1.0).value == pytest.approx(1.0 * (PI - 1.0), abs=1e-5)


def test_l2_contraction_and_recovery():
    p = TemperedParams(0.5, 1.0)
    exp = project(lambda x: x * (PI - x), DOM, n_max=32)
    f_norm = l2_norm(exp)
    prev = math.inf
    for t in (1.0, 1e-1, 1e-2, 1e-3, 1e-4):
        w = relaxation_modes(exp, p, t)
        g1 = relaxation(RelaxationQuery(p, 1.0, t))
        assert l2_norm(exp, w) <= g1 * f_norm
        gap = l2_norm(exp, 1 - w)
        assert gap < prev
        prev = gap
    assert prev < 0.05 * f_norm


def test_box_series_single_mode():
    box = IntervalDomain(PI, dims=2)
    p = TemperedParams(0.5, 1.0)
    exp = EigenExpansion.single_mode(box, (1, 1), n_max=4)
    x = np.array([1.0, 2.0])
    g = relaxation(RelaxationQuery(p, 2.0, 0.5))
    expected = g * (2 / PI) * math.sin(1.0) * math.sin(2.0)
    assert tempered_solution_series(exp, p, 0.5, x).value == pytest.approx(expected, rel=1e-13)
    assert tempered_solution_subordination(exp, p, 0.5, x).value == pytest.approx(expected, abs=1e-9)


def test_solution_estimate_contract():
    with pytest.raises(ValueError):
        SolutionEstimate(1.0, "monte_carlo")
    with pytest.raises(ValueError):
        SolutionEstimate(1.0, "series", std_error=0.1)
    with pytest.raises(ValueError):
        SolutionEstimate(1.0, "guess")
