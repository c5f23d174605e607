"""Cross-validation suite: every invariant check behind ``tempfrac validate``.

Each check returns one or more :class:`CheckResult` records. ``measured`` is
compared with ``tolerance`` as an upper bound unless the check name ends in
``_min``, in which case it is a lower bound. Reports contain no timings, so
two runs with the same seed are byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from .frac_ops import SampledFunction, caputo_tempered
from .mc_solver import McConfig, estimates_from_batch, run_paths
from .pde_series import EigenExpansion, IntervalDomain, project, tempered_solution_series, tempered_solution_subordination
from .special_fn import (
    RelaxationQuery,
    TemperedParams,
    kernel_bound,
    laplace_symbol,
    mittag_leffler,
    relaxation,
    relaxation_dt,
    relaxation_grid,
    relaxation_transform,
)
from .subordinate_mc import TemperingStats, expected_acceptance, integrate_against_density, sample_tempered_increment, x_cutoff
from . import rng as rngmod

PROFILES = ("fast", "thorough")

BETAS = (0.3, 0.5, 0.8)
LAMS = (0.0, 0.5, 2.0)
MUS = (0.7, 1.0, 5.0)


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    status: str
    measured: float | None
    tolerance: float

    @classmethod
    def upper(cls, name: str, measured: float, tolerance: float) -> "CheckResult":
        ok = measured is not None and math.isfinite(measured) and measured <= tolerance
        return cls(name, "pass" if ok else "fail", _clean(measured), tolerance)

    @classmethod
    def lower(cls, name: str, measured: float, tolerance: float) -> "CheckResult":
        ok = measured is not None and math.isfinite(measured) and measured >= tolerance
        return cls(name, "pass" if ok else "fail", _clean(measured), tolerance)

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _clean(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def parameter_grid(betas=BETAS, lams=LAMS, mus=MUS):
    """(beta, lam, mu) triples with mu != lam**beta."""
    out = []
    for b in betas:
        for lam in lams:
            for mu in mus:
                if lam > 0 and math.isclose(mu, lam**b, rel_tol=1e-12):
                    continue
                out.append((b, lam, mu))
    return out


# ---------------------------------------------------------------------------
# relaxation function checks
# ---------------------------------------------------------------------------


def eigen_residual(beta: float, lam: float, mu: float, dt: float, t_lo: float = 0.01, t_hi: float = 2.0) -> float:
    """max over [t_lo, t_hi] of |D g + mu g| / (mu g), with D the discrete Caputo tempered derivative."""
    params = TemperedParams(beta, lam)
    n = int(round(t_hi / dt))
    t = dt * np.arange(n + 1)
    g = relaxation_grid(params, mu, t)
    # starting weights for the t^beta term of g restore the smooth-data rate
    d = caputo_tempered(SampledFunction(dt, g), params, start_exponents=(beta,))
    mask = d.times >= t_lo - 1e-12
    gm = g[1:][mask]
    return float(np.max(np.abs(d.values[mask] + mu * gm) / (mu * gm)))


def check_eigen_relation(combos, dt: float = 1e-3, tol: float = 1e-2, min_ratio: float = 2.0):
    worst, ratio = 0.0, math.inf
    for b, lam, mu in combos:
        r1 = eigen_residual(b, lam, mu, dt)
        r2 = eigen_residual(b, lam, mu, dt / 2)
        worst = max(worst, r1)
        ratio = min(ratio, r1 / r2)
    return [
        CheckResult.upper("eigen_relation_max_relative_residual", worst, tol),
        CheckResult.lower("eigen_relation_refinement_ratio_min", ratio, min_ratio),
    ]


def untempered_gap(beta: float, mu: float, t: np.ndarray) -> float:
    g = relaxation_grid(TemperedParams(beta, 0.0), mu, t)
    ml = np.array([mittag_leffler(beta, -mu * ti**beta) for ti in t])
    return float(np.max(np.abs(g - ml)))


def check_untempered(t: np.ndarray, betas=BETAS, mus=MUS, tol: float = 1e-6):
    worst = max(untempered_gap(b, mu, t) for b in betas for mu in mus)
    return [CheckResult.upper("untempered_mittag_leffler_max_abs", worst, tol)]


def derivative_bound_ratios(combos, t: np.ndarray) -> dict:
    """|dg/dt| / (mu k(t)) per (beta, lam, mu)."""
    out = {}
    for b, lam, mu in combos:
        p = TemperedParams(b, lam)
        dg = np.array([relaxation_dt(RelaxationQuery(p, mu, ti)) for ti in t])
        out[(b, lam, mu)] = np.abs(dg) / (mu * kernel_bound(p, t))
    return out


def check_derivative_bound(combos, t: np.ndarray):
    """Bound on every tested point, plus the same count restricted to mu > lam**beta.

    For mu < lam**beta the transform of g has a real pole and the bound is
    not expected to hold; both counts are reported.
    """
    ratios = derivative_bound_ratios(combos, t)
    viol_all = sum(int(np.sum(r > 1.0)) for r in ratios.values())
    viol_above = sum(int(np.sum(r > 1.0)) for (b, lam, mu), r in ratios.items() if mu > lam**b)
    worst = max(float(np.max(r)) for r in ratios.values())
    return [
        CheckResult.upper("derivative_bound_violations", viol_all, 0),
        CheckResult.upper("derivative_bound_max_ratio", worst, 1.0),
        CheckResult.upper("derivative_bound_violations_mu_above_lam_beta", viol_above, 0),
    ]


def check_laplace_identity(combos, s_values=(0.5, 1.0, 2.0, 5.0), tol: float = 1e-5):
    """t-Laplace transform of g against psi / (s (mu + psi))."""
    from scipy import integrate

    worst = 0.0
    s = np.asarray(s_values, dtype=float)
    for b, lam, mu in combos:
        p = TemperedParams(b, lam)

        def f(w):
            tt = math.exp(w)
            return np.exp(-s * tt) * tt * relaxation_grid(p, mu, np.array([tt]))[0]

        val, _ = integrate.quad_vec(f, -40.0, math.log(60.0 / s.min()), epsabs=1e-13, epsrel=1e-11, norm="max")
        worst = max(worst, float(np.max(np.abs(val / relaxation_transform(p, mu, s) - 1.0))))
    return [CheckResult.upper("relaxation_laplace_identity_max_rel", worst, tol)]


# ---------------------------------------------------------------------------
# inverse subordinator checks
# ---------------------------------------------------------------------------


def double_laplace(params: TemperedParams, s_values, mu_values) -> np.ndarray:
    """int int exp(-s t - mu x) g(t, x) dx dt by nested quadrature; shape (len(s), len(mu))."""
    from scipy import integrate

    s = np.asarray(s_values, dtype=float)
    mu = np.asarray(mu_values, dtype=float)

    def outer(w):
        t = math.exp(w)
        inner = integrate_against_density(params, t, lambda x: np.exp(-np.outer(mu, x)),
                                          x_max=x_cutoff(params, t, decay=mu.min()))
        return (np.exp(-s * t)[:, None] * inner[None, :] * t).ravel()

    val, _ = integrate.quad_vec(outer, -30.0, math.log(80.0 / s.min()), epsabs=1e-10, epsrel=1e-8, norm="max")
    return val.reshape(s.size, mu.size)


def check_double_laplace(pairs, s_values=(0.5, 1.0, 2.0), mu_values=(0.5, 1.0, 2.0), tol: float = 1e-4):
    worst = 0.0
    s = np.asarray(s_values)[:, None]
    mu = np.asarray(mu_values)[None, :]
    for b, lam in pairs:
        p = TemperedParams(b, lam)
        got = double_laplace(p, s_values, mu_values)
        psi = laplace_symbol(p, s)
        worst = max(worst, float(np.max(np.abs(got / (psi / (s * (mu + psi))) - 1.0))))
    return [CheckResult.upper("double_laplace_max_rel", worst, tol)]


SAMPLER_CASES = (
    # beta, lam, dx, s
    (0.5, 0.0, 1.0, 1.0),
    (0.5, 1.0, 0.5, 1.0),
    (0.3, 2.0, 0.2, 1.0),
    (0.8, 0.5, 1.0, 2.0),
)


def sampler_zscores(n: int, seed: int, cases=SAMPLER_CASES):
    """(max |z| of Laplace means, max |z| of acceptance rates) over the cases."""
    z_lt, z_acc = 0.0, 0.0
    for i, (b, lam, dx, s) in enumerate(cases):
        p = TemperedParams(b, lam)
        stats = TemperingStats()
        d = sample_tempered_increment(p, dx, rngmod.new_stream(seed, i, rngmod.ROLE_SPARE), size=n, stats=stats)
        e = np.exp(-s * d)
        exact = math.exp(-dx * laplace_symbol(p, s))
        z_lt = max(z_lt, abs(e.mean() - exact) / (e.std(ddof=1) / math.sqrt(n)))
        if lam > 0:
            q = expected_acceptance(p, dx)
            z_acc = max(z_acc, abs(stats.acceptance_rate - q) / math.sqrt(q * (1 - q) / stats.proposed))
    return z_lt, z_acc


def check_sampler(n: int, seed: int):
    z_lt, z_acc = sampler_zscores(n, seed)
    return [
        CheckResult.upper("sampler_laplace_max_zscore", z_lt, 3.0),
        CheckResult.upper("sampler_acceptance_max_zscore", z_acc, 3.0),
    ]


# ---------------------------------------------------------------------------
# solution checks
# ---------------------------------------------------------------------------

ROUTE_PARAMS = TemperedParams(0.5, 1.0)
ROUTE_T = (0.1, 0.5, 1.0)
ROUTE_X = (math.pi / 4, math.pi / 2)


def _psi1(x):
    return math.sqrt(2.0 / math.pi) * np.sin(x)


def route_table(cfg: McConfig | None, params=ROUTE_PARAMS, t_values=ROUTE_T, x_values=ROUTE_X):
    """Rows (t, x, u_series, u_subordination, mc estimate or None) for f = psi_1 on (0, pi)."""
    dom = IntervalDomain(math.pi)
    exp = EigenExpansion.single_mode(dom, 1)
    rows = []
    for x in x_values:
        mc = None
        if cfg is not None:
            batch = run_paths(x, t_values, params, dom, cfg)
            if not batch.indicator_forms_agree:
                raise AssertionError("indicator forms disagree")
            mc = estimates_from_batch(_psi1, batch)
        for j, t in enumerate(t_values):
            us = tempered_solution_series(exp, params, t, x).value
            ub = tempered_solution_subordination(exp, params, t, x).value
            rows.append((t, x, us, ub, None if mc is None else mc[j]))
    return rows


def check_route(cfg: McConfig, bias: float = 0.01):
    rows = route_table(cfg)
    gap = max(abs(r[2] - r[3]) for r in rows)
    excess = max(abs(r[4].value - r[2]) - 3.0 * r[4].std_error for r in rows)
    return [
        CheckResult.upper("route_series_vs_subordination_max_abs", gap, 1e-4),
        CheckResult.upper("route_mc_excess_over_3se", excess, bias),
    ]


def check_classical(cfg: McConfig, t_values=ROUTE_T, x_values=ROUTE_X):
    dom = IntervalDomain(math.pi)
    worst = 0.0
    for x in x_values:
        batch = run_paths(x, t_values, None, dom, cfg, time_change="identity")
        for t, est in zip(t_values, estimates_from_batch(_psi1, batch)):
            exact = math.exp(-t) * float(_psi1(x))
            worst = max(worst, abs(est.value - exact) / est.std_error)
    return [CheckResult.upper("classical_limit_max_zscore", worst, 3.0)]


CONTRACTION_PARAMS = ((0.3, 2.0), (0.5, 1.0), (0.8, 0.0))
CONTRACTION_T = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)


def _mode_weights(exp: EigenExpansion, params: TemperedParams, t: float) -> np.ndarray:
    w = np.zeros_like(exp.coeffs)
    etas = exp.eigenvalues
    for i in np.flatnonzero(exp.coeffs):
        w[i] = relaxation(RelaxationQuery(params, float(etas[i]), t))
    return w


def contraction_and_recovery(n_max: int = 64):
    """(max of ||u(t)|| - g(t, eta_1) ||f||, worst final relative ||u(t) - f||, monotone flag)."""
    dom = IntervalDomain(math.pi)
    exp = project(lambda x: x * (math.pi - x), dom, n_max=n_max)
    exp = EigenExpansion(dom, n_max, np.where(np.abs(exp.coeffs) > 1e-14, exp.coeffs, 0.0))
    f_norm = float(np.sqrt(np.sum(exp.coeffs**2)))
    excess, final, monotone = -math.inf, 0.0, True
    for b, lam in CONTRACTION_PARAMS:
        p = TemperedParams(b, lam)
        gaps = []
        for t in CONTRACTION_T:
            w = _mode_weights(exp, p, t)
            u_norm = float(np.sqrt(np.sum((w * exp.coeffs) ** 2)))
            g1 = relaxation(RelaxationQuery(p, float(exp.eigenvalues[0]), t))
            excess = max(excess, u_norm - g1 * f_norm)
            gaps.append(float(np.sqrt(np.sum(((1.0 - w) * exp.coeffs) ** 2))) / f_norm)
        monotone = monotone and all(a > b for a, b in zip(gaps, gaps[1:]))
        final = max(final, gaps[-1])
    return excess, final, monotone


def check_contraction(recovery_tol: float = 0.05):
    excess, final, monotone = contraction_and_recovery()
    return [
        CheckResult.upper("l2_contraction_max_excess", excess, 0.0),
        CheckResult.upper("initial_recovery_final_rel_l2", final, recovery_tol),
        CheckResult.upper("initial_recovery_nonmonotone", 0.0 if monotone else 1.0, 0.0),
    ]


def check_mc_determinism(seed: int):
    cfg = McConfig(n_paths=500, ds_diffusion=1e-3, seed=seed)
    dom = IntervalDomain(math.pi)
    a = estimates_from_batch(_psi1, run_paths(1.0, [0.5], ROUTE_PARAMS, dom, cfg))[0]
    b = estimates_from_batch(_psi1, run_paths(1.0, [0.5], ROUTE_PARAMS, dom, cfg))[0]
    same = a.value == b.value and a.std_error == b.std_error
    return [CheckResult.upper("mc_rerun_mismatch", 0.0 if same else 1.0, 0.0)]


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------


def spec_time_grid(dt: float = 1e-3, t_lo: float = 0.01, t_hi: float = 2.0) -> np.ndarray:
    n = int(round(t_hi / dt))
    t = dt * np.arange(n + 1)
    return t[t >= t_lo - 1e-12]


def suite(profile: str, seed: int, threads: int = 1) -> list[tuple[str, Callable[[], list]]]:
    if profile not in PROFILES:
        raise ValueError(f"profile must be one of {PROFILES}, got {profile!r}")
    full = parameter_grid()
    tgrid = spec_time_grid()
    if profile == "fast":
        eig = [(0.3, 0.5, 0.7), (0.5, 2.0, 5.0), (0.8, 0.0, 1.0), (0.5, 0.5, 1.0)]
        t_ml = tgrid[::40]
        t_bound = np.geomspace(0.01, 2.0, 12)
        dl_pairs = [(0.5, 0.5)]
        n_samp = 100_000
        mc = McConfig(n_paths=4000, dx_subordinator=1e-3, ds_diffusion=1e-3, seed=seed, threads=threads)
        lap = [(0.5, 1.0, 1.0), (0.8, 2.0, 0.7)]
    else:
        eig = full
        t_ml = tgrid
        t_bound = np.geomspace(0.01, 2.0, 60)
        dl_pairs = [(b, lam) for b in (0.5, 0.8) for lam in (0.5, 2.0)]
        n_samp = 1_000_000
        mc = McConfig(n_paths=100_000, dx_subordinator=1e-3, ds_diffusion=1e-4, seed=seed, threads=threads)
        lap = [(b, lam, mu) for b in BETAS for lam in (0.5, 2.0) for mu in (0.7, 5.0)]
    return [
        ("eigen_relation", lambda: check_eigen_relation(eig)),
        ("untempered", lambda: check_untempered(t_ml)),
        ("derivative_bound", lambda: check_derivative_bound(full, t_bound)),
        ("laplace_identity", lambda: check_laplace_identity(lap)),
        ("double_laplace", lambda: check_double_laplace(dl_pairs)),
        ("sampler", lambda: check_sampler(n_samp, seed)),
        ("route", lambda: check_route(mc)),
        ("classical", lambda: check_classical(mc)),
        ("contraction", check_contraction),
        ("determinism", lambda: check_mc_determinism(seed)),
    ]


def run_suite(profile: str = "fast", seed: int = 0, threads: int = 1, only: Iterable[str] | None = None) -> dict:
    results = []
    wanted = None if only is None else set(only)
    for name, fn in suite(profile, seed, threads):
        if wanted is not None and name not in wanted:
            continue
        results.extend(fn())
    return {
        "profile": profile,
        "seed": int(seed),
        "all_passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False, allow_nan=False) + "\n"
