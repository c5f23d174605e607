"""Tempered stable subordinators, their first-passage inverses and densities.

Sampling
    D(dx) for the standard stable subordinator (E exp(-s D(x)) = exp(-x s^beta))
    uses Kanter's representation D(1) = (A(U)/W)^{(1-beta)/beta} with
    U ~ U(0, pi), W ~ Exp(1). Tempered increments are exponentially tilted
    stable draws: propose S, accept with probability exp(-lam S). When the
    acceptance exp(-dx lam^beta) would drop below 0.1 the step is split into
    sub-steps whose draws are summed.

Inversion
    E(t) is bracketed on the path grid: e_upper = k dx with k the first index
    whose level exceeds t. The point estimate is the bracket midpoint.

Density
    g(t, x) = int_0^t phi(t-y, inf) q(y, x) dy by adaptive quadrature, split
    at t/2: log y below (resolves the peak of q near y ~ x^(1/beta)), and
    t - y = t v^{1/(1-beta)} above, which absorbs the (t-y)^{-beta}
    singularity of the Levy tail.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate
from scipy.special import gamma, gammaincc, roots_legendre

from . import rng as rngmod
from .special_fn import QuadratureError, TemperedParams, laplace_symbol, levy_tail, log_f1_standard

#: minimum per-proposal acceptance before a step is subdivided
MIN_ACCEPTANCE = 0.1
MAX_PROPOSALS = 1_000_000
DEFAULT_MAX_STEPS = 50_000_000


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _stable_unit(state, beta):
    """One draw of D(1), Kanter's representation."""
    theta = math.pi * rngmod.next_double(state)
    w = rngmod.next_exponential(state)
    log_a = (
        beta * math.log(math.sin(beta * theta))
        + (1.0 - beta) * math.log(math.sin((1.0 - beta) * theta))
        - math.log(math.sin(theta))
    )
    return math.exp(log_a / beta - (1.0 - beta) / beta * math.log(w))


@njit(cache=True)
def _tempered_step(state, beta, lam, sub_scale, n_sub, counts):
    """Sum of n_sub tilted sub-increments; -1.0 if the proposal budget runs out.

    counts[0] accumulates accepted proposals, counts[1] all proposals.
    """
    total = 0.0
    for _ in range(n_sub):
        accepted = False
        for _ in range(MAX_PROPOSALS):
            s = sub_scale * _stable_unit(state, beta)
            counts[1] += 1
            # lam = 0 never consumes the acceptance uniform
            if lam == 0.0 or rngmod.next_double(state) < math.exp(-lam * s):
                accepted = True
                break
        if not accepted:
            return -1.0
        counts[0] += 1
        total += s
    return total


@njit(cache=True)
def _stable_batch(state, beta, scale, out):
    for i in range(out.size):
        out[i] = scale * _stable_unit(state, beta)


@njit(cache=True)
def _tempered_batch(state, beta, lam, sub_scale, n_sub, out, counts):
    for i in range(out.size):
        d = _tempered_step(state, beta, lam, sub_scale, n_sub, counts)
        if d < 0.0:
            return False
        out[i] = d
    return True


@njit(cache=True)
def _build_levels(state, beta, lam, sub_scale, n_sub, t_horizon, max_steps, counts):
    cap = 1024
    levels = np.empty(cap)
    levels[0] = 0.0
    n = 1
    level = 0.0
    while level <= t_horizon:
        if n >= max_steps:
            return levels[:n], 1
        d = _tempered_step(state, beta, lam, sub_scale, n_sub, counts)
        if d < 0.0:
            return levels[:n], 2
        level += d
        if n == cap:
            grown = np.empty(2 * cap)
            grown[:cap] = levels
            levels = grown
            cap *= 2
        levels[n] = level
        n += 1
    return levels[:n], 0


@njit(cache=True)
def _first_passage_batch(seed, path0, beta, lam, sub_scale, n_sub, t_sorted, max_steps, out_k, counts):
    """First-passage indices of every t in t_sorted, one stream per path."""
    state = np.empty(rngmod.STATE_SIZE, dtype=np.uint64)
    nt = t_sorted.size
    for p in range(out_k.shape[0]):
        rngmod.init_stream(state, seed, np.uint64((path0 + p) * rngmod.N_ROLES + rngmod.ROLE_SUBORDINATOR))
        level = 0.0
        k = 0
        j = 0
        while j < nt:
            while j < nt and level > t_sorted[j]:
                out_k[p, j] = k
                j += 1
            if j == nt:
                break
            if k >= max_steps:
                return p
            d = _tempered_step(state, beta, lam, sub_scale, n_sub, counts)
            if d < 0.0:
                return p
            level += d
            k += 1
    return -1


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _subdivision(params: TemperedParams, dx: float):
    """Number of sub-steps so each proposal is accepted with probability >= 0.1."""
    n_sub = max(1, math.ceil(dx * params.lam_beta / -math.log(MIN_ACCEPTANCE) - 1e-12))
    return n_sub, (dx / n_sub) ** (1.0 / params.beta)


def expected_acceptance(params: TemperedParams, dx: float) -> float:
    """Per-proposal acceptance probability exp(-dx' lam^beta) after subdivision."""
    n_sub, _ = _subdivision(params, dx)
    return math.exp(-dx / n_sub * params.lam_beta)


def _check_dx(dx):
    if not (dx > 0) or not math.isfinite(dx):
        raise ValueError(f"dx must be > 0, got {dx!r}")


def sample_stable_increment(beta: float, dx: float, rng, size=None):
    """Draw(s) of D(dx) for the standard stable subordinator."""
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie strictly inside (0, 1), got {beta!r}")
    _check_dx(dx)
    state = rngmod.as_stream(rng)
    out = np.empty(1 if size is None else int(size))
    _stable_batch(state, beta, dx ** (1.0 / beta), out)
    return float(out[0]) if size is None else out


@dataclass
class TemperingStats:
    accepted: int = 0
    proposed: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")


def sample_tempered_increment(params: TemperedParams, dx: float, rng, size=None, stats: TemperingStats | None = None):
    """Draw(s) of D_lam(dx) by exponential rejection of stable proposals.

    ``stats``, if given, is updated with accepted/proposed counts.
    """
    _check_dx(dx)
    state = rngmod.as_stream(rng)
    n_sub, sub_scale = _subdivision(params, dx)
    out = np.empty(1 if size is None else int(size))
    counts = np.zeros(2, dtype=np.int64)
    ok = _tempered_batch(state, params.beta, params.lam, sub_scale, n_sub, out, counts)
    if stats is not None:
        stats.accepted += int(counts[0])
        stats.proposed += int(counts[1])
    if not ok:
        raise RuntimeError(f"tempered sampler exceeded {MAX_PROPOSALS} proposals for one increment")
    return float(out[0]) if size is None else out


# ---------------------------------------------------------------------------
# paths and first passage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InverseSample:
    """Bracket of E(t) on the path grid: D(e_lower) <= t < D(e_upper)."""

    t: float
    e_lower: float
    e_upper: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.e_lower + self.e_upper)


@dataclass(frozen=True)
class SubordinatorPath:
    dx: float
    levels: np.ndarray
    params: TemperedParams
    seed: int
    stats: TemperingStats = field(default_factory=TemperingStats, compare=False)

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.levels.size)

    @property
    def horizon(self) -> float:
        return float(self.levels[-1])

    def to_csv(self, path) -> None:
        """Dump the path with columns x, D_lambda_of_x."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "D_lambda_of_x"])
            for xi, li in zip(self.x, self.levels):
                w.writerow([repr(float(xi)), repr(float(li))])


def build_path(
    params: TemperedParams,
    dx: float,
    t_horizon: float,
    rng=None,
    seed: int = 0,
    path_index: int = 0,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> SubordinatorPath:
    """Cumulative tempered increments until the level first exceeds t_horizon.

    Without an explicit ``rng`` the path uses the subordinator stream of
    (seed, path_index), the same stream the Monte Carlo solver uses.
    """
    _check_dx(dx)
    if not (t_horizon > 0):
        raise ValueError(f"t_horizon must be > 0, got {t_horizon!r}")
    if rng is None:
        state = rngmod.new_stream(seed, path_index, rngmod.ROLE_SUBORDINATOR)
    else:
        state = rngmod.as_stream(rng)
    n_sub, sub_scale = _subdivision(params, dx)
    counts = np.zeros(2, dtype=np.int64)
    levels, status = _build_levels(state, params.beta, params.lam, sub_scale, n_sub, float(t_horizon), int(max_steps), counts)
    if status == 1:
        raise RuntimeError(f"path did not pass t={t_horizon} within {max_steps} steps")
    if status == 2:
        raise RuntimeError(f"tempered sampler exceeded {MAX_PROPOSALS} proposals for one increment")
    stats = TemperingStats(int(counts[0]), int(counts[1]))
    return SubordinatorPath(dx=dx, levels=levels, params=params, seed=seed, stats=stats)


def inverse_at(path: SubordinatorPath, t: float) -> InverseSample:
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    if t >= path.horizon:
        raise ValueError(f"t={t} is beyond the path horizon {path.horizon}")
    k = int(np.searchsorted(path.levels, t, side="right"))
    return InverseSample(t=float(t), e_lower=(k - 1) * path.dx, e_upper=k * path.dx)


def first_passage_indices(params: TemperedParams, t, n_paths: int, dx: float, seed: int, path0: int = 0,
                          max_steps: int = DEFAULT_MAX_STEPS) -> np.ndarray:
    """First-passage indices k (E(t) in [(k-1)dx, k dx)) for many paths.

    Path p uses the subordinator stream of (seed, path0 + p); the returned
    array has shape (n_paths, len(t)) in the order of ``t``.
    """
    _check_dx(dx)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    order = np.argsort(t, kind="stable")
    n_sub, sub_scale = _subdivision(params, dx)
    out = np.empty((int(n_paths), t.size), dtype=np.int64)
    counts = np.zeros(2, dtype=np.int64)
    bad = _first_passage_batch(np.uint64(seed), int(path0), params.beta, params.lam, sub_scale, n_sub,
                               t[order], int(max_steps), out, counts)
    if bad >= 0:
        raise RuntimeError(f"path {path0 + bad} failed to pass t={t.max()} within the step budget")
    res = np.empty_like(out)
    res[:, order] = out
    return res


def sample_inverse(params: TemperedParams, t, n_paths: int, dx: float, seed: int, path0: int = 0) -> np.ndarray:
    """Midpoint estimates of E(t), shape (n_paths, len(t))."""
    k = first_passage_indices(params, t, n_paths, dx, seed, path0)
    return (k - 0.5) * dx


# ---------------------------------------------------------------------------
# inverse-subordinator density
# ---------------------------------------------------------------------------

DENSITY_EPSABS = 1e-11
DENSITY_EPSREL = 1e-10
#: error (relative to max(1, max g)) above which a density quadrature fails
DENSITY_TOL = 1e-8


def _log_q(params: TemperedParams, y, x):
    """log q(y, x) with q the tempered density of D_lam(x) at y."""
    beta = params.beta
    log_x = np.log(x)
    out = -log_x / beta + log_f1_standard(beta, y * np.exp(-log_x / beta))
    if params.lam:
        out = out - params.lam * y + x * params.lam_beta
    return out


def _tail_weight(params: TemperedParams, t: float):
    """phi(t - y, inf) dy written in v with t - y = t v^p, p = 1/(1-beta).

    The Jacobian t p v^(p-1) cancels the (t-y)^-beta singularity exactly.
    """
    beta, lam = params.beta, params.lam
    p = 1.0 / (1.0 - beta)
    c1 = t ** (1.0 - beta) * p / gamma(1.0 - beta)

    def weight(v):
        w = t * v**p
        out = c1 * math.exp(-lam * w)
        if lam:
            out -= params.lam_beta * gammaincc(1.0 - beta, lam * w) * t * p * v ** (p - 1.0)
        return out

    return weight


def inverse_density_grid(params: TemperedParams, t: float, x) -> np.ndarray:
    """g_lam(t, x) for an array of x at fixed t (one vector quadrature).

    The y-integral is split at t/2: below it runs in log y, where q(., x)
    has an O(1)-wide bump near y ~ x^(1/beta) for every x; above it the
    v-substitution handles the Levy-tail singularity at y = t.
    """
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0):
        raise ValueError("x must be > 0")
    beta = params.beta
    half = 0.5 * t

    def lower(s):
        y = math.exp(s)
        return float(levy_tail(params, t - y)) * y * np.exp(_log_q(params, y, x))

    weight = _tail_weight(params, t)

    def upper(v):
        y = t * (1.0 - v ** (1.0 / (1.0 - beta)))
        return weight(v) * np.exp(_log_q(params, y, x))

    # below y_lo every f_1 argument is under the tabulated range (f_1 < e^-700)
    s_lo = math.log(1e-3) + np.min(np.log(x)) / beta + math.log(_f1_floor(beta))
    s_hi = math.log(half)
    v_half = 0.5 ** (1.0 - beta)
    total, err = np.zeros_like(x), 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if s_lo < s_hi:
            pts = np.arange(s_hi - 4.0, s_lo, -4.0)[::-1]
            val, e = integrate.quad_vec(lower, s_lo, s_hi, epsabs=DENSITY_EPSABS, epsrel=DENSITY_EPSREL,
                                        norm="max", limit=4000, points=pts if pts.size else None)
            total += val
            err += e
        val, e = integrate.quad_vec(upper, 0.0, v_half, epsabs=DENSITY_EPSABS, epsrel=DENSITY_EPSREL,
                                    norm="max", limit=2000)
        total += val
        err += e
    if err > DENSITY_TOL * max(1.0, float(np.max(np.abs(total)))):
        raise QuadratureError(f"inverse density quadrature at t={t} did not converge", err)
    return np.maximum(total, 0.0)


def _f1_floor(beta: float) -> float:
    if beta == 0.5:
        return 1.0 / 2800.0  # exp(-1/(4u)) < 1e-300 below this
    from .special_fn import _f1_table

    return _f1_table(beta)[1]


def inverse_density_quadrature(params: TemperedParams, t: float, x: float) -> float:
    """Density g_lam(t, x) of E_lam(t)."""
    return float(inverse_density_grid(params, t, np.array([x]))[0])


def inverse_density_limit_zero(params: TemperedParams, t: float) -> float:
    """g_lam(t, 0+) = phi_lam(t, inf), the mass rate of E(t) at the origin."""
    return float(levy_tail(params, t))


# composite Gauss-Legendre in x, shared by the transform checks and the
# subordination solver

_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = roots_legendre(_GL_ORDER)


def _geometric_panels(scale: float, x_max: float, ratio: float) -> np.ndarray:
    # g(t, .) is smooth at x = 0, so one panel covers [0, scale/100]
    edges = [0.0]
    e = 1e-2 * scale
    while e < x_max:
        edges.append(e)
        e *= ratio
    edges.append(x_max)
    return np.asarray(edges)


def _gl_nodes(edges):
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (1.0 + _GL_NODES)).ravel()
    weights = (half * _GL_WEIGHTS).ravel()
    return nodes, weights


def inverse_scale(params: TemperedParams, t: float) -> float:
    """Rough size of E(t): min of the stable and the law-of-large-numbers scales."""
    small = t**params.beta / gamma(1.0 + params.beta)
    if params.lam == 0.0:
        return small
    return min(small, t / (params.beta * params.lam ** (params.beta - 1.0)))


def x_cutoff(params: TemperedParams, t: float, decay: float = 0.0, digits: float = 36.0) -> float:
    """Upper limit beyond which both e^{-decay x} and P(E(t) > x) are below e^{-digits}.

    Uses the Chernoff bound P(E(t) > x) = P(D(x) < t) <= exp(t - x psi(1)).
    """
    tail = (t + digits) / laplace_symbol(params, 1.0)
    if decay > 0:
        tail = min(tail, digits / decay)
    return max(tail, 40.0 * inverse_scale(params, t))


def integrate_against_density(params: TemperedParams, t: float, fn, x_max: float | None = None,
                              tol: float = 1e-9) -> np.ndarray:
    """int_0^inf fn(x) g(t, x) dx for a vector-valued fn(x) -> (k, len(x)).

    Composite 16-point Gauss-Legendre on geometric panels. Each round
    evaluates two panel ratios (r and sqrt r) in one density call and
    accepts when they agree to ``tol``.
    """
    if x_max is None:
        x_max = x_cutoff(params, t)
    scale = inverse_scale(params, t)
    ratio = 2.0
    diff = math.inf
    for _ in range(3):
        na, wa = _gl_nodes(_geometric_panels(scale, x_max, ratio))
        nb, wb = _gl_nodes(_geometric_panels(scale, x_max, math.sqrt(ratio)))
        g = inverse_density_grid(params, t, np.concatenate([na, nb]))
        va = np.asarray(fn(na)) @ (wa * g[: na.size])
        vb = np.asarray(fn(nb)) @ (wb * g[na.size:])
        diff = float(np.max(np.abs(va - vb)))
        if diff <= tol:
            return vb
        ratio = math.sqrt(ratio)
    raise QuadratureError(f"x-quadrature at t={t} did not settle", diff)
