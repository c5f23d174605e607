"""Eigenfunction-series solvers on an interval (0, M) and on boxes.

Dirichlet eigenpairs of the Laplacian on (0, M) are

    eta_n = (n pi / M)^2,   psi_n(x) = sqrt(2/M) sin(n pi x / M),

orthonormal in L^2(0, M); boxes use tensor products. Initial data f is
projected onto the basis, after which

    heat:      u(t, x) = sum_n exp(-eta_n t) f_n psi_n(x)
    tempered:  u(t, x) = sum_n g(t, eta_n) f_n psi_n(x)

with g the relaxation function. The tempered solution is also available as
the subordination integral int_0^inf T(l) f(x) g_lam(t, l) dl against the
density of the inverse subordinator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from .special_fn import QuadratureError, RelaxationQuery, TemperedParams, relaxation
from .subordinate_mc import integrate_against_density, x_cutoff

DEFAULT_N = 64
MAX_N = 4096
#: adaptive truncation stops once the trailing coefficients drop below this fraction of ||f||
TAIL_TOL = 1e-8

METHODS = ("series", "subordination", "monte_carlo", "classical_heat")


@dataclass(frozen=True)
class IntervalDomain:
    """(0, m) in 1-D, or the box prod_i (0, lengths[i]) when dims > 1."""

    m: float
    dims: int = 1
    axis_lengths: tuple | None = None

    def __post_init__(self):
        if not (self.m > 0) or not math.isfinite(self.m):
            raise ValueError(f"domain length must be > 0, got {self.m!r}")
        if int(self.dims) != self.dims or self.dims < 1:
            raise ValueError(f"dims must be a positive integer, got {self.dims!r}")
        if self.axis_lengths is not None:
            lengths = tuple(float(v) for v in self.axis_lengths)
            if len(lengths) != self.dims or any(not (v > 0) for v in lengths):
                raise ValueError("axis_lengths must give one positive length per dimension")
            object.__setattr__(self, "axis_lengths", lengths)

    @property
    def lengths(self) -> tuple:
        return self.axis_lengths if self.axis_lengths is not None else (float(self.m),) * self.dims

    def contains(self, x, closed: bool = True) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        L = np.asarray(self.lengths)
        if closed:
            return bool(np.all((x >= 0) & (x <= L)))
        return bool(np.all((x > 0) & (x < L)))

    def on_boundary(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.contains(x) and bool(np.any((x == 0) | (x == np.asarray(self.lengths))))


def _mode_1d(length: float, n, x):
    """sqrt(2/L) sin(n pi x / L), exactly zero on the endpoints."""
    x = np.asarray(x, dtype=float)
    val = math.sqrt(2.0 / length) * np.sin(np.multiply.outer(np.asarray(n), x) * (math.pi / length))
    edge = (x == 0.0) | (x == length)
    return np.where(edge, 0.0, val)


def eigenpairs(domain: IntervalDomain, n) -> tuple[float, Callable]:
    """(eta_n, psi_n) for mode index n (an int, or one int per axis on a box)."""
    idx = (n,) if np.ndim(n) == 0 else tuple(n)
    if len(idx) != domain.dims:
        raise ValueError(f"need {domain.dims} mode indices, got {len(idx)}")
    if any(int(k) != k or k < 1 for k in idx):
        raise ValueError(f"mode indices must be integers >= 1, got {n!r}")
    eta = sum((k * math.pi / L) ** 2 for k, L in zip(idx, domain.lengths))

    def psi(x):
        x = np.asarray(x, dtype=float)
        if domain.dims == 1:
            return _mode_1d(domain.lengths[0], idx[0], x)
        out = 1.0
        for axis, (k, L) in enumerate(zip(idx, domain.lengths)):
            out = out * _mode_1d(L, k, x[..., axis])
        return out

    return eta, psi


@dataclass(frozen=True)
class EigenExpansion:
    """Coefficients f_n of initial data; shape (n_max,) * dims."""

    domain: IntervalDomain
    n_max: int
    coeffs: np.ndarray
    norm_sq: float | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.n_max,) * self.domain.dims:
            raise ValueError(f"coeffs shape {c.shape} does not match n_max={self.n_max}, dims={self.domain.dims}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def single_mode(cls, domain: IntervalDomain, n=1, n_max: int = DEFAULT_N, amplitude: float = 1.0):
        idx = (n,) if np.ndim(n) == 0 else tuple(n)
        c = np.zeros((n_max,) * domain.dims)
        c[tuple(k - 1 for k in idx)] = amplitude
        return cls(domain, n_max, c, norm_sq=amplitude**2)

    @property
    def eigenvalues(self) -> np.ndarray:
        """eta for every coefficient, same shape as coeffs."""
        per_axis = [(np.arange(1, self.n_max + 1) * math.pi / L) ** 2 for L in self.domain.lengths]
        return sum(np.meshgrid(*per_axis, indexing="ij")) if self.domain.dims > 1 else per_axis[0]

    @property
    def tail(self) -> float:
        """Largest |f_n| over the upper half of the modes (truncation indicator)."""
        half = self.n_max // 2
        sl = tuple(slice(None) for _ in range(self.domain.dims))
        c = np.abs(self.coeffs)
        # any coefficient with some index above n_max/2
        mask = np.zeros(c.shape, dtype=bool)
        for axis in range(self.domain.dims):
            idx = list(sl)
            idx[axis] = slice(half, None)
            mask[tuple(idx)] = True
        return float(c[mask].max()) if mask.any() else 0.0

    @property
    def parseval_defect(self) -> float | None:
        if self.norm_sq is None:
            return None
        return self.norm_sq - float(np.sum(self.coeffs**2))

    def basis(self, x) -> np.ndarray:
        """psi_n(x) for every mode, shape coeffs.shape + x-batch shape."""
        x = np.asarray(x, dtype=float)
        n = np.arange(1, self.n_max + 1)
        if self.domain.dims == 1:
            return _mode_1d(self.domain.lengths[0], n, x)
        out = None
        for axis, L in enumerate(self.domain.lengths):
            m = _mode_1d(L, n, x[..., axis])
            shape = [1] * self.domain.dims + list(m.shape[1:])
            shape[axis] = self.n_max
            m = m.reshape(shape)
            out = m if out is None else out * m
        return out


@dataclass(frozen=True)
class SolutionEstimate:
    value: float
    method: str
    std_error: float | None = None
    truncation_error: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if (self.std_error is not None) != (self.method == "monte_carlo"):
            raise ValueError("std_error is reported for Monte Carlo estimates only")


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def _project_1d(f, length: float, n_max: int, breakpoints=()):
    # kinks of f go in as piece edges; the sine weight is handled by QAWO on each piece
    edges = [0.0] + sorted(b for b in set(breakpoints) if 0.0 < b < length) + [length]
    coeffs = np.empty(n_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for n in range(1, n_max + 1):
            val, err = 0.0, 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                v, e = integrate.quad(f, a, b, weight="sin", wvar=n * math.pi / length,
                                      epsabs=1e-13, epsrel=1e-11, limit=200)
                val += v
                err += e
            if not math.isfinite(val) or err > 1e-8:
                raise QuadratureError(f"projection onto mode {n} failed", err)
            coeffs[n - 1] = math.sqrt(2.0 / length) * val
        norm_sq = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            norm_sq += integrate.quad(lambda x: f(x) ** 2, a, b, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return coeffs, norm_sq


def _project_box(f, domain: IntervalDomain, n_max: int):
    # tensor Gauss-Legendre, about 12 nodes per half-wavelength of the top mode
    n_pts = max(256, 12 * n_max)
    z, w = roots_legendre(n_pts)
    grids, weights, bases = [], [], []
    for L in domain.lengths:
        x = 0.5 * L * (z + 1.0)
        grids.append(x)
        weights.append(0.5 * L * w)
        bases.append(_mode_1d(L, np.arange(1, n_max + 1), x) * (0.5 * L * w))
    mesh = np.meshgrid(*grids, indexing="ij")
    vals = np.asarray(f(np.stack(mesh, axis=-1)), dtype=float)
    coeffs = vals
    for axis, B in enumerate(bases):
        coeffs = np.moveaxis(np.tensordot(B, coeffs, axes=([1], [axis])), 0, axis)
    wgt = 1.0
    for axis, wa in enumerate(weights):
        shape = [1] * domain.dims
        shape[axis] = -1
        wgt = wgt * wa.reshape(shape)
    return coeffs, float(np.sum(wgt * vals**2))


def project(f: Callable, domain: IntervalDomain, n_max: int | None = None, breakpoints=()) -> EigenExpansion:
    """Coefficients f_n = <f, psi_n>.

    With n_max=None the truncation starts at 64 and doubles until the trailing
    coefficients fall below 1e-8 ||f|| (capped at 4096). On boxes f receives
    points with the coordinate on the last axis. ``breakpoints`` (1-D only)
    lists interior points where f is not smooth.
    """
    fixed = n_max is not None
    n = int(n_max) if fixed else DEFAULT_N
    if n < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max!r}")
    while True:
        if domain.dims == 1:
            coeffs, norm_sq = _project_1d(f, domain.lengths[0], n, breakpoints)
        else:
            coeffs, norm_sq = _project_box(f, domain, n)
        exp = EigenExpansion(domain, n, coeffs, norm_sq=norm_sq)
        if fixed or n >= MAX_N or exp.tail <= TAIL_TOL * math.sqrt(max(norm_sq, 0.0)):
            return exp
        n *= 2


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------


def _point(domain: IntervalDomain, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (() if domain.dims == 1 else (domain.dims,)):
        raise ValueError(f"expected a point of dimension {domain.dims}, got shape {x.shape}")
    if not domain.contains(x):
        raise ValueError(f"x={x} lies outside the closed domain")
    return x


def _weighted_sum(exp: EigenExpansion, x, weights) -> float:
    if exp.domain.on_boundary(x):
        return 0.0
    return float(np.sum(exp.coeffs * weights * exp.basis(x)))


def _sup_mode(domain: IntervalDomain) -> float:
    return math.prod(math.sqrt(2.0 / L) for L in domain.lengths)


def heat_solution(exp: EigenExpansion, t: float, x) -> SolutionEstimate:
    """Killed heat semigroup T(t) f at x."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    x = _point(exp.domain, x)
    decay = np.exp(-exp.eigenvalues * t)
    value = _weighted_sum(exp, x, decay)
    eta_n = (exp.n_max * math.pi / max(exp.domain.lengths)) ** 2
    trunc = exp.tail * _sup_mode(exp.domain) * math.exp(-eta_n * t)
    return SolutionEstimate(value, "classical_heat", truncation_error=trunc)


def heat_kernel(domain: IntervalDomain, t: float, x, y, n_max: int | None = None) -> float:
    """p_D(t, x, y) = sum_n exp(-eta_n t) psi_n(x) psi_n(y), symmetric in x and y."""
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t!r}")
    x = _point(domain, x)
    y = _point(domain, y)
    if n_max is None:
        # exp(-eta t) < 1e-17 beyond this index
        L = max(domain.lengths)
        n_max = max(8, int(math.ceil(L / math.pi * math.sqrt(40.0 / t))) + 1)
    exp = EigenExpansion(domain, n_max, np.zeros((n_max,) * domain.dims))
    if domain.on_boundary(x) or domain.on_boundary(y):
        return 0.0
    terms = np.exp(-exp.eigenvalues * t) * exp.basis(x) * exp.basis(y)
    return float(np.sum(terms))


def relaxation_modes(exp: EigenExpansion, params: TemperedParams, t: float) -> np.ndarray:
    """g(t, eta_n) for each coefficient; skipped (0) where the coefficient is exactly 0."""
    etas = exp.eigenvalues
    out = np.zeros_like(etas)
    live = exp.coeffs != 0.0
    cache = {}
    for idx in zip(*np.nonzero(live)):
        eta = float(etas[idx])
        if eta not in cache:
            try:
                cache[eta] = relaxation(RelaxationQuery(params, eta, t))
            except QuadratureError as exc:
                raise QuadratureError(f"relaxation failed for mode {tuple(i + 1 for i in idx)}", exc.abserr) from exc
        out[idx] = cache[eta]
    return out


def tempered_solution_series(exp: EigenExpansion, params: TemperedParams, t: float, x) -> SolutionEstimate:
    """u(t, x) = sum_n g(t, eta_n) f_n psi_n(x)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    x = _point(exp.domain, x)
    weights = relaxation_modes(exp, params, t)
    value = _weighted_sum(exp, x, weights)
    # g(t, eta) is non-increasing in eta, so the top mode bounds the neglected ones
    trunc = exp.tail * _sup_mode(exp.domain)
    if trunc > 0.0:
        trunc *= relaxation(RelaxationQuery(params, float(np.max(exp.eigenvalues)), t))
    return SolutionEstimate(value, "series", truncation_error=trunc)


def tempered_solution_subordination(exp: EigenExpansion, params: TemperedParams, t: float, x) -> SolutionEstimate:
    """u(t, x) = int_0^inf (T(l) f)(x) g_lam(t, l) dl by nested quadrature."""
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t!r}")
    x = _point(exp.domain, x)
    if exp.domain.on_boundary(x):
        return SolutionEstimate(0.0, "subordination", truncation_error=0.0)
    live = exp.coeffs != 0.0
    etas = exp.eigenvalues[live]
    amp = (exp.coeffs * exp.basis(x))[live]
    eta_min = float(etas.min()) if etas.size else 1.0

    def heat_at(levels):
        return (amp[:, None] * np.exp(-np.outer(etas, levels))).sum(axis=0)[None, :]

    val = integrate_against_density(params, t, heat_at, x_max=x_cutoff(params, t, decay=eta_min), tol=1e-10)
    return SolutionEstimate(float(val[0]), "subordination", truncation_error=exp.tail * _sup_mode(exp.domain))


def l2_norm(exp: EigenExpansion, weights=None) -> float:
    """||sum_n w_n f_n psi_n||_2 via Parseval."""
    c = exp.coeffs if weights is None else exp.coeffs * weights
    return float(math.sqrt(np.sum(c**2)))
