"""Fractional derivatives of uniformly sampled functions.

All four operators share one discretisation: the Riemann-Liouville
derivative of the piecewise-linear interpolant, evaluated exactly at the
grid nodes (the L1 scheme plus the g(0) t^-beta term). Caputo versions
subtract the initial-value term instead of differencing g, and tempered
versions conjugate by exp(+-lam t).

Functions with a t**sigma singularity at the origin (0 < sigma < 1) limit
L1 to first order near t = 0. Passing ``start_exponents`` adds starting
weights on the first few samples that make the scheme exact for those
powers (as well as for 1 and t), which restores the smooth-data rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma

from .special_fn import TemperedParams, levy_tail

#: tilt exponents above this use extended precision accumulation
EXTENDED_PRECISION_LAM_T = 30.0
_MAX_LAM_T = 11000.0


@dataclass(frozen=True)
class SampledFunction:
    """Samples ``values[i] = g(t0 + i*dt)`` on a uniform grid.

    ``value_at_zero`` overrides g(0) in the Caputo initial-value terms only.
    """

    dt: float
    values: np.ndarray
    t0: float = 0.0
    value_at_zero: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("SampledFunction needs a 1-D record of at least 3 samples")
        if not (self.dt > 0) or not math.isfinite(self.dt):
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not (self.t0 >= 0):
            raise ValueError(f"t0 must be >= 0, got {self.t0!r}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, fn: Callable, dt: float, t_end: float) -> "SampledFunction":
        n = int(round(t_end / dt))
        t = dt * np.arange(n + 1)
        return cls(dt=dt, values=np.asarray(fn(t), dtype=float) * np.ones_like(t))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def g0(self) -> float:
        return self.values[0] if self.value_at_zero is None else float(self.value_at_zero)


@dataclass(frozen=True)
class DerivativeResult:
    """Derivative values at ``times`` (every grid node except t = 0)."""

    times: np.ndarray
    values: np.ndarray
    dt: float
    scheme_order: float


def _check(g: SampledFunction, beta: float):
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must lie strictly inside (0, 1), got {beta!r}")
    if g.t0 != 0.0:
        raise ValueError("fractional derivatives need samples starting at t = 0")


def _exponent_set(start_exponents):
    sig = []
    for s in start_exponents:
        s = float(s)
        if not (s > 0) or abs(s - round(s)) < 1e-12:
            raise ValueError(f"start exponents must be positive non-integers, got {s!r}")
        if all(abs(s - o) > 1e-12 for o in sig):
            sig.append(s)
    return [0.0, 1.0] + sig


def _l1_unit(samples: np.ndarray, beta: float) -> np.ndarray:
    """RL derivative of the piecewise-linear interpolant on a unit grid.

    Returns values at nodes 1..n-1. Dtype follows ``samples``.
    """
    n = samples.size
    k = np.arange(n, dtype=samples.dtype)
    pw = k ** (1 - beta)
    b = np.diff(pw)  # b_j = (j+1)^(1-b) - j^(1-b)
    conv = np.convolve(b, np.diff(samples))[: n - 1]
    g1 = samples.dtype.type(gamma(1.0 - beta))
    g2 = samples.dtype.type(gamma(2.0 - beta))
    return conv / g2 + samples[0] * k[1:] ** (-beta) / g1


def _start_weights(n: int, beta: float, exponents: Sequence[float], dtype) -> np.ndarray:
    """Unit-grid starting weights, shape (m, n-1) for the first m samples."""
    m = len(exponents)
    if m > n:
        raise ValueError("too few samples for the requested start exponents")
    k = np.arange(n, dtype=dtype)
    nodes = k[1:]
    vand = np.array([[float(j) ** s if (j or s) else 1.0 for j in range(m)] for s in exponents])
    rhs = np.empty((m, n - 1), dtype=float)
    for i, s in enumerate(exponents):
        exact = gamma(s + 1.0) / gamma(s + 1.0 - beta) * np.asarray(nodes, dtype=float) ** (s - beta)
        rhs[i] = exact - np.asarray(_l1_unit(k**s if s else np.ones(n, dtype=dtype), beta), dtype=float)
    return np.linalg.solve(vand, rhs).astype(dtype)


def _rl_samples(samples: np.ndarray, dt: float, beta: float, start_exponents=()) -> np.ndarray:
    out = _l1_unit(samples, beta)
    if start_exponents:
        exps = _exponent_set(start_exponents)
        w = _start_weights(samples.size, beta, exps, samples.dtype)
        out = out + samples[: len(exps)] @ w
    return out * samples.dtype.type(dt) ** (-beta)


def _order(beta):
    return 2.0 - beta


def rl_derivative(g: SampledFunction, beta: float, start_exponents: Sequence[float] = ()) -> DerivativeResult:
    """Riemann-Liouville derivative of order beta, O(dt^(2-beta)) for smooth g."""
    _check(g, beta)
    vals = _rl_samples(g.values.copy(), g.dt, beta, start_exponents)
    return DerivativeResult(g.times[1:], vals, g.dt, _order(beta))


def caputo_derivative(g: SampledFunction, beta: float, start_exponents: Sequence[float] = ()) -> DerivativeResult:
    """Caputo derivative: RL minus g(0) t^-beta / Gamma(1-beta)."""
    rl = rl_derivative(g, beta, start_exponents)
    vals = rl.values - g.g0 * rl.times ** (-beta) / gamma(1.0 - beta)
    return DerivativeResult(rl.times, vals, g.dt, rl.scheme_order)


def rl_tempered(g: SampledFunction, params: TemperedParams, start_exponents: Sequence[float] = ()) -> DerivativeResult:
    """Tempered RL derivative e^{-lam t} D^beta[e^{lam s} g] - lam^beta g."""
    beta, lam = params.beta, params.lam
    _check(g, beta)
    if lam == 0.0:
        return rl_derivative(g, beta, start_exponents)
    t = g.times
    lam_t = lam * t[-1]
    if lam_t > _MAX_LAM_T:
        raise ValueError(f"lam * T = {lam_t:.4g} overflows the exponential tilt")
    dtype = np.longdouble if lam_t > EXTENDED_PRECISION_LAM_T else np.float64
    tt = t.astype(dtype)
    lam_d = dtype(lam)
    h = np.exp(lam_d * tt) * g.values.astype(dtype)
    rl = _rl_samples(h, g.dt, beta, start_exponents)
    vals = np.exp(-lam_d * tt[1:]) * rl - dtype(params.lam_beta) * g.values[1:].astype(dtype)
    return DerivativeResult(t[1:], vals.astype(float), g.dt, _order(beta))


def caputo_tempered(g: SampledFunction, params: TemperedParams, start_exponents: Sequence[float] = ()) -> DerivativeResult:
    """Tempered Caputo derivative: tempered RL minus g(0) times the Levy tail."""
    rl = rl_tempered(g, params, start_exponents)
    vals = rl.values - g.g0 * levy_tail(params, rl.times)
    return DerivativeResult(rl.times, vals, g.dt, rl.scheme_order)
