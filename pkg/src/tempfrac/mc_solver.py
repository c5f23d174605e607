"""Monte Carlo solution of the tempered fractional Cauchy problem.

u(t, x) = E_x[ f(X(E(t))) ; tau_D(X) > E(t) ]

with X the diffusion generated by the Laplacian (increments of variance
2 ds per axis), killed on leaving the box, and E the inverse tempered stable
subordinator drawn independently of X. Per path, the subordinator and the
walk use separate counter-based streams keyed by (seed, path, role), so the
estimate depends only on the seed and never on thread count or chunking.

Killing combines the discrete exit check with a Brownian-bridge correction:
between two interior points at distances d1, d2 from a face the walk is
killed with probability exp(-d1 d2 / ds) (variance 2 ds per step).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from . import rng as rngmod
from .pde_series import IntervalDomain, SolutionEstimate
from .special_fn import TemperedParams
from .subordinate_mc import DEFAULT_MAX_STEPS, _subdivision, _tempered_step

#: bridge kill probabilities below exp(-BRIDGE_CUTOFF) are skipped without a draw
BRIDGE_CUTOFF = 40.0
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    dx_subordinator: float = 1e-3
    ds_diffusion: float = 1e-4
    seed: int = 0
    bridge: bool = True
    threads: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError(f"n_paths must be an integer >= 1, got {self.n_paths!r}")
        for name in ("dx_subordinator", "ds_diffusion"):
            v = getattr(self, name)
            if not (v > 0) or not math.isfinite(v):
                raise ValueError(f"{name} must be > 0, got {v!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a non-negative 64-bit integer, got {self.seed!r}")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads!r}")


@dataclass(frozen=True)
class KilledPathOutcome:
    """terminal_position is None when the walk was killed before the horizon."""

    terminal_position: np.ndarray | None
    operational_time_used: float

    @property
    def killed(self) -> bool:
        return self.terminal_position is None


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _walk(state, x, lengths, checkpoints, ds, bridge, out_pos, out_alive):
    """Advance x (in place) through sorted operational checkpoints.

    Each segment is cut into equal steps of at most ds so the walk lands on
    every checkpoint exactly. Returns the killing time (inf if alive at the
    last checkpoint); out_pos/out_alive receive the state at each checkpoint.
    """
    dims = x.size
    s = 0.0
    tau = np.inf
    have_spare = False
    spare = 0.0
    for j in range(checkpoints.size):
        target = checkpoints[j]
        if tau == np.inf and target > s:
            n = max(1, int(math.ceil((target - s) / ds - 1e-9)))
            h = (target - s) / n
            sd = math.sqrt(2.0 * h)
            for i in range(n):
                s_next = target if i == n - 1 else s + h
                exit_p = 0.0
                out = False
                for a in range(dims):
                    if have_spare:
                        z = spare
                        have_spare = False
                    else:
                        z, spare = rngmod.normal_pair(state)
                        have_spare = True
                    old = x[a]
                    new = old + sd * z
                    x[a] = new
                    if new <= 0.0 or new >= lengths[a]:
                        out = True
                    elif bridge:
                        e0 = old * new / h
                        e1 = (lengths[a] - old) * (lengths[a] - new) / h
                        if e0 < BRIDGE_CUTOFF:
                            exit_p = 1.0 - (1.0 - exit_p) * (1.0 - math.exp(-e0))
                        if e1 < BRIDGE_CUTOFF:
                            exit_p = 1.0 - (1.0 - exit_p) * (1.0 - math.exp(-e1))
                if not out and exit_p > 0.0 and rngmod.next_double(state) < exit_p:
                    out = True
                s = s_next
                if out:
                    tau = s
                    break
        alive = tau == np.inf
        out_alive[j] = alive
        for a in range(dims):
            out_pos[j, a] = x[a] if alive else np.nan
    return tau


@njit(cache=True, nogil=True)
def _paths_kernel(seed, path0, x0, lengths, t_sorted, identity_time, beta, lam, sub_scale, n_sub, dx, ds,
                  bridge, max_steps, out_pos, out_alive, out_alive_alt, out_e):
    """Run paths path0 .. path0 + len(out_e) - 1. Returns -1 or the failing local index."""
    nt = t_sorted.size
    sub = np.empty(rngmod.STATE_SIZE, dtype=np.uint64)
    dif = np.empty(rngmod.STATE_SIZE, dtype=np.uint64)
    counts = np.zeros(2, dtype=np.int64)
    cap = 4096
    levels = np.empty(cap)
    kidx = np.empty(nt, dtype=np.int64)
    e = np.empty(nt)
    x = np.empty(x0.size)
    for p in range(out_e.shape[0]):
        gp = path0 + p
        n_lv = 1
        if identity_time:
            for j in range(nt):
                e[j] = t_sorted[j]
        else:
            rngmod.init_stream(sub, seed, np.uint64(gp * rngmod.N_ROLES + rngmod.ROLE_SUBORDINATOR))
            levels[0] = 0.0
            level = 0.0
            k = 0
            j = 0
            while j < nt:
                while j < nt and level > t_sorted[j]:
                    kidx[j] = k
                    j += 1
                if j == nt:
                    break
                if k >= max_steps:
                    return p
                d = _tempered_step(sub, beta, lam, sub_scale, n_sub, counts)
                if d < 0.0:
                    return p
                level += d
                k += 1
                if k >= cap:
                    grown = np.empty(2 * cap)
                    grown[:cap] = levels
                    levels = grown
                    cap *= 2
                levels[k] = level
            n_lv = k + 1
            for j in range(nt):
                e[j] = (kidx[j] - 0.5) * dx
        for j in range(nt):
            out_e[p, j] = e[j]
        rngmod.init_stream(dif, seed, np.uint64(gp * rngmod.N_ROLES + rngmod.ROLE_DIFFUSION))
        for a in range(x0.size):
            x[a] = x0[a]
        tau = _walk(dif, x, lengths, e, ds, bridge, out_pos[p], out_alive[p])
        # second indicator form: exit time of the time-changed walk, X(E(.))
        if identity_time:
            for j in range(nt):
                out_alive_alt[p, j] = tau > t_sorted[j]
        else:
            if tau == np.inf:
                tau_y = np.inf
            else:
                kk = max(1, int(math.ceil(tau / dx + 0.5)))
                while kk > 1 and (kk - 1 - 0.5) * dx >= tau:
                    kk -= 1
                while (kk - 0.5) * dx < tau:
                    kk += 1
                # E_mid(t) >= tau exactly when t >= levels[kk - 1]
                tau_y = levels[kk - 1] if kk - 1 < n_lv else np.inf
            for j in range(nt):
                out_alive_alt[p, j] = tau_y > t_sorted[j]
    return -1


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def _as_point(domain: IntervalDomain, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (domain.dims,):
        raise ValueError(f"x0 must have {domain.dims} coordinate(s)")
    if not domain.contains(x0, closed=False):
        raise ValueError(f"x0={x0} must lie strictly inside the domain")
    return x0


@dataclass(frozen=True)
class PathBatch:
    """Raw per-path output of the Monte Carlo engine (arrays ordered like ``t``)."""

    t: np.ndarray
    positions: np.ndarray  # (n_paths, nt, dims), nan where killed
    alive: np.ndarray  # I(tau_X > E(t))
    alive_alt: np.ndarray  # I(tau of X(E(.)) > t)
    e_mid: np.ndarray  # operational time used per checkpoint

    @property
    def indicator_forms_agree(self) -> bool:
        return bool(np.array_equal(self.alive, self.alive_alt))


def run_paths(x0, t, params: TemperedParams | None, domain: IntervalDomain, cfg: McConfig,
              time_change: str = "inverse") -> PathBatch:
    """Simulate cfg.n_paths time-changed killed walks observed at clock times t.

    ``time_change="identity"`` replaces E(t) by t (the classical heat case).
    """
    if time_change not in ("inverse", "identity"):
        raise ValueError(f"unknown time_change {time_change!r}")
    identity = time_change == "identity"
    if not identity and params is None:
        raise ValueError("an inverse time change needs TemperedParams")
    x0 = _as_point(domain, x0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("observation times must be finite and >= 0")
    order = np.argsort(t, kind="stable")
    ts = np.ascontiguousarray(t[order])
    lengths = np.asarray(domain.lengths, dtype=float)
    if identity:
        beta, lam, n_sub, sub_scale = 0.5, 0.0, 1, 1.0
    else:
        beta, lam = params.beta, params.lam
        n_sub, sub_scale = _subdivision(params, cfg.dx_subordinator)
    n, nt, dims = int(cfg.n_paths), ts.size, domain.dims
    pos = np.empty((n, nt, dims))
    alive = np.empty((n, nt), dtype=np.bool_)
    alive_alt = np.empty((n, nt), dtype=np.bool_)
    e_mid = np.empty((n, nt))

    def job(lo):
        hi = min(n, lo + DEFAULT_CHUNK)
        bad = _paths_kernel(np.uint64(cfg.seed), lo, x0, lengths, ts, identity, beta, lam, sub_scale, n_sub,
                            cfg.dx_subordinator, cfg.ds_diffusion, cfg.bridge, DEFAULT_MAX_STEPS,
                            pos[lo:hi], alive[lo:hi], alive_alt[lo:hi], e_mid[lo:hi])
        if bad >= 0:
            raise RuntimeError(f"subordinator path {lo + bad} exhausted its step budget")

    starts = range(0, n, DEFAULT_CHUNK)
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            list(pool.map(job, starts))
    else:
        for lo in starts:
            job(lo)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return PathBatch(t=t, positions=pos[:, inv], alive=alive[:, inv], alive_alt=alive_alt[:, inv], e_mid=e_mid[:, inv])


def _scores(f: Callable, batch: PathBatch, j: int) -> np.ndarray:
    sc = np.zeros(batch.alive.shape[0])
    live = batch.alive[:, j]
    if np.any(live):
        pts = batch.positions[live, j]
        vals = np.asarray(f(pts[:, 0] if pts.shape[1] == 1 else pts), dtype=float)
        sc[live] = vals
    return sc


def estimates_from_batch(f: Callable, batch: PathBatch) -> list[SolutionEstimate]:
    out = []
    n = batch.alive.shape[0]
    for j in range(batch.t.size):
        sc = _scores(f, batch, j)
        mean = float(np.sum(sc) / n)
        se = float(np.std(sc, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
        out.append(SolutionEstimate(mean, "monte_carlo", std_error=se))
    return out


def estimate_u_many(f: Callable, x0, t: Sequence[float], params: TemperedParams | None, domain: IntervalDomain,
                    cfg: McConfig, time_change: str = "inverse") -> list[SolutionEstimate]:
    """Estimates at several clock times from one set of paths (correlated across t)."""
    batch = run_paths(x0, t, params, domain, cfg, time_change)
    if not batch.indicator_forms_agree:
        raise AssertionError("indicator forms disagree; the first-passage bookkeeping is inconsistent")
    return estimates_from_batch(f, batch)


def estimate_u(f: Callable, x0, t: float, params: TemperedParams | None, domain: IntervalDomain, cfg: McConfig,
               time_change: str = "inverse") -> SolutionEstimate:
    """u(t, x0) = E[f(X(E(t))); tau > E(t)] with its standard error.

    f receives an array of surviving terminal points (1-D: shape (n,);
    boxes: shape (n, dims)).
    """
    if not (t > 0):
        raise ValueError(f"t must be > 0, got {t!r}")
    return estimate_u_many(f, x0, [t], params, domain, cfg, time_change)[0]


def simulate_killed_path(x0, domain: IntervalDomain, horizon: float, cfg: McConfig, rng=None) -> KilledPathOutcome:
    """One killed walk over operational time [0, horizon]."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon!r}")
    x = _as_point(domain, x0).copy()
    state = rngmod.new_stream(cfg.seed, 0, rngmod.ROLE_DIFFUSION) if rng is None else rngmod.as_stream(rng)
    pos = np.empty((1, x.size))
    alive = np.empty(1, dtype=np.bool_)
    tau = _walk(state, x, np.asarray(domain.lengths, dtype=float), np.array([float(horizon)]),
                cfg.ds_diffusion, cfg.bridge, pos, alive)
    if alive[0]:
        return KilledPathOutcome(pos[0].copy(), float(horizon))
    return KilledPathOutcome(None, float(tau))


def write_estimates_csv(path, rows) -> None:
    """rows: iterable of (t, x, SolutionEstimate, n_paths, seed)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u_mc", "std_error", "n_paths", "seed"])
        for t, x, est, n_paths, seed in rows:
            w.writerow([repr(float(t)), repr(float(x)), repr(est.value), repr(est.std_error), int(n_paths), int(seed)])
