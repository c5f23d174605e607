"""Command-line front end.

    tempfrac relax     --config relax.json --out relax.csv
    tempfrac derivative --config deriv.json --out deriv.csv
    tempfrac solve     --config solve.json --out solve.csv [--seed N --threads N]
    tempfrac simulate  --config sim.json --out path.csv [--seed N]
    tempfrac validate  [--config v.json] [--profile fast|thorough] [--out report.json]

Every run is driven by one JSON document. Exit codes: 0 success,
1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _number(cfg: dict, key: str, default=None, *, lo=None, hi=None, lo_open=False, hi_open=False, where="") -> float:
    name = f"{where}{key}"
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required field '{name}'")
        return float(default)
    v = cfg[key]
    if isinstance(v, str) and v.strip().lower() == "pi":
        v = math.pi
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"field '{name}' must be a finite number, got {v!r}")
    v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"field '{name}' must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(f"field '{name}' must be {'<' if hi_open else '<='} {hi}, got {v}")
    return v


def _integer(cfg: dict, key: str, default=None, *, lo=None, where="") -> int:
    name = f"{where}{key}"
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required field '{name}'")
        return int(default)
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field '{name}' must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"field '{name}' must be >= {lo}, got {v}")
    return v


def _number_list(cfg: dict, key: str, default=None, *, lo=None, lo_open=False, hi=None, hi_open=False,
                 where="") -> list[float]:
    """A number, a list of numbers, or {"start", "stop", "num"} (inclusive linspace)."""
    name = f"{where}{key}"
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required field '{name}'")
        return list(default)
    v = cfg[key]
    if isinstance(v, dict):
        start = _number(v, "start", where=name + ".")
        stop = _number(v, "stop", where=name + ".")
        num = _integer(v, "num", lo=1, where=name + ".")
        raw = np.linspace(start, stop, num).tolist()
    elif isinstance(v, list):
        raw = v
    else:
        raw = [v]
    if not raw:
        raise ConfigError(f"field '{name}' must not be empty")
    return [_number({f"{name}[{i}]": item}, f"{name}[{i}]", lo=lo, lo_open=lo_open, hi=hi, hi_open=hi_open)
            for i, item in enumerate(raw)]


def _wrap(fn, where: str):
    """Run a constructor, turning its ValueError into a field-named ConfigError."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _params(cfg: dict, where: str = ""):
    from .special_fn import TemperedParams

    beta = _number(cfg, "beta", where=where)
    lam = _number(cfg, "lambda", 0.0, where=where)
    return _wrap(lambda: TemperedParams(beta, lam), f"{where}beta/lambda")


def _known_keys(cfg: dict, allowed, where: str = ""):
    extra = sorted(set(cfg) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s) {', '.join(where + k for k in extra)}; allowed: {', '.join(sorted(allowed))}")


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ArithmeticError(f"non-finite value {v} in output")
    return repr(v)


def _write_csv(path, header, rows) -> None:
    fh = open(path, "w", newline="") if path is not None else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if path is not None:
            fh.close()


# ---------------------------------------------------------------------------
# relax
# ---------------------------------------------------------------------------

RELAX_HEADER = ["beta", "lambda", "mu", "t", "g_check", "dg_dt", "bound_mu_k_t", "mittag_leffler"]


def relax_rows(cfg: dict):
    from .special_fn import RelaxationQuery, TemperedParams, kernel_bound, mittag_leffler, relaxation, relaxation_dt

    _known_keys(cfg, {"beta", "lambda", "mu", "t"})
    betas = _number_list(cfg, "beta", lo=0.0, lo_open=True, hi=1.0, hi_open=True)
    lams = _number_list(cfg, "lambda", [0.0], lo=0.0)
    mus = _number_list(cfg, "mu", lo=0.0, lo_open=True)
    ts = _number_list(cfg, "t", lo=0.0)
    rows = []
    for b in betas:
        for lam in lams:
            p = TemperedParams(b, lam)
            for mu in mus:
                for t in ts:
                    q = RelaxationQuery(p, mu, t)
                    g = relaxation(q)
                    if t > 0:
                        dg = relaxation_dt(q)
                        bound = mu * float(kernel_bound(p, t))
                    else:
                        # both blow up like t^(beta-1) at the origin
                        dg = bound = None
                    ml = mittag_leffler(b, -mu * t**b) if lam == 0.0 else None
                    rows.append((b, lam, mu, t, g, dg, bound, ml))
    return rows


def cmd_relax(args, cfg) -> int:
    _write_csv(args.out, RELAX_HEADER, relax_rows(cfg))
    return EXIT_OK


# ---------------------------------------------------------------------------
# derivative
# ---------------------------------------------------------------------------

DERIVATIVE_KINDS = ("riemann_liouville", "caputo", "riemann_liouville_tempered", "caputo_tempered")


def _read_samples(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["t", "value"]:
                raise ConfigError(f"{path}: header must start with 't,value'")
            t, v = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    t.append(float(row[0]))
                    v.append(float(row[1]))
                except (ValueError, IndexError):
                    raise ConfigError(f"{path}: line {lineno}: expected two numbers, got {row!r}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read samples {path}: {exc.strerror or exc}") from None
    t, v = np.asarray(t), np.asarray(v)
    if t.size < 3:
        raise ConfigError(f"{path}: need at least 3 samples")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ConfigError(f"{path}: samples must be finite")
    if t[0] != 0.0:
        raise ConfigError(f"{path}: samples must start at t = 0")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not (dt > 0) or np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(1.0, t[-1]):
        raise ConfigError(f"{path}: samples must be uniformly spaced in increasing t")
    return t, dt, v


def derivative_rows(cfg: dict, base: Path):
    from .frac_ops import SampledFunction, caputo_derivative, caputo_tempered, rl_derivative, rl_tempered

    _known_keys(cfg, {"input", "kind", "beta", "lambda", "value_at_zero", "start_exponents"})
    if not isinstance(cfg.get("input"), str):
        raise ConfigError("field 'input' must name a CSV file with columns t,value")
    kind = cfg.get("kind", "caputo")
    if kind not in DERIVATIVE_KINDS:
        raise ConfigError(f"field 'kind' must be one of {', '.join(DERIVATIVE_KINDS)}, got {kind!r}")
    params = _params(cfg)
    starts = _number_list(cfg, "start_exponents", [], lo=0.0, lo_open=True)
    g0 = _number(cfg, "value_at_zero", where="") if "value_at_zero" in cfg else None
    t, dt, values = _read_samples((base / cfg["input"]) if not Path(cfg["input"]).is_absolute() else cfg["input"])
    g = _wrap(lambda: SampledFunction(dt, values, value_at_zero=g0), "input")

    def run():
        if kind == "riemann_liouville":
            return rl_derivative(g, params.beta, starts)
        if kind == "caputo":
            return caputo_derivative(g, params.beta, starts)
        if kind == "riemann_liouville_tempered":
            return rl_tempered(g, params, starts)
        return caputo_tempered(g, params, starts)

    res = _wrap(run, "derivative")
    # report at the input abscissae rather than re-multiplied grid times
    return list(zip(t[1:], res.values))


def cmd_derivative(args, cfg) -> int:
    base = Path(args.config).parent if args.config else Path.cwd()
    _write_csv(args.out, ["t", "derivative"], derivative_rows(cfg, base))
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

SOLVE_HEADER = ["t", "x", "u_series", "u_subordination", "u_mc", "std_error", "truncation_error", "mc_consistent"]
SOLVE_METHODS = ("series", "subordination", "monte_carlo")
INITIAL_KINDS = ("single_mode", "polynomial_bump", "smoothed_indicator", "samples")


def initial_data(spec: dict, m: float):
    """(f, expansion or None) from the built-in catalog on (0, m).

    single_mode          sqrt(2/m) sin(n pi x / m), exact expansion
    polynomial_bump      x (m - x)
    smoothed_indicator   logistic ramps of width ``width`` at a and b
    samples              piecewise-linear interpolation of (x, values)
    """
    from .pde_series import EigenExpansion, IntervalDomain

    if not isinstance(spec, dict):
        raise ConfigError("field 'initial' must be an object with a 'kind'")
    kind = spec.get("kind")
    w = "initial."
    if kind == "single_mode":
        _known_keys(spec, {"kind", "n", "amplitude"}, w)
        n = _integer(spec, "n", 1, lo=1, where=w)
        amp = _number(spec, "amplitude", 1.0, where=w)
        n_max = max(8, n)

        def f(x):
            return amp * math.sqrt(2.0 / m) * np.sin(n * math.pi * np.asarray(x) / m)

        return f, EigenExpansion.single_mode(IntervalDomain(m), n, n_max=n_max, amplitude=amp)
    if kind == "polynomial_bump":
        _known_keys(spec, {"kind"}, w)
        return (lambda x: np.asarray(x) * (m - np.asarray(x))), None
    if kind == "smoothed_indicator":
        _known_keys(spec, {"kind", "a", "b", "width"}, w)
        a = _number(spec, "a", 0.25 * m, lo=0.0, hi=m, where=w)
        b = _number(spec, "b", 0.75 * m, lo=a, lo_open=True, hi=m, where=w)
        width = _number(spec, "width", 0.02 * m, lo=0.0, lo_open=True, where=w)

        def f(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * (np.tanh((x - a) / (2 * width)) - np.tanh((x - b) / (2 * width)))

        return f, None
    if kind == "samples":
        _known_keys(spec, {"kind", "x", "values"}, w)
        xs = np.asarray(_number_list(spec, "x", lo=0.0, hi=m, where=w))
        vs = np.asarray(_number_list(spec, "values", where=w))
        if xs.size != vs.size or xs.size < 2:
            raise ConfigError("fields 'initial.x' and 'initial.values' need equal lengths >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("field 'initial.x' must be strictly increasing")
        f = lambda x: np.interp(x, xs, vs, left=0.0, right=0.0)
        f.breakpoints = tuple(xs)
        return f, None
    raise ConfigError(f"field 'initial.kind' must be one of {', '.join(INITIAL_KINDS)}, got {kind!r}")


def _mc_config(cfg: dict, seed: int, threads: int):
    from .mc_solver import McConfig

    spec = cfg.get("mc", {})
    if not isinstance(spec, dict):
        raise ConfigError("field 'mc' must be an object")
    _known_keys(spec, {"n_paths", "dx_subordinator", "ds_diffusion", "bridge"}, "mc.")
    bridge = spec.get("bridge", True)
    if not isinstance(bridge, bool):
        raise ConfigError("field 'mc.bridge' must be true or false")
    return _wrap(lambda: McConfig(
        n_paths=_integer(spec, "n_paths", 100_000, lo=2, where="mc."),
        dx_subordinator=_number(spec, "dx_subordinator", 1e-3, lo=0.0, lo_open=True, where="mc."),
        ds_diffusion=_number(spec, "ds_diffusion", 1e-4, lo=0.0, lo_open=True, where="mc."),
        seed=seed, bridge=bridge, threads=threads), "mc")


def solve_rows(cfg: dict, seed: int = 0, threads: int = 1):
    from .mc_solver import estimates_from_batch, run_paths
    from .pde_series import IntervalDomain, project, tempered_solution_series, tempered_solution_subordination

    _known_keys(cfg, {"beta", "lambda", "domain", "initial", "t", "x", "methods", "mc", "n_max",
                      "bias_allowance", "seed"})
    params = _params(cfg)
    dom_spec = cfg.get("domain", {"m": math.pi})
    if not isinstance(dom_spec, dict):
        raise ConfigError("field 'domain' must be an object like {\"m\": 3.14159}")
    _known_keys(dom_spec, {"m"}, "domain.")
    m = _number(dom_spec, "m", math.pi, lo=0.0, lo_open=True, where="domain.")
    domain = IntervalDomain(m)
    f, exp = initial_data(cfg.get("initial", {"kind": "single_mode"}), m)
    ts = _number_list(cfg, "t", lo=0.0, lo_open=True)
    xs = _number_list(cfg, "x", lo=0.0, hi=m)
    methods = cfg.get("methods", list(SOLVE_METHODS))
    if not isinstance(methods, list) or not methods or any(k not in SOLVE_METHODS for k in methods):
        raise ConfigError(f"field 'methods' must be a non-empty list drawn from {', '.join(SOLVE_METHODS)}")
    allowance = _number(cfg, "bias_allowance", 0.01, lo=0.0)
    if exp is None:
        kinks = getattr(f, "breakpoints", ())
        # kinked data has O(n^-2) coefficients, so the adaptive rule would run to its cap
        n_max = _integer(cfg, "n_max", 256 if kinks else 0, lo=0)
        exp = _wrap(lambda: project(f, domain, n_max=n_max or None, breakpoints=kinks), "initial")
    mc = None
    if "monte_carlo" in methods:
        mc = _mc_config(cfg, seed, threads)

    rows = []
    for x in xs:
        interior = 0.0 < x < m
        est_mc = None
        if mc is not None and interior:
            batch = run_paths(x, ts, params, domain, mc)
            if not batch.indicator_forms_agree:
                raise RuntimeError("indicator forms disagree")
            est_mc = estimates_from_batch(f, batch)
        for j, t in enumerate(ts):
            us = ub = trunc = None
            if "series" in methods:
                s = tempered_solution_series(exp, params, t, x)
                us, trunc = s.value, s.truncation_error
            if "subordination" in methods:
                b = tempered_solution_subordination(exp, params, t, x)
                ub = b.value
                trunc = b.truncation_error if trunc is None else trunc
            u_mc = se = ok = None
            if mc is not None:
                # the killed walk never survives at a boundary point
                u_mc, se = (est_mc[j].value, est_mc[j].std_error) if interior else (0.0, 0.0)
                ref = us if us is not None else ub
                if ref is not None:
                    ok = abs(u_mc - ref) <= 3.0 * se + allowance
            rows.append((t, x, us, ub, u_mc, se, trunc, ok))
    return rows


def cmd_solve(args, cfg) -> int:
    _write_csv(args.out, SOLVE_HEADER, solve_rows(cfg, args.seed, args.threads))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def simulate(cfg: dict, seed: int = 0):
    """(path, inverse samples, summary rows) for one subordinator path."""
    from .subordinate_mc import build_path, expected_acceptance, inverse_at

    _known_keys(cfg, {"beta", "lambda", "dx", "t_horizon", "path_index", "inverse_t", "seed"})
    params = _params(cfg)
    dx = _number(cfg, "dx", 1e-3, lo=0.0, lo_open=True)
    horizon = _number(cfg, "t_horizon", 1.0, lo=0.0, lo_open=True)
    idx = _integer(cfg, "path_index", 0, lo=0)
    inv_t = _number_list(cfg, "inverse_t", [], lo=0.0)
    path = _wrap(lambda: build_path(params, dx, horizon, seed=seed, path_index=idx), "simulate")
    inverse = [inverse_at(path, t) for t in inv_t if t < path.horizon]
    q = expected_acceptance(params, dx)
    st = path.stats
    rate = st.acceptance_rate
    z = (rate - q) / math.sqrt(q * (1 - q) / st.proposed) if 0 < q < 1 and st.proposed else 0.0
    summary = [
        ("seed", seed), ("path_index", idx), ("steps", path.levels.size - 1),
        ("accepted", st.accepted), ("proposed", st.proposed),
        ("acceptance_rate", rate), ("expected_acceptance", q), ("acceptance_zscore", z),
    ]
    return path, inverse, summary


def _sibling(out, suffix):
    p = Path(out)
    return p.with_name(p.stem + suffix)


def cmd_simulate(args, cfg) -> int:
    path, inverse, summary = simulate(cfg, args.seed)
    if args.out is None:
        _write_csv(None, ["key", "value"], summary)
        return EXIT_OK
    path.to_csv(args.out)
    _write_csv(_sibling(args.out, ".inverse.csv"), ["t", "e_lower", "e_upper", "e_mid"],
               [(s.t, s.e_lower, s.e_upper, s.midpoint) for s in inverse])
    _write_csv(_sibling(args.out, ".summary.csv"), ["key", "value"], summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args, cfg) -> int:
    from .validation import PROFILES, dumps_report, run_suite, suite

    _known_keys(cfg, {"profile", "seed", "only"})
    profile = args.profile or cfg.get("profile", "fast")
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {', '.join(PROFILES)}, got {profile!r}")
    only = cfg.get("only")
    if only is not None:
        names = [n for n, _ in suite(profile, 0)]
        if not isinstance(only, list) or any(o not in names for o in only):
            raise ConfigError(f"field 'only' must be a list drawn from {', '.join(names)}")
    report = run_suite(profile, args.seed, args.threads, only)
    text = dumps_report(report)
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    if report["all_passed"]:
        return EXIT_OK
    for c in report["checks"]:
        if c["status"] != "pass":
            print(f"FAILED {c['check_name']}: measured {c['measured']} vs tolerance {c['tolerance']}", file=sys.stderr)
    return EXIT_FAILED


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "relax": cmd_relax,
    "derivative": cmd_derivative,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tempfrac", description="Tempered fractional diffusion on intervals: series, subordination and Monte Carlo.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--seed", type=_nonneg_int, default=None, help="random seed (overrides the config)")
        sp.add_argument("--threads", type=_nonneg_int, default=1, help="Monte Carlo worker threads")
        sp.add_argument("--profile", choices=("fast", "thorough"), default=None, help="validation profile")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = _integer(cfg, "seed", 0, lo=0)
        if args.seed >= 2**64:
            raise ConfigError("seed must fit in 64 bits")
        args.threads = max(1, args.threads)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"tempfrac {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"tempfrac {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError) as exc:
        # numerical failure (quadrature, sampler budget, non-finite output)
        print(f"tempfrac {args.command}: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
