"""Command-line entry point.

Every subcommand reads a JSON config (``schema: 1``), writes fixed-header
CSV files and a ``manifest.json`` into ``--out``.  Exit codes: 0 success,
1 invalid config or invocation, 2 numerical failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._backend import BACKEND
from .functionals import builtin_functionals, make_functional
from .initial import make_init
from .lab import (ExperimentConfig, ReferenceNoiseError, chaos_error_curves,
                  initial_wasserstein_curve, mean_field_w1_curve, weak_rate_verdict)
from .mckean import (PicardConfig, PicardConvergenceError, UConfig, decoupled_flow_density,
                     flow_constancy_residual, picard_solve)
from .parametrix import (NegativeDensityError, ParametrixConfig, TruncationError,
                         density_bound_ratio, density_truncated)
from .particles import NonFiniteStateError, moment, simulate
from .reference import (QuadConfig, RhoParams, beta_product_tail, convolution_inequality_ratio,
                        rho, space_time_ratio)
from .rng import RandomStream
from .stable import QuadratureError

log = logging.getLogger("stablemv")

SECTIONS = ("picard", "density", "flow", "init_rate", "bounds", "simulate")
NUMERICAL_ERRORS = (NonFiniteStateError, FloatingPointError, TruncationError, NegativeDensityError,
                    PicardConvergenceError, QuadratureError, ReferenceNoiseError)


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    def __init__(self, msg, files):
        super().__init__(msg)
        self.files = files


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be an object")
    if raw.get("schema") != 1:
        raise ConfigError(f"{p}: expected \"schema\": 1")
    return raw


def split_config(raw: dict, seed: int | None):
    raw = dict(raw)
    sections = {k: raw.pop(k, {}) for k in SECTIONS}
    if seed is not None:
        raw["seed"] = seed
    try:
        exp = ExperimentConfig.from_dict(raw)
        exp.make_drift()
        exp.make_init()
        exp.make_phi()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return exp, sections


def _section(sections, name, defaults):
    sec = dict(defaults)
    given = sections.get(name) or {}
    extra = set(given) - set(defaults)
    if extra:
        raise ConfigError(f"unknown fields in {name!r}: {sorted(extra)}")
    sec.update(given)
    return sec


# -- subcommands ---------------------------------------------------------------------

def cmd_simulate(exp, sections, out: Path, threads: int):
    sec = _section(sections, "simulate", {"N": exp.N_grid[-1], "atoms": True})
    N = int(sec["N"])
    stream = RandomStream(exp.seed, "simulate")
    x0 = exp.make_init().sample(stream, N)
    state = simulate(x0, exp.make_drift(), exp.sim, exp.law, stream)
    files = []
    if sec["atoms"]:
        write_csv(out / "terminal_atoms.csv", ["particle", "x"],
                  ((i, state.positions[i, 0]) for i in range(N)))
        files.append("terminal_atoms.csv")
    m = state.empirical()
    x = state.positions[:, 0]
    write_csv(out / "summary.csv", ["N", "T", "mean", "median", "moment_beta", "phi"],
              [(N, exp.T, x.mean(), np.median(x), moment(m, exp.beta), exp.make_phi().eval(m))])
    return files + ["summary.csv"]


def _picard_cfg(sec):
    return PicardConfig(M=int(sec["M"]), steps=int(sec["steps"]), records=int(sec["records"]),
                        max_iter=int(sec["max_iter"]))


PICARD_DEFAULTS = {"M": 200_000, "steps": 400, "records": 10, "max_iter": 6, "tol": None,
                   "init": None}


def cmd_picard(exp, sections, out: Path, threads: int):
    sec = _section(sections, "picard", PICARD_DEFAULTS)
    init = make_init(sec["init"]) if sec["init"] else exp.make_init()
    _, hist = picard_solve(exp.make_drift(), init, exp.T, exp.law,
                           RandomStream(exp.seed, "picard"), tol=sec["tol"], cfg=_picard_cfg(sec))
    write_csv(out / "picard_history.csv", ["iter", "sup_dtv", "noise_floor"],
              ((m + 1, d, hist.noise_floor) for m, d in enumerate(hist.sup_dtv)))
    return ["picard_history.csv"]


def cmd_density(exp, sections, out: Path, threads: int):
    sec = _section(sections, "density", {"s": 0.0, "t": exp.T, "x": 0.0, "K": 3, "space_step": 0.02,
                                         "space_extent": 40.0, "time_nodes": 12, "tolerance": None})
    pcfg = ParametrixConfig(truncation_K=int(sec["K"]), time_nodes=int(sec["time_nodes"]),
                            space_step=float(sec["space_step"]),
                            space_extent=float(sec["space_extent"]), tolerance=sec["tolerance"])
    drift = exp.make_drift()
    s, t, x = float(sec["s"]), float(sec["t"]), float(sec["x"])
    if drift.meta.measure_dependent:
        psec = _section(sections, "picard", PICARD_DEFAULTS)
        init = make_init(psec["init"]) if psec["init"] else exp.make_init()
        flow, _ = picard_solve(drift, init, exp.T, exp.law, RandomStream(exp.seed, "picard"),
                               tol=psec["tol"], cfg=_picard_cfg(psec))
        dens = decoupled_flow_density(flow, drift, s, x, t, pcfg, exp.alpha)
    else:
        dens = density_truncated(drift, None, s, t, x, pcfg, exp.alpha)
    ratio = dens.values / rho(RhoParams(0, exp.alpha), t - s, dens.grid - x)
    proxy = dens.info["proxy"]
    write_csv(out / "density.csv", ["y", "p_K", "proxy", "ratio_to_rho0"],
              zip(dens.grid, dens.values, proxy, ratio))
    log.info("max p_K / rho^0 = %.4g", density_bound_ratio(dens, s, t, x, exp.alpha))
    return ["density.csv"]


def _fit_row(kind, fit, mode="fit", passed=None):
    if fit is None:
        return (kind, math.nan, math.nan, math.nan, math.nan, "", "", mode,
                "" if passed is None else passed)
    return (kind, fit.slope, fit.intercept, fit.ci[0], fit.ci[1],
            " ".join(map(str, fit.used)), " ".join(map(str, fit.excluded)), mode,
            "" if passed is None else passed)


FIT_HEADER = ["kind", "slope", "intercept", "ci_low", "ci_high", "used_N", "excluded_N", "mode",
              "passed"]


def cmd_chaos_rate(exp, sections, out: Path, threads: int):
    phi = exp.make_phi()
    curves, first, ref = chaos_error_curves(exp, {exp.phi: phi}, threads, with_first_particle=True)
    curve = curves[exp.phi]
    write_csv(out / "chaos_curve.csv", ["N", "strong_err", "strong_se", "weak_err", "weak_se"],
              curve.rows())
    target = -(1 - 1 / exp.beta) + 0.1
    rows = []
    try:
        sf = curve.strong_fit()
        rows.append(_fit_row("strong", sf, "fit", sf.slope <= target and sf.ci_excludes_zero))
    except ValueError as exc:
        log.warning("strong fit refused: %s", exc)
        rows.append(_fit_row("strong", None, "refused", False))
    verdict = weak_rate_verdict(curve)
    rows.append(_fit_row("weak", verdict.fit, verdict.mode, verdict.passed))
    if verdict.mode == "one_sided":
        log.warning("weak rate degraded to the one-sided check: %s", verdict.reason)
    write_csv(out / "rate_fit.csv", FIT_HEADER, rows)
    N, w1, floor = mean_field_w1_curve(exp, first, ref)
    write_csv(out / "mean_field_w1.csv", ["N", "w1", "sampling_floor"],
              ((n, w, floor) for n, w in zip(N, w1)))
    write_csv(out / "reference.csv", ["phi", "value", "se", "atoms"],
              [(exp.phi, ref.values[exp.phi], ref.ses[exp.phi], len(ref.sample))])
    return ["chaos_curve.csv", "rate_fit.csv", "mean_field_w1.csv", "reference.csv"]


def cmd_init_rate(exp, sections, out: Path, threads: int):
    sec = _section(sections, "init_rate", {"N_grid": [64, 128, 256, 512, 1024, 2048, 4096],
                                           "R": 500, "dim": 1})
    init = exp.make_init()
    curve = initial_wasserstein_curve(init, list(sec["N_grid"]), int(sec["R"]), exp.seed,
                                      int(sec["dim"]), threads)
    write_csv(out / "init_curve.csv", ["N", "w1", "se"], zip(curve.N, curve.w1, curve.se))
    q = init.moment_order
    target = -0.5 if not q < 2 else -(1 - 1 / q)
    passed = None if curve.fit is None else abs(curve.fit.slope - target) <= 0.1
    write_csv(out / "rate_fit.csv", FIT_HEADER,
              [_fit_row("init_w1", curve.fit, "fit" if curve.fit else "refused", passed)])
    if curve.note:
        log.warning("no fit: %s", curve.note)
    return ["init_curve.csv", "rate_fit.csv"]


def cmd_verify_bounds(exp, sections, out: Path, threads: int):
    sec = _section(sections, "bounds", {"points": 10_000, "k": [0.0, 1.0, 2.0], "gamma": [0.25, 0.5, 1.0],
                                        "pairs": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]],
                                        "fractions": [0.1, 0.5, 0.9], "y": [0.0, 1.0, 5.0],
                                        "quad_n": 400, "C": 2.0})
    a = exp.alpha
    rng = np.random.default_rng(exp.seed)
    n = int(sec["points"])
    t = 10.0 ** rng.uniform(-3, 1, n)
    x = np.sign(rng.uniform(-1, 1, n)) * 10.0 ** rng.uniform(-4, 3, n)
    rows, ok = [], True
    for k in sec["k"]:
        for g in sec["gamma"]:
            if not k - g > -a:
                continue
            v = float(np.max(space_time_ratio(RhoParams(k, a), g, t, x)))
            p = v <= 1 + 1e-12
            ok &= p
            rows.append(("space_time_ratio", f"k={k:g} gamma={g:g}", v, 1 + 1e-12, p))
    q = QuadConfig(int(sec["quad_n"]))
    for k1, k2 in sec["pairs"]:
        lo = [convolution_inequality_ratio(k1, k2, f, 1.0, y, q, a)
              for f in sec["fractions"] for y in sec["y"]]
        hi = [convolution_inequality_ratio(k1, k2, f, 1.0, y, q.doubled(), a)
              for f in sec["fractions"] for y in sec["y"]]
        rel = abs(max(hi) - max(lo)) / max(lo)
        p = bool(np.isfinite(max(lo)) and rel <= 0.02)
        ok &= p
        rows.append(("convolution_ratio_max", f"k1={k1:g} k2={k2:g} n={q.n}", max(lo), math.inf, p))
        rows.append(("convolution_ratio_doubling", f"k1={k1:g} k2={k2:g}", rel, 0.02, p))
    terms = beta_product_tail(a, float(sec["C"]), 2000)
    ratios = terms[1:] / terms[:-1]
    dec = bool(np.all(np.diff(ratios[29:]) < 0))
    ok &= dec
    rows.append(("beta_ratio_decreasing", f"C={sec['C']:g} k>30", float(ratios[-1]), 1.0, dec))
    partial = np.cumsum(terms)
    cauchy = float(np.max(np.abs(partial[1000:] - partial[999]) / partial[999]))
    p = cauchy < 1e-10
    ok &= p
    rows.append(("beta_partial_sums_cauchy", f"C={sec['C']:g} k>=1000", cauchy, 1e-10, p))
    write_csv(out / "bounds.csv", ["check", "params", "value", "limit", "passed"], rows)
    if not ok:
        raise CheckFailed("one or more bound checks failed (see bounds.csv)", ["bounds.csv"])
    return ["bounds.csv"]


def cmd_flow_constancy(exp, sections, out: Path, threads: int):
    sec = _section(sections, "flow", {"checkpoints": [0.2, 0.4, 0.6, 0.8], "M": 100_000,
                                      "groups": 20, "dt": 0.01, "n_iter": 4, "phis": None,
                                      "allowance": 0.0})
    names = sec["phis"] or list(builtin_functionals())
    phis = {n: make_functional(n) for n in names}
    ucfg = UConfig(exp.make_drift(), exp.law, T=exp.T, dt=float(sec["dt"]), M=int(sec["M"]),
                   groups=int(sec["groups"]), n_iter=int(sec["n_iter"]), seed=exp.seed,
                   experiment="flow-constancy")
    res = flow_constancy_residual(phis, exp.make_init(), ucfg, sec["checkpoints"],
                                  float(sec["allowance"]))
    rows, ok = [], True
    for name, r in res.items():
        rows.append((name, r.times[0], r.values[0], r.ses[0], 0.0, r.ses[0], True))
        for i in range(len(r.residuals)):
            p = r.residuals[i] <= 3 * r.combined_se[i] + r.allowance
            ok &= bool(p)
            rows.append((name, r.times[i + 1], r.values[i + 1], r.ses[i + 1], r.residuals[i],
                         r.combined_se[i], p))
    write_csv(out / "flow_constancy.csv",
              ["phi", "t", "value", "se", "residual", "combined_se", "passed"], rows)
    if not ok:
        raise CheckFailed("flow constancy residual above 3 combined SE (see flow_constancy.csv)",
                          ["flow_constancy.csv"])
    return ["flow_constancy.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "picard": cmd_picard,
    "density": cmd_density,
    "chaos-rate": cmd_chaos_rate,
    "init-rate": cmd_init_rate,
    "verify-bounds": cmd_verify_bounds,
    "flow-constancy": cmd_flow_constancy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config path (schema 1)")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="stablemv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _manifest(args, raw_effective: dict, files) -> dict:
    canon = json.dumps(raw_effective, sort_keys=True, separators=(",", ":"))
    return {
        "command": args.command,
        "config_path": str(args.config),
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "config": raw_effective,
        "seed": raw_effective.get("seed"),
        "threads": args.threads,
        "outputs": files,
        "versions": {"stablemv": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "backend": BACKEND},
    }


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        raw = load_config(args.config)
        exp, sections = split_config(raw, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        effective = dict(exp.to_dict(), **{k: v for k, v in sections.items() if v})
        files = COMMANDS[args.command](exp, sections, out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        (out / "manifest.json").write_text(json.dumps(_manifest(args, effective, exc.files),
                                                      indent=2, sort_keys=True) + "\n")
        return 3
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 1
    (out / "manifest.json").write_text(json.dumps(_manifest(args, effective, files), indent=2,
                                                  sort_keys=True) + "\n")
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
