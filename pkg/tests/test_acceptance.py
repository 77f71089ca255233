"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Heavy runs use the shipped configs so the command-line results match.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import special

from stablemv.cli import run_cli, split_config
from stablemv.drift import HolderDrift
from stablemv.functionals import builtin_functionals, empirical_projection_gradient_check
from stablemv.initial import ParetoInit, PointInit, UniformInit
from stablemv.lab import (ExperimentConfig, chaos_error_curves, initial_wasserstein_curve,
                          weak_rate_verdict)
from stablemv.mckean import PicardConfig, UConfig, apply_generator, flow_constancy_residual, picard_solve
from stablemv.measures import EmpiricalMeasure, dtv_estimate
from stablemv.parametrix import ParametrixConfig, chapman_kolmogorov_residual, density_truncated
from stablemv.particles import SimConfig, simulate
from stablemv.reference import QuadConfig, RhoParams, convolution_inequality_ratio, space_time_ratio
from stablemv.rng import RandomStream
from stablemv.stable import StableLaw, sample, stable_density
from stablemv.wasserstein import w1_exact_1d, w1_small_exact

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ALPHAS = (1.2, 1.5, 1.8)


def load(name):
    raw = json.loads((CONFIGS / name).read_text())
    return split_config(raw, None)


# 1 -------------------------------------------------------------------------------

def test_stable_sampler_cf(record):
    t0 = time.perf_counter()
    worst = 0.0
    for a in ALPHAS:
        for d in (1, 2):
            z = sample(StableLaw(a, d), 1.0, RandomStream(1, f"cf/{a}/{d}"), 1_000_000)
            for xi in (0.5, 1.0, 2.0):
                dirs = [np.eye(d)[0]] if d == 1 else [np.eye(d)[0], np.ones(d) / math.sqrt(d)]
                for u in dirs:
                    emp = np.mean(np.exp(1j * xi * (z @ u)))
                    worst = max(worst, abs(emp - math.exp(-xi ** a)))
    elapsed = time.perf_counter() - t0
    ok = worst < 0.005 and elapsed < 30
    record("1 stable sampler CF", ok, f"max |CF error| {worst:.2e} (< 5e-3), {elapsed:.1f} s (< 30 s)")
    assert ok


# 2 -------------------------------------------------------------------------------

def test_density_oracle(record):
    gaps = [abs(stable_density(StableLaw(a), 1.0, 0.0) - special.gamma(1 + 1 / a) / math.pi)
            for a in ALPHAS]
    y = np.linspace(-10, 10, 41)
    ck = max(chapman_kolmogorov_residual(0.0, r, 1.0, 0.0, y, alpha=a)
             for a in ALPHAS for r in (0.2, 0.5, 0.8))
    ok = max(gaps) < 1e-6 and ck < 1e-3
    record("2 density oracle", ok, f"max |q(1,0) error| {max(gaps):.1e} (< 1e-6), "
                                   f"CK residual {ck:.1e} (< 1e-3)")
    assert ok


# 3 -------------------------------------------------------------------------------

def test_generator_symbol(record):
    from stablemv.drift import ZeroDrift
    worst = 0.0
    for a in ALPHAS:
        for xi in (0.5, 1.0, 2.0):
            for x in (0.0, 0.7, -2.3):
                got = apply_generator(ZeroDrift(), None, lambda y: np.cos(xi * y),
                                      lambda y: -xi * np.sin(xi * y), x, alpha=a)
                worst = max(worst, abs(got + abs(xi) ** a * math.cos(xi * x)))
    ok = worst < 1e-3
    record("3 generator symbol", ok, f"max error {worst:.1e} (< 1e-3)")
    assert ok


# 4 -------------------------------------------------------------------------------

def test_rho_calculus(record):
    rng = np.random.default_rng(4)
    n = 10_000
    worst = 0.0
    for a in ALPHAS:
        t = 10.0 ** rng.uniform(-3, 1, n)
        x = np.sign(rng.uniform(-1, 1, n)) * 10.0 ** rng.uniform(-4, 3, n)
        for k in (0.0, 1.0, 2.0):
            for g in (0.25, 0.5, 1.0):
                if k - g > -a:
                    worst = max(worst, float(np.max(space_time_ratio(RhoParams(k, a), g, t, x))))
    q = QuadConfig(400)
    rel = 0.0
    for k1, k2 in ((0, 0), (1, 0), (1, 1)):
        grid = [(f, y) for f in (0.1, 0.5, 0.9) for y in (0.0, 1.0, 5.0)]
        lo = max(convolution_inequality_ratio(k1, k2, f, 1.0, y, q) for f, y in grid)
        hi = max(convolution_inequality_ratio(k1, k2, f, 1.0, y, q.doubled()) for f, y in grid)
        rel = max(rel, abs(hi - lo) / lo)
    ok = worst <= 1 + 1e-12 and rel <= 0.02
    record("4 rho calculus", ok, f"max space-time ratio {worst:.6f} (<= 1), "
                                 f"convolution ratio change under doubling {rel:.1e} (<= 2%)")
    assert ok


# 5 -------------------------------------------------------------------------------

def test_parametrix_vs_monte_carlo(record):
    exp, sections = load("holder_drift.json")
    sec = sections["density"]
    t0 = time.perf_counter()
    drift = exp.make_drift()
    assert isinstance(drift, HolderDrift)
    cfg = ParametrixConfig(truncation_K=3, space_step=sec["space_step"],
                           space_extent=sec["space_extent"])
    res = density_truncated(drift, None, sec["s"], sec["t"], sec["x"], cfg, exp.alpha,
                            return_result=True)
    M = 1_000_000
    x = simulate(np.full((M, 1), float(sec["x"])), drift, SimConfig(exp.T, exp.steps), exp.law,
                 RandomStream(exp.seed, "parametrix-mc")).positions
    l1 = 2 * dtv_estimate(EmpiricalMeasure(x), res.density)
    gap = res.term_l1[2]
    elapsed = time.perf_counter() - t0
    ok = l1 < 0.05 and res.truncation_estimate >= gap and elapsed < 600
    record("5 parametrix vs Monte Carlo", ok,
           f"L1 {l1:.4f} (< 0.05), truncation estimate {res.truncation_estimate:.2e} "
           f">= ||p3-p2|| {gap:.2e}, {elapsed:.0f} s (< 600 s)")
    assert ok


# 6 -------------------------------------------------------------------------------

def test_picard_convergence(record):
    exp, sections = load("conv_drift.json")
    sec = dict(sections["picard"])
    init = PointInit(sec.pop("init")["at"])
    cfg = PicardConfig(M=sec["M"], steps=sec["steps"], records=sec["records"], max_iter=sec["max_iter"])
    _, hist = picard_solve(exp.make_drift(), init, exp.T, exp.law, RandomStream(exp.seed, "picard"),
                           tol=None, cfg=cfg)
    d = hist.sup_dtv      # d[m-1] = sup_t d(P^m, P^{m+1})
    decreasing = all(d[m] < d[m - 1] for m in range(2, 5))
    plateau = d[-1] < 0.02 + hist.noise_floor
    ok = decreasing and plateau
    record("6 Picard convergence", ok,
           f"sup d_TV m=1..{len(d)}: {', '.join(f'{v:.2e}' for v in d)}; floor {hist.noise_floor:.3f}")
    assert ok


# 7 -------------------------------------------------------------------------------

def test_flow_constancy(record):
    exp, sections = load("conv_drift.json")
    sec = sections["flow"]
    ucfg = UConfig(exp.make_drift(), exp.law, T=exp.T, dt=sec["dt"], M=sec["M"],
                   groups=sec["groups"], n_iter=sec["n_iter"], seed=exp.seed,
                   experiment="flow-constancy")
    res = flow_constancy_residual(builtin_functionals(), exp.make_init(), ucfg, sec["checkpoints"])
    worst = max(float(np.max(r.residuals / r.combined_se)) for r in res.values())
    ok = all(r.passed for r in res.values()) and len(sec["checkpoints"]) == 4 and sec["M"] == 100_000
    record("7 flow constancy", ok, f"max residual / combined SE {worst:.2f} (<= 3) over "
                                   f"{len(res)} functionals")
    assert ok


# 8 -------------------------------------------------------------------------------

def test_empirical_projection(record):
    rng = np.random.default_rng(8)
    worst = 0.0
    for name, phi in builtin_functionals().items():
        for n in (1, 3, 10, 100):
            atoms = rng.uniform(-3, 3, n)
            if name.startswith("holder"):
                atoms = np.where(np.abs(atoms) < 0.05, 0.5, atoms)
            for i in range(n):
                worst = max(worst, empirical_projection_gradient_check(phi, atoms, i)[2])
    ok = worst < 1e-6
    record("8 empirical projection", ok, f"max gap {worst:.1e} (< 1e-6)")
    assert ok


# 9, 10 ---------------------------------------------------------------------------

WEAK_PHI = "quadratic_cos2"


@pytest.fixture(scope="module")
def chaos_runs():
    """Zero-drift control and convolution drift, both functionals on shared runs."""
    out = {}
    base, _ = load("conv_drift.json")
    phis = {k: builtin_functionals()[k] for k in (base.phi, WEAK_PHI)}
    for drift in ("zero", "convolution"):
        d = base.to_dict()
        if drift == "zero":
            d.update(drift="zero", drift_params={})
        cfg = ExperimentConfig.from_dict(d)
        t0 = time.perf_counter()
        curves = chaos_error_curves(cfg, phis)
        out[drift] = (cfg, curves, time.perf_counter() - t0)
    return out


def test_strong_chaos_rate(chaos_runs, record):
    details, ok = [], True
    for drift, (cfg, curves, elapsed) in chaos_runs.items():
        target = -(1 - 1 / cfg.beta) + 0.1
        fit = curves[cfg.phi].strong_fit()
        good = fit.slope <= target and fit.ci_excludes_zero and elapsed < 1200
        ok &= good
        details.append(f"{drift}: slope {fit.slope:.3f} CI [{fit.ci[0]:.3f}, {fit.ci[1]:.3f}] "
                       f"(<= {target:.2f}), {elapsed:.0f} s")
    assert cfg.R == 2000 and cfg.N_grid == (16, 32, 64, 128, 256, 512, 1024)
    record("9 strong chaos rate", ok, "; ".join(details))
    assert ok


def test_weak_chaos_rate(chaos_runs, record):
    details, ok = [], True
    for drift, (cfg, curves, _) in chaos_runs.items():
        v = weak_rate_verdict(curves[WEAK_PHI])
        ok &= v.passed
        if v.mode == "fit":
            details.append(f"{drift}: slope {v.fit.slope:.3f} CI [{v.fit.ci[0]:.3f}, {v.fit.ci[1]:.3f}]"
                           f" (<= -0.5), excluded N {list(v.fit.excluded)}")
        else:
            details.append(f"{drift}: one-sided weak <= strong at every N ({v.reason})")
    record("10 weak chaos rate", ok, "; ".join(details))
    assert ok


# 11 ------------------------------------------------------------------------------

def test_initial_data_rates(record):
    N = [64, 128, 256, 512, 1024, 2048, 4096]
    u = initial_wasserstein_curve(UniformInit(), N, R=500, seed=11)
    p = initial_wasserstein_curve(ParetoInit(1.5), N, R=500, seed=11)
    tu, tp = -0.5, -(1 - 1 / 1.5)
    ok = abs(u.fit.slope - tu) <= 0.1 and abs(p.fit.slope - tp) <= 0.1
    record("11 initial-data rates", ok, f"uniform slope {u.fit.slope:.3f} (target {tu}), "
                                        f"Pareto(1.5) slope {p.fit.slope:.3f} (target {tp:.3f}), tol 0.1")
    assert ok


# 12 ------------------------------------------------------------------------------

def test_w1_oracle(record):
    rng = np.random.default_rng(12)
    gap, axiom = 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        a = rng.standard_cauchy(n)
        b = rng.standard_normal(n) * 3
        c = rng.uniform(-5, 5, n)
        dab = w1_exact_1d(a, b)
        gap = max(gap, abs(dab - w1_small_exact(a[:, None], b[:, None])))
        axiom = max(axiom, abs(w1_exact_1d(a, a)), abs(dab - w1_exact_1d(b, a)),
                    max(0.0, dab - w1_exact_1d(a, c) - w1_exact_1d(c, b)), max(0.0, -dab))
    ok = gap < 1e-9 and axiom < 1e-12
    record("12 W1 oracle", ok, f"sorted vs assignment {gap:.1e} (< 1e-9), axioms {axiom:.1e} (< 1e-12)")
    assert ok


# 13 ------------------------------------------------------------------------------

def test_cli_determinism(record, tmp_path):
    cfg = {"schema": 1, "alpha": 1.5, "drift": "convolution", "drift_params": {"amp": 0.5},
           "init": {"kind": "uniform", "low": 0.0, "high": 1.0}, "phi": "linear_sin",
           "N_grid": [8, 16, 32, 64], "R": 60, "steps": 20, "seed": 13, "n_ref": 4000,
           "simulate": {"N": 500},
           "picard": {"M": 10_000, "steps": 20, "records": 4, "max_iter": 3},
           "init_rate": {"N_grid": [16, 32, 64, 128], "R": 60},
           "flow": {"checkpoints": [0.5], "M": 4000, "groups": 10, "dt": 0.1, "n_iter": 2,
                    "phis": ["linear_sin", "quadratic_cos"]}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    mismatched = []
    commands = ("simulate", "picard", "chaos-rate", "init-rate", "flow-constancy")
    for cmd in commands:
        outs = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / f"{cmd}-{tag}"
            assert run_cli([cmd, "--config", str(path), "--out", str(out), "--threads", str(threads)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if not (outs[0] == outs[1] == outs[2]) or not outs[0]:
            mismatched.append(cmd)
    ok = not mismatched
    record("13 CLI determinism", ok, f"{len(commands)} subcommands, repeated and at 1/8 threads: "
                                     + ("bit-identical CSVs" if ok else f"differ in {mismatched}"))
    assert ok
