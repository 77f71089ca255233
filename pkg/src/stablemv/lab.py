"""Propagation-of-chaos experiments: error curves over N, rate fits and
initial-data Wasserstein rates.

Every replication is a pure function of (seed, N, replication index); worker
threads only change which replication runs where, and all reductions run in
replication order, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .drift import make_drift
from .functionals import TestFunctional, make_functional
from .initial import InitSpec, make_init
from .mckean import PicardConfig, picard_solve
from .measures import EmpiricalMeasure
from .particles import SimConfig, simulate
from .rng import RandomStream
from .stable import StableLaw
from .wasserstein import w1_exact_1d, w1_small_exact, w1_to_law_1d, MAX_ASSIGNMENT

SCHEMA = 1


class ReferenceNoiseError(RuntimeError):
    """The reference value is too noisy for the errors it is compared with."""


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 1.5
    dim: int = 1
    drift: str = "convolution"
    drift_params: dict = field(default_factory=dict)
    init: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.0, "high": 1.0})
    phi: str = "linear_sin"
    phi_params: dict = field(default_factory=dict)
    N_grid: tuple = (16, 32, 64, 128, 256, 512, 1024)
    R: int = 2000
    T: float = 1.0
    steps: int = 50
    jump_cap: float | None = None
    beta: float = 1.25
    seed: int = 0
    n_ref: int | None = None
    ref_iter: int = 5
    ref_groups: int = 20

    def __post_init__(self):
        grid = tuple(int(n) for n in self.N_grid)
        object.__setattr__(self, "N_grid", grid)
        if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ValueError("N_grid must be positive and strictly increasing")
        if self.R < 30:
            raise ValueError("R must be at least 30 for standard errors")
        if not 1 < self.beta < self.alpha:
            raise ValueError("need 1 < beta < alpha")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.dim != 1:
            raise ValueError("chaos experiments are implemented for d = 1")

    @property
    def law(self) -> StableLaw:
        return StableLaw(self.alpha, self.dim)

    @property
    def sim(self) -> SimConfig:
        return SimConfig(self.T, self.steps, self.jump_cap)

    @property
    def reference_size(self) -> int:
        return self.n_ref if self.n_ref is not None else max(16 * self.N_grid[-1], 200_000)

    def make_drift(self):
        return make_drift(self.drift, **self.drift_params)

    def make_init(self) -> InitSpec:
        return make_init(self.init)

    def make_phi(self) -> TestFunctional:
        return make_functional(self.phi, **self.phi_params)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "alpha": self.alpha, "dim": self.dim, "drift": self.drift,
                "drift_params": dict(self.drift_params), "init": dict(self.init), "phi": self.phi,
                "phi_params": dict(self.phi_params), "N_grid": list(self.N_grid), "R": self.R,
                "T": self.T, "steps": self.steps, "jump_cap": self.jump_cap, "beta": self.beta,
                "seed": self.seed, "n_ref": self.n_ref, "ref_iter": self.ref_iter,
                "ref_groups": self.ref_groups}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.pop("schema", SCHEMA) != SCHEMA:
            raise ValueError(f"unsupported config schema (expected {SCHEMA})")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        if "N_grid" in d:
            d["N_grid"] = tuple(d["N_grid"])
        return cls(**d)


# -- rate fitting ------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple
    used: tuple
    excluded: tuple

    @property
    def ci_excludes_zero(self) -> bool:
        return self.ci[1] < 0 or self.ci[0] > 0


def fit_rate(N, err, se=None, min_points: int = 4, level: float = 0.95) -> RateFit:
    """Weighted least squares of log err on log N.

    Points with ``se >= err / 3`` are excluded as noise dominated.  Weights
    are (err / se)^2, the inverse delta-method variance of log err; the slope
    interval uses the residual scale and Student t quantiles.
    """
    N = np.asarray(N, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.any(~np.isfinite(err)) or np.any(err <= 0):
        raise ValueError("errors must be positive and finite")
    se = np.zeros_like(err) if se is None else np.asarray(se, dtype=float)
    keep = se < err / 3
    if keep.sum() < min_points:
        raise ValueError(f"only {int(keep.sum())} usable points (need {min_points}); "
                         f"noise-dominated N: {N[~keep].astype(int).tolist()}")
    x, y = np.log(N[keep]), np.log(err[keep])
    w = np.ones_like(x) if np.all(se[keep] == 0) else (err[keep] / np.maximum(se[keep], 1e-300)) ** 2
    w = w / w.mean()
    X = np.column_stack([np.ones_like(x), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    n = len(x)
    resid = (y - X @ coef) * sw
    sigma2 = float(resid @ resid) / (n - 2) if n > 2 else 0.0
    cov = sigma2 * np.linalg.inv((X * w[:, None]).T @ X)
    half = stats.t.ppf(0.5 + level / 2, max(n - 2, 1)) * math.sqrt(max(cov[1, 1], 0.0))
    slope = float(coef[1])
    return RateFit(slope, float(coef[0]), (slope - half, slope + half),
                   tuple(N[keep].astype(int).tolist()), tuple(N[~keep].astype(int).tolist()))


# -- chaos error curves ------------------------------------------------------------

@dataclass
class Reference:
    values: dict          # phi name -> value
    ses: dict             # phi name -> jackknife standard error
    sample: np.ndarray    # terminal atoms, shape (M, 1)


@dataclass
class ChaosCurve:
    N: np.ndarray
    strong_err: np.ndarray
    strong_se: np.ndarray
    weak_err: np.ndarray
    weak_se: np.ndarray
    reference_value: float
    reference_se: float

    def rows(self):
        for i in range(len(self.N)):
            yield (int(self.N[i]), self.strong_err[i], self.strong_se[i],
                   self.weak_err[i], self.weak_se[i])

    def strong_fit(self) -> RateFit:
        return fit_rate(self.N, self.strong_err, self.strong_se)

    def weak_fit(self) -> RateFit:
        return fit_rate(self.N, self.weak_err, self.weak_se)


def chaos_reference(cfg: ExperimentConfig, phis: dict) -> Reference:
    """phi(mu_T) from a Picard Monte Carlo run with ``cfg.reference_size`` atoms
    on the same time grid as the particle runs; jackknife SE over atom groups."""
    drift = cfg.make_drift()
    stream = RandomStream(cfg.seed, "chaos/reference")
    pc = PicardConfig(M=cfg.reference_size, steps=cfg.steps, records=1,
                      max_iter=cfg.ref_iter, noise_floor=False)
    flow, _ = picard_solve(drift, cfg.make_init(), cfg.T, cfg.law, stream, tol=None, cfg=pc)
    atoms = flow.laws[-1].points
    G = cfg.ref_groups
    groups = [atoms[g::G] for g in range(G)]
    values, ses = {}, {}
    for name, phi in phis.items():
        full = phi.eval(EmpiricalMeasure(atoms))
        loo = np.array([phi.eval(EmpiricalMeasure(np.vstack(groups[:g] + groups[g + 1:])))
                        for g in range(G)])
        values[name] = full
        ses[name] = math.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2))
    return Reference(values, ses, atoms)


def _replicate(cfg: ExperimentConfig, N: int, phis: dict, threads: int = 1):
    """phi values of mu^N_T and particle 0's terminal position, per replication."""
    drift, init, law, sim = cfg.make_drift(), cfg.make_init(), cfg.law, cfg.sim
    names = list(phis)

    def one(r):
        stream = RandomStream(cfg.seed, f"chaos/N={N}", r)
        x0 = init.sample(stream, N)
        final = simulate(x0, drift, sim, law, stream).positions
        m = EmpiricalMeasure(final)
        return [phis[k].eval(m) for k in names], final[0, 0]

    reps = range(cfg.R)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(one, reps))
    else:
        out = [one(r) for r in reps]
    vals = np.array([o[0] for o in out])
    first = np.array([o[1] for o in out])
    return {k: vals[:, i] for i, k in enumerate(names)}, first


def _curve(N_grid, values_by_N, ref_value, ref_se, R) -> ChaosCurve:
    strong, strong_se, weak, weak_se = [], [], [], []
    for N in N_grid:
        d = values_by_N[N] - ref_value
        a = np.abs(d)
        strong.append(a.mean())
        strong_se.append(math.sqrt(a.var(ddof=1) / R + ref_se ** 2))
        weak.append(abs(d.mean()))
        weak_se.append(math.sqrt(d.var(ddof=1) / R + ref_se ** 2))
    return ChaosCurve(np.array(N_grid), np.array(strong), np.array(strong_se),
                      np.array(weak), np.array(weak_se), ref_value, ref_se)


def chaos_error_curves(cfg: ExperimentConfig, phis: dict | None = None, threads: int = 1,
                       reference: Reference | None = None, with_first_particle: bool = False):
    """Strong and weak errors over ``cfg.N_grid`` for several functionals
    evaluated on the same particle runs.

    Returns ``{name: ChaosCurve}`` (and the per-N particle-0 samples plus the
    reference when ``with_first_particle``).
    """
    phis = phis or {cfg.phi: cfg.make_phi()}
    if cfg.reference_size < 16 * cfg.N_grid[-1]:
        raise ValueError("reference run must have at least 16 max(N_grid) atoms")
    reference = reference or chaos_reference(cfg, phis)
    by_N, first = {}, {}
    for N in cfg.N_grid:
        vals, f = _replicate(cfg, N, phis, threads)
        by_N[N] = vals
        first[N] = f
    curves = {}
    for k in phis:
        c = _curve(cfg.N_grid, {N: by_N[N][k] for N in cfg.N_grid},
                   reference.values[k], reference.ses[k], cfg.R)
        if reference.ses[k] >= c.strong_err.max() / 3:
            raise ReferenceNoiseError(
                f"reference SE {reference.ses[k]:.2e} dominates the errors for {k}")
        curves[k] = c
    if with_first_particle:
        return curves, first, reference
    return curves


def chaos_error_curve(cfg: ExperimentConfig, threads: int = 1) -> ChaosCurve:
    return chaos_error_curves(cfg, threads=threads)[cfg.phi]


@dataclass
class WeakVerdict:
    mode: str            # "fit" or "one_sided"
    passed: bool
    fit: RateFit | None
    reason: str = ""


def weak_rate_verdict(curve: ChaosCurve, target: float = -0.5) -> WeakVerdict:
    """Slope check when the weak errors can be fitted; otherwise the explicit
    one-sided check weak_err <= strong_err at every N."""
    try:
        fit = curve.weak_fit()
    except ValueError as exc:
        fit, reason = None, str(exc)
    else:
        if fit.ci[1] - fit.ci[0] <= 1.0:
            return WeakVerdict("fit", fit.slope <= target, fit)
        reason = f"slope CI {fit.ci} too wide"
    ok = bool(np.all(curve.weak_err <= curve.strong_err))
    return WeakVerdict("one_sided", ok, fit, reason)


def mean_field_w1_curve(cfg: ExperimentConfig, first: dict, reference: Reference):
    """W1 between the law of particle 0 (R samples per N) and the reference
    sample of mu_T, with the R-sampling floor W1(ref[:R], ref[R:])."""
    ref = reference.sample[:, 0]
    floor = w1_exact_1d(ref[:cfg.R, None], ref[cfg.R:, None])
    N = np.array(cfg.N_grid)
    w1 = np.array([w1_exact_1d(first[n][:, None], ref[:, None]) for n in cfg.N_grid])
    return N, w1, floor


# -- initial-data rates --------------------------------------------------------------

@dataclass
class InitCurve:
    N: np.ndarray
    w1: np.ndarray
    se: np.ndarray
    fit: RateFit | None
    note: str = ""


def initial_wasserstein_curve(init: InitSpec, N_grid, R: int = 500, seed: int = 0,
                              dim: int = 1, threads: int = 1) -> InitCurve:
    """E W1(mu^N_0, mu_0) per N and its log-log slope.

    d = 1 is exact against the law itself; d >= 2 draws iid coordinates and
    uses exact assignment against an independent reference sample of the same
    size (N <= 256).
    """
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2 or 3")
    if dim > 1 and max(N_grid) > MAX_ASSIGNMENT:
        raise ValueError(f"d >= 2 needs N <= {MAX_ASSIGNMENT}")

    def sample(stream, n):
        if dim == 1:
            return init.sample(stream, n)[:, 0]
        cols = [init.sample(stream.substream(experiment=f"{stream.experiment}/c{c}"), n)[:, 0]
                for c in range(dim)]
        return np.column_stack(cols)

    def one(N, r):
        stream = RandomStream(seed, f"init/N={N}", r)
        x = sample(stream, N)
        if dim == 1:
            return w1_to_law_1d(x, init.ppf_integral, init.cdf)
        y = sample(stream.substream(experiment=f"init/ref/N={N}"), N)
        return w1_small_exact(x, y)

    means, ses = [], []
    for N in N_grid:
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                vals = np.array(list(pool.map(lambda r: one(N, r), range(R))))
        else:
            vals = np.array([one(N, r) for r in range(R)])
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(R))
    N = np.array(N_grid)
    means, ses = np.array(means), np.array(ses)
    try:
        fit, note = fit_rate(N, means, ses), ""
    except ValueError as exc:
        fit, note = None, str(exc)
    return InitCurve(N, means, ses, fit, note)
