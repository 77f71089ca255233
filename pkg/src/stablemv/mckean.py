"""Picard iteration for the McKean-Vlasov law, the decoupled flow and the
semigroup U(t, mu) = phi(law of X_T started from mu at time t).

Monte Carlo iterates are marched in lockstep: iterate m at step k is driven
by iterate m - 1 at the same step, and all iterates share the same noise
(common random numbers), so the distance between successive iterates is
not swamped by sampling noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .drift import DriftModel
from .functionals import TestFunctional
from .measures import (FIXED_POINT, EmpiricalMeasure, GridDensity, KDEConfig, MeasureFlow,
                       dtv_estimate, picard_iterate_tag)
from .parametrix import ParametrixConfig, density_truncated
from .particles import NonFiniteStateError
from .rng import RandomStream, particle_ids
from .stable import StableLaw, sample_increments, stable_table


class PicardConvergenceError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class PicardConfig:
    """Monte Carlo Picard controls; ``records`` is the number of stored times
    after the start (evenly spaced on the step grid)."""

    M: int = 200_000
    steps: int = 400
    records: int = 10
    max_iter: int = 8
    kde: KDEConfig = KDEConfig()
    engine: str = "mc"
    parametrix: ParametrixConfig = ParametrixConfig(truncation_K=2)
    noise_floor: bool = True

    def __post_init__(self):
        if self.engine not in ("mc", "density"):
            raise ValueError("engine must be 'mc' or 'density'")
        if self.steps % self.records:
            raise ValueError("records must divide steps")


@dataclass
class PicardHistory:
    sup_dtv: list                        # sup_t d(P^m, P^{m+1}), m = 1, 2, ...
    per_time: np.ndarray | None = None   # (iterations, records) distances
    noise_floor: float = math.nan
    converged_at: int | None = None


def _init_atoms(init, M: int, stream: RandomStream, offset: int = 0):
    if isinstance(init, EmpiricalMeasure):
        if init.n == M:
            return init.points.copy(), init.weights
        u = stream.uniforms(particle_ids(M, offset), -2, 1)[:, 0]
        idx = np.searchsorted(np.cumsum(init.w()), u * init.w().sum()).clip(0, init.n - 1)
        return init.points[idx].copy(), None
    if hasattr(init, "sample"):
        return init.sample(stream, M, offset), None
    pts = np.atleast_2d(np.asarray(init, dtype=float))
    return np.repeat(pts.reshape(1, -1), M, axis=0), None


def _march(drift: DriftModel, law: StableLaw, atoms: np.ndarray, weights, s: float, T: float,
           steps: int, n_iter: int, stream: RandomStream, record_steps, prev: MeasureFlow | None = None,
           kde: KDEConfig | None = KDEConfig(), keep_all: bool = False, ids=None):
    """Advance Picard iterates 1..n_iter together on [s, T].

    Returns ``(records, dist)``: ``records[j]`` holds the last iterate's atoms at
    ``record_steps[j]`` (or all iterates when ``keep_all``) and ``dist[m-1, j]``
    the KDE distance between iterates m and m+1 at that time.
    """
    dt = (T - s) / steps
    n = len(atoms)
    ids = particle_ids(n) if ids is None else ids
    X = [atoms.copy() for _ in range(n_iter)]
    record_steps = list(record_steps)
    dist = np.zeros((max(n_iter - 1, 0), len(record_steps)))
    records = []
    dependent = drift.meta.measure_dependent
    base_field = None
    if dependent and prev is None:
        base_field = drift.frozen(s, EmpiricalMeasure(atoms, weights))

    def snapshot(j):
        if kde is not None:
            for m in range(n_iter - 1):
                dist[m, j] = dtv_estimate(EmpiricalMeasure(X[m], weights),
                                          EmpiricalMeasure(X[m + 1], weights), kde)
        records.append([x.copy() for x in X] if keep_all else X[-1].copy())

    if record_steps and record_steps[0] == 0:
        snapshot(0)
    jrec = 1 if record_steps and record_steps[0] == 0 else 0
    for k in range(steps):
        t = s + k * dt
        dz = sample_increments(law, dt, stream, ids, k)
        for m in range(n_iter - 1, -1, -1):
            if not dependent:
                b = drift.eval(t, X[m], None)
            elif m == 0:
                b = base_field(X[0]) if prev is None else prev.drift_at(drift, t, X[0])
            else:
                b = drift.frozen(t, EmpiricalMeasure(X[m - 1], weights))(X[m])
            X[m] = X[m] + b * dt + dz
        if not np.all(np.isfinite(X[-1])):
            raise NonFiniteStateError(f"non-finite Picard particle at step {k + 1}")
        if jrec < len(record_steps) and record_steps[jrec] == k + 1:
            snapshot(jrec)
            jrec += 1
    return records, dist


def _record_steps(steps, records):
    every = steps // records
    return [0] + [every * (j + 1) for j in range(records)]


def picard_iterate(prev: MeasureFlow, drift: DriftModel, init, law: StableLaw,
                   stream: RandomStream, cfg: PicardConfig = PicardConfig()) -> MeasureFlow:
    """One Picard map: the marginal flow of dX = b(t, X, prev_t) dt + dZ, X_s ~ init.

    The output lives on the record times of ``cfg`` over ``[prev.start, prev.end]``;
    the driving drift interpolates ``prev`` linearly in time between its stored laws.
    """
    s, T = prev.start, prev.end
    m = prev.provenance.iterate or 0
    rec = _record_steps(cfg.steps, cfg.records)
    times = s + (T - s) / cfg.steps * np.array(rec, dtype=float)
    if cfg.engine == "density":
        if law.dim != 1:
            raise ValueError("the density route needs d = 1")
        laws = [init if isinstance(init, (EmpiricalMeasure, GridDensity))
                else EmpiricalMeasure(np.atleast_2d(init))]
        for t in times[1:]:
            laws.append(density_truncated(drift, prev, s, float(t), init, cfg.parametrix, law.alpha))
        return MeasureFlow(times, laws, picard_iterate_tag(m + 1))
    atoms, weights = _init_atoms(init, cfg.M, stream)
    records, _ = _march(drift, law, atoms, weights, s, T, cfg.steps, 1, stream, rec,
                        prev=prev, kde=None)
    return MeasureFlow(times, [EmpiricalMeasure(r, weights) for r in records],
                       picard_iterate_tag(m + 1))


def picard_solve(drift: DriftModel, init, T: float, law: StableLaw, stream: RandomStream,
                 tol: float | None = 0.02, max_iter: int | None = None,
                 cfg: PicardConfig = PicardConfig(), s: float = 0.0):
    """Iterate the Picard map from the constant flow at ``init``.

    Returns ``(flow, history)``.  ``history.sup_dtv[m-1]`` is the sup over record
    times of the estimated d_TV between iterates m and m+1.  With ``tol`` set,
    failure to reach it raises :class:`PicardConvergenceError`; ``tol=None``
    runs all iterations and only reports.
    """
    n_iter = cfg.max_iter if max_iter is None else max_iter
    if not drift.meta.measure_dependent:
        n_iter = min(n_iter, 2)
    n_iter = max(n_iter, 2)
    rec = _record_steps(cfg.steps, cfg.records)
    times = s + (T - s) / cfg.steps * np.array(rec, dtype=float)

    if cfg.engine == "density":
        flow = MeasureFlow.constant(init if isinstance(init, (EmpiricalMeasure, GridDensity))
                                    else EmpiricalMeasure(np.atleast_2d(init)),
                                    times, picard_iterate_tag(0))
        sup, per = [], []
        flows = [picard_iterate(flow, drift, init, law, stream, cfg)]
        for _ in range(n_iter - 1):
            flows.append(picard_iterate(flows[-1], drift, init, law, stream, cfg))
            d = [dtv_estimate(a, b, cfg.kde) for a, b in zip(flows[-2].laws[1:], flows[-1].laws[1:])]
            per.append(d)
            sup.append(max(d))
        history = PicardHistory(sup, np.array(per))
        final = flows[-1]
    else:
        atoms, weights = _init_atoms(init, cfg.M, stream)
        records, dist = _march(drift, law, atoms, weights, s, T, cfg.steps, n_iter, stream,
                               rec, kde=cfg.kde)
        history = PicardHistory(list(dist.max(axis=1)), dist)
        if cfg.noise_floor:
            other = stream.substream(experiment=f"{stream.experiment}/noise-floor")
            atoms2, _ = _init_atoms(init, cfg.M, other)
            rec2, _ = _march(drift, law, atoms2, weights, s, T, cfg.steps, n_iter, other,
                             rec, kde=None)
            history.noise_floor = max(
                dtv_estimate(EmpiricalMeasure(a, weights), EmpiricalMeasure(b, weights), cfg.kde)
                for a, b in zip(records[1:], rec2[1:]))
        final = MeasureFlow(times, [EmpiricalMeasure(r, weights) for r in records],
                            picard_iterate_tag(n_iter))
    for i, d in enumerate(history.sup_dtv):
        if tol is not None and d < tol:
            history.converged_at = i + 1
            break
    if tol is not None and history.converged_at is None:
        raise PicardConvergenceError(
            f"Picard iteration did not reach sup d_TV < {tol} in {n_iter} iterates "
            f"(history {['%.4f' % d for d in history.sup_dtv]})", history)
    final.provenance = FIXED_POINT
    return final, history


# -- decoupled flow ------------------------------------------------------------

def decoupled_flow_density(fixed_flow: MeasureFlow, drift: DriftModel, s: float, x, t: float,
                           config: ParametrixConfig = ParametrixConfig(), alpha: float = 1.5,
                           return_result: bool = False):
    """Density of the decoupled flow started at x at time s, with the fixed
    point frozen inside the drift."""
    if fixed_flow.provenance != FIXED_POINT:
        raise ValueError("decoupled flow needs a fixed-point flow")
    return density_truncated(drift, fixed_flow, s, t, x, config, alpha, return_result)


def mixture_identity_residual(fixed_flow: MeasureFlow, drift: DriftModel, init_nodes, init_weights,
                              s: float, t: float, config: ParametrixConfig = ParametrixConfig(),
                              alpha: float = 1.5, kde: KDEConfig = KDEConfig()) -> float:
    """L1 distance between sum_i w_i p(mu, s, t, x_i, .) and the flow marginal at t.

    ``init_nodes``/``init_weights`` discretize mu_s (e.g. Gauss-Legendre nodes
    of a uniform law, or a single atom).
    """
    dens = [decoupled_flow_density(fixed_flow, drift, s, float(x), t, config, alpha)
            for x in init_nodes]
    lo = min(d.grid[0] for d in dens)
    hi = max(d.grid[-1] for d in dens)
    h = dens[0].step
    grid = np.linspace(lo, hi, int(round((hi - lo) / h)) + 1)
    vals = sum(w * d(grid) for w, d in zip(init_weights, dens))
    mix = GridDensity(grid, vals, time=t)
    return 2.0 * dtv_estimate(fixed_flow.law_at(t), mix, kde)


# -- generator -------------------------------------------------------------------

def levy_constant(alpha: float, dim: int = 1) -> float:
    """c with c int (cos<xi,z> - 1)|z|^{-d-alpha} dz = -|xi|^alpha."""
    return (alpha * 2 ** (alpha - 1) * special.gamma((dim + alpha) / 2)
            / (math.pi ** (dim / 2) * special.gamma(1 - alpha / 2)))


@dataclass(frozen=True)
class GeneratorQuad:
    """Nonlocal integral controls: Taylor region |z| < taylor, quadrature on
    [taylor, 1] and on panels of ``panel`` width up to ``reach``; the rest is
    bounded by 2 sup|h| reach^{-alpha}/alpha and dropped."""

    taylor: float = 1e-2
    reach: float = 1e3
    panel: float = 1.0
    tol: float = 1e-10
    fd_step: float = 1e-4


def apply_generator(drift: DriftModel, law_t, h, grad_h, x: float, t: float = 0.0,
                    alpha: float = 1.5, quad: GeneratorQuad = GeneratorQuad()) -> float:
    """b(t, x, mu_t) h'(x) + L^alpha h(x) in dimension one.

    L^alpha is normalised so that its symbol is -|xi|^alpha.
    """
    if grad_h is None:
        raise ValueError("apply_generator needs the gradient of h")
    x = float(x)
    c = levy_constant(alpha, 1)
    hx = float(h(x))
    # |z| < taylor: h(x+z) + h(x-z) - 2h(x) = h''(x) z^2 + O(z^4)
    e = quad.fd_step
    h2 = (float(grad_h(x + e)) - float(grad_h(x - e))) / (2 * e)
    small = h2 * quad.taylor ** (2 - alpha) / (2 - alpha)

    def sym(z):
        return (h(x + z) + h(x - z) - 2 * hx) * z ** (-1 - alpha)

    def pair(z):
        return (h(x + z) + h(x - z)) * z ** (-1 - alpha)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        mid, err = integrate.quad(sym, quad.taylor, 1.0, epsabs=quad.tol, limit=200)
        edges = np.arange(1.0, quad.reach + quad.panel / 2, quad.panel)
        far = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            far += integrate.quad(pair, a, b, epsabs=quad.tol / len(edges), limit=50)[0]
    far -= 2 * hx * (1.0 - quad.reach ** (-alpha)) / alpha
    nonlocal_part = c * (small + mid + far)
    if law_t is None and drift.meta.measure_dependent:
        raise ValueError("measure-dependent drift needs the law at time t")
    b = float(np.ravel(drift.eval(t, np.array([[x]]), law_t))[0])
    return b * float(grad_h(x)) + nonlocal_part


# -- semigroup U -------------------------------------------------------------------

@dataclass(frozen=True)
class UConfig:
    """Controls for Monte Carlo estimates of U(t, mu).

    ``groups`` independent sub-runs of ``M / groups`` particles each are
    pooled; the standard error is the delete-a-group jackknife.
    """

    drift: DriftModel
    law: StableLaw
    T: float = 1.0
    dt: float = 0.005
    M: int = 100_000
    groups: int = 20
    n_iter: int = 5
    seed: int = 0
    experiment: str = "U"

    def steps_from(self, t: float) -> int:
        n = (self.T - t) / self.dt
        if abs(n - round(n)) > 1e-8:
            raise ValueError(f"T - t = {self.T - t} is not a multiple of dt = {self.dt}")
        return int(round(n))


@dataclass
class UEstimate:
    value: float
    se: float
    group_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _pooled(atoms_by_group, weights_by_group):
    G = len(atoms_by_group)
    pts = np.vstack(atoms_by_group)
    w = np.concatenate([(np.full(len(a), 1.0 / len(a)) if wt is None else wt) / G
                        for a, wt in zip(atoms_by_group, weights_by_group)])
    return EmpiricalMeasure(pts, w)


def _jackknife(phi: TestFunctional, atoms_by_group, weights_by_group):
    G = len(atoms_by_group)
    full = phi.eval(_pooled(atoms_by_group, weights_by_group))
    loo = np.array([phi.eval(_pooled(atoms_by_group[:g] + atoms_by_group[g + 1:],
                                     weights_by_group[:g] + weights_by_group[g + 1:]))
                    for g in range(G)])
    se = math.sqrt((G - 1) / G * np.sum((loo - loo.mean()) ** 2)) if G > 1 else math.nan
    return full, se, loo


def _group_starts(mu, cfg: UConfig, stream: RandomStream, perturbation=None):
    """Per-group starting atoms and weights."""
    G = cfg.groups
    per = cfg.M // G
    starts = []
    for g in range(G):
        if isinstance(mu, EmpiricalMeasure) and mu.uniform and mu.n >= G:
            atoms = mu.points[g::G].copy()
        elif isinstance(mu, EmpiricalMeasure):
            atoms, _ = _init_atoms(mu, per, stream.substream(replication=g))
        elif hasattr(mu, "sample"):
            atoms = mu.sample(stream.substream(replication=g), per)
        else:
            atoms, _ = _init_atoms(mu, per, stream)
        weights = None
        if perturbation is not None:
            eps, v = perturbation
            v = np.atleast_1d(np.asarray(v, float)).reshape(1, -1)
            weights = np.append(np.full(len(atoms), (1 - eps) / len(atoms)), eps)
            atoms = np.vstack([atoms, v])
        starts.append((atoms, weights))
    return starts


def _run_groups(starts, t: float, cfg: UConfig, stream: RandomStream, record_steps=None):
    """Picard-solve each group from time t to T; returns per-group records."""
    steps = cfg.steps_from(t)
    rec = [steps] if record_steps is None else record_steps
    out = []
    for g, (atoms, weights) in enumerate(starts):
        sub = stream.substream(replication=g)
        n_iter = cfg.n_iter if cfg.drift.meta.measure_dependent else 1
        records, _ = _march(cfg.drift, cfg.law, atoms, weights, t, cfg.T, steps, n_iter,
                            sub, rec, kde=None)
        out.append(records)
    return out


def semigroup_U_estimate(t: float, mu, phi, cfg: UConfig, perturbation=None,
                         stream: RandomStream | None = None):
    """U(t, mu) = phi(law of X_T^{t, mu}) with a jackknife standard error.

    ``phi`` may be a single functional or a dict of them (shared runs).
    """
    phis = phi if isinstance(phi, dict) else {"phi": phi}
    stream = stream or RandomStream(cfg.seed, cfg.experiment)
    if abs(t - cfg.T) < 1e-12:
        m = mu if perturbation is None else mu.perturb(*perturbation)
        res = {k: UEstimate(f.eval(m), 0.0) for k, f in phis.items()}
        return res if isinstance(phi, dict) else res["phi"]
    starts = _group_starts(mu, cfg, stream, perturbation)
    finals = [r[-1] for r in _run_groups(starts, t, cfg, stream)]
    weights = [w for _, w in starts]
    res = {}
    for k, f in phis.items():
        v, se, loo = _jackknife(f, finals, weights)
        res[k] = UEstimate(v, se, loo)
    return res if isinstance(phi, dict) else res["phi"]


@dataclass
class FlowConstancyResult:
    times: np.ndarray
    values: np.ndarray
    ses: np.ndarray
    residuals: np.ndarray
    combined_se: np.ndarray
    allowance: float = 0.0

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residuals <= 3 * self.combined_se + self.allowance))


def flow_constancy_residual(phi, mu0, cfg: UConfig, checkpoints, allowance: float = 0.0):
    """U(t_i, mu_{t_i}) against U(0, mu_0) for each checkpoint t_i.

    mu_{t_i} is the fixed-point marginal from the base run; each restart
    re-solves the Picard problem on [t_i, T] with fresh noise.  Returns one
    :class:`FlowConstancyResult` per functional.
    """
    phis = phi if isinstance(phi, dict) else {"phi": phi}
    checkpoints = [float(c) for c in checkpoints]
    base_stream = RandomStream(cfg.seed, cfg.experiment)
    steps = cfg.steps_from(0.0)
    rec = sorted({int(round(c / cfg.dt)) for c in checkpoints} | {steps})
    starts = _group_starts(mu0, cfg, base_stream)
    base = _run_groups(starts, 0.0, cfg, base_stream, rec)
    weights = [w for _, w in starts]
    base_final = [r[-1] for r in base]
    values = {k: [] for k in phis}
    ses = {k: [] for k in phis}
    for k, f in phis.items():
        v, se, _ = _jackknife(f, base_final, weights)
        values[k].append(v)
        ses[k].append(se)
    for c in checkpoints:
        j = rec.index(int(round(c / cfg.dt)))
        if j == len(rec) - 1:
            for k, f in phis.items():
                v, se, _ = _jackknife(f, [r[j] for r in base], weights)
                values[k].append(v)
                ses[k].append(se)
            continue
        restart_stream = base_stream.substream(experiment=f"{cfg.experiment}/restart@{c:.6g}")
        restart_starts = [(r[j], w) for r, w in zip(base, weights)]
        finals = [r[-1] for r in _run_groups(restart_starts, c, cfg, restart_stream)]
        for k, f in phis.items():
            v, se, _ = _jackknife(f, finals, weights)
            values[k].append(v)
            ses[k].append(se)
    out = {}
    for k in phis:
        v, se = np.array(values[k]), np.array(ses[k])
        out[k] = FlowConstancyResult(np.array([0.0] + checkpoints), v, se,
                                     np.abs(v[1:] - v[0]), np.sqrt(se[1:] ** 2 + se[0] ** 2),
                                     allowance)
    return out if isinstance(phi, dict) else out["phi"]


def flat_derivative_U_difference(t: float, mu, phi: TestFunctional, v1, v2, eps: float,
                                 cfg: UConfig, richardson: bool = False):
    """[U(t, (1-eps) mu + eps delta_v1) - U(t, (1-eps) mu + eps delta_v2)] / eps.

    Both solves share every random number, so the difference is smooth in
    eps.  With ``richardson`` the estimate is extrapolated from eps and eps/2.
    Returns ``(value, standard_error)``.
    """
    if np.allclose(np.ravel(v1), np.ravel(v2)):
        return 0.0, 0.0

    def diff(e):
        stream = RandomStream(cfg.seed, cfg.experiment)
        a = semigroup_U_estimate(t, mu, phi, cfg, (e, v1), stream)
        b = semigroup_U_estimate(t, mu, phi, cfg, (e, v2), stream)
        d = (a.value - b.value) / e
        if len(a.group_values):
            g = (a.group_values - b.group_values) / e
            G = len(g)
            se = math.sqrt((G - 1) / G * np.sum((g - g.mean()) ** 2))
        else:
            se = 0.0
        return d, se

    d1, s1 = diff(eps)
    if not richardson:
        value, se = d1, s1
    else:
        d2, s2 = diff(eps / 2)
        value, se = 2 * d2 - d1, math.sqrt(4 * s2 ** 2 + s1 ** 2)
    if se > abs(value) and se > 0:
        warnings.warn(f"eps={eps} leaves the difference below the Monte Carlo noise "
                      f"(value {value:.3g}, SE {se:.3g})", RuntimeWarning)
    return value, se


def stable_smoothing(psi, x, tau: float, alpha: float = 1.5, extent: float = 400.0,
                     step: float = 0.005) -> float:
    """int psi(x + z) q(tau, z) dz by trapezoid quadrature (reference values)."""
    z = np.arange(-extent, extent + step / 2, step)
    return float(np.trapezoid(psi(x + z) * stable_table(alpha).density(tau, z), z))
