"""Parametrix expansion of the frozen-flow transition density in dimension one.

The proxy is the driftless stable density ``p_hat(s, t, x, y) = q(t - s, y - x)``
and the kernel is ``H(s, r, t, x, y) = b(r, x, mu_r) d/dx q(t - r, y - x)``.
Two evaluation paths share these definitions:

* a pointwise lazy calculus (:class:`KernelEvaluator`, :func:`spacetime_convolve`,
  :func:`kernel_iterate`) used for spot checks at a few points, and
* a grid engine (:func:`density_truncated`) computing
  ``p_K = p_hat + sum_{k<=K} p_hat (x) H^k`` on a whole y-grid by the forward
  recursion ``T_k = T_{k-1} (x) H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import signal, special

from .drift import DriftModel
from .measures import EmpiricalMeasure, GridDensity, MeasureFlow
from .reference import (EmpiricalConstant, QuadConfig, RhoParams, convolution_inequality_ratio,
                        proxy_series_bound, rho, series_tail)
from .stable import stable_table


class TruncationError(RuntimeError):
    """Truncation estimate above the requested tolerance."""


class NegativeDensityError(RuntimeError):
    """Density values below the negative tolerance (under-resolved grid)."""


@dataclass(frozen=True)
class ParametrixConfig:
    """Truncation and quadrature controls.

    ``grading_power`` defaults to alpha/(alpha - 1), which makes the
    ``(t - r)^{-1/alpha}`` endpoint singularity flat in the graded variable.
    ``tolerance`` is opt-in: when set, a truncation estimate above it raises.
    """

    truncation_K: int = 3
    time_nodes: int = 12
    grading_power: float | None = None
    space_step: float = 0.02
    space_extent: float = 40.0
    tolerance: float | None = None
    negative_tol: float = 1e-3
    mass_tol: float = 0.02
    point_time_nodes: int = 12
    point_space_nodes: int = 160

    def __post_init__(self):
        if self.truncation_K < 1:
            raise ValueError("truncation_K must be >= 1")
        if self.grading_power is not None and not self.grading_power > 1:
            raise ValueError("grading power must exceed 1")
        if self.time_nodes < 2 or self.space_step <= 0 or self.space_extent <= 0:
            raise ValueError("invalid quadrature controls")

    def power(self, alpha: float) -> float:
        return self.grading_power if self.grading_power is not None else alpha / (alpha - 1)


def graded_nodes(s: float, t: float, n: int, power: float):
    """Gauss-Legendre nodes of int_s^t dr graded towards t: r = t - (t-s) v^p."""
    g, w = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (g + 1)
    r = t - (t - s) * v ** power
    weights = 0.5 * w * (t - s) * power * v ** (power - 1)
    return r, weights


# -- pointwise kernels -------------------------------------------------------

@dataclass
class KernelEvaluator:
    """Lazy space-time kernel ``(s, r, t, x, y) -> value``.

    ``singularity`` is the exponent e in the ``(t - r)^{-e}`` blow-up.
    Primitive kernels broadcast over array arguments; convolved kernels
    loop over the broadcast elements and memoize.
    """

    fn: object
    alpha: float
    singularity: float = 0.0
    zero: bool = False
    label: str = ""

    def __call__(self, s, r, t, x, y):
        if self.zero:
            return np.zeros(np.broadcast(s, r, t, x, y).shape)
        return self.fn(s, r, t, x, y)


def proxy_density(s, t, x, y, alpha: float = 1.5):
    """p_hat(s, t, x, y) = q(t - s, y - x)."""
    if np.any(np.asarray(t) <= np.asarray(s)):
        raise ValueError("proxy density needs s < t")
    return stable_table(alpha).density(np.asarray(t, float) - s, np.asarray(y, float) - x)


def proxy_kernel(alpha: float) -> KernelEvaluator:
    table = stable_table(alpha)
    return KernelEvaluator(lambda s, r, t, x, y: table.density(np.asarray(t, float) - r,
                                                               np.asarray(y, float) - x),
                           alpha, 0.0, label="p_hat")


def _drift_values(drift: DriftModel, flow: MeasureFlow | None, r, x):
    """b(r, x, mu_r) broadcast over array r and x."""
    r, x = np.broadcast_arrays(np.asarray(r, float), np.asarray(x, float))
    out = np.empty(r.shape)
    for rv in np.unique(r):
        sel = r == rv
        pts = x[sel].reshape(-1, 1)
        if flow is None:
            vals = drift.eval(rv, pts, None)
        else:
            vals = flow.drift_at(drift, float(rv), pts)
        out[sel] = vals[:, 0]
    return out


def kernel_H(drift: DriftModel, flow: MeasureFlow | None = None, alpha: float = 1.5) -> KernelEvaluator:
    """H(s, r, t, x, y) = b(r, x, mu_r) d/dx q(t - r, y - x)."""
    if drift.meta.measure_dependent and flow is None:
        raise ValueError("measure-dependent drift needs a flow")
    if drift.meta.sup_norm == 0.0:
        return KernelEvaluator(None, alpha, 1.0 / alpha, zero=True, label="H")
    table = stable_table(alpha)

    def fn(s, r, t, x, y):
        if flow is not None and not flow.covers(float(np.min(r)), float(np.max(r))):
            raise ValueError("flow does not cover the requested time")
        b = _drift_values(drift, flow, r, x)
        # d/dx q(t - r, y - x) = -q'(t - r, y - x)
        return -b * table.gradient(np.asarray(t, float) - r, np.asarray(y, float) - x)

    return KernelEvaluator(fn, alpha, 1.0 / alpha, label="H")


def _two_sided_nodes(a, b, n, power):
    """Nodes on (a, b) graded towards both ends."""
    m = 0.5 * (a + b)
    g, w = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (g + 1)
    jac = 0.5 * w * power * v ** (power - 1)
    left = a + (m - a) * v ** power
    right = b - (b - m) * v ** power
    return np.concatenate([left, right]), np.concatenate([jac * (m - a), jac * (b - m)])


def _space_nodes(x, y, s1, s2, n):
    """Union of two sinh-stretched families around x (scale s1) and y (scale s2)."""
    reach = abs(y - x) + 1e3 * (s1 + s2) + 1.0
    out = []
    for c, sc in ((x, s1), (y, s2)):
        sc = max(sc, 1e-9)
        vmax = math.asinh(reach / sc)
        out.append(c + sc * np.sinh(np.linspace(-vmax, vmax, n)))
    return np.unique(np.concatenate(out))


def spacetime_convolve(f: KernelEvaluator, g: KernelEvaluator,
                       config: ParametrixConfig = ParametrixConfig()) -> KernelEvaluator:
    """(f (x) g)(s, r, t, x, y) = int_r^t int f(s, r, r', x, z) g(s, r', t, z, y) dz dr'."""
    if f.alpha != g.alpha:
        raise ValueError("incompatible kernels (different alpha)")
    if f.singularity >= 1 or g.singularity >= 1:
        raise ValueError("singularity exponents must be < 1 for the convolution to exist")
    alpha = f.alpha
    sing = max(0.0, f.singularity + g.singularity - 1.0)
    if f.zero or g.zero:
        return KernelEvaluator(None, alpha, sing, zero=True, label=f"({f.label}*{g.label})")
    power = config.power(alpha)
    nt, nz = config.point_time_nodes, config.point_space_nodes

    @lru_cache(maxsize=1 << 16)
    def point(s, r, t, x, y):
        rp, wr = _two_sided_nodes(r, t, nt, power)
        total = 0.0
        for ri, wi in zip(rp, wr):
            z = _space_nodes(x, y, (ri - r) ** (1 / alpha), (t - ri) ** (1 / alpha), nz)
            vals = f(s, r, ri, x, z) * g(s, ri, t, z, y)
            total += wi * np.trapezoid(vals, z)
        return total

    def fn(s, r, t, x, y):
        b = np.broadcast_arrays(*(np.asarray(a, float) for a in (s, r, t, x, y)))
        out = np.empty(b[0].shape)
        flat = [a.ravel() for a in b]
        res = out.ravel()
        for i in range(res.size):
            res[i] = point(*(float(a[i]) for a in flat))
        return res.reshape(out.shape)

    return KernelEvaluator(fn, alpha, sing, label=f"({f.label}*{g.label})")


def kernel_iterate(H: KernelEvaluator, k: int, config: ParametrixConfig = ParametrixConfig()):
    """H^k with H^{j+1} = H (x) H^j."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = H
    for _ in range(k - 1):
        out = spacetime_convolve(H, out, config)
    return out


# -- grid engine ---------------------------------------------------------------

@dataclass
class ParametrixResult:
    density: GridDensity
    terms: list = field(default_factory=list)       # T_1..T_K on the grid
    term_l1: list = field(default_factory=list)
    truncation_estimate: float = math.nan
    term_bounds: np.ndarray | None = None
    constants: dict = field(default_factory=dict)

    @property
    def proxy(self) -> np.ndarray:
        return self.density.info["proxy"]

    def partial(self, K: int) -> np.ndarray:
        """p_K on the grid for K <= truncation_K (unclamped)."""
        return self.proxy + sum(self.terms[:K], np.zeros_like(self.proxy))


class _GridEngine:
    def __init__(self, alpha, drift_on_grid, grid, init_masses, s, cfg):
        self.alpha = alpha
        self.table = stable_table(alpha)
        self.grid = grid
        self.h = grid[1] - grid[0]
        self.n = len(grid)
        self.init = init_masses
        self.s = s
        self.cfg = cfg
        self.power = cfg.power(alpha)
        self.bgrid = drift_on_grid
        self._T = {}
        self._b = {}
        m = np.arange(-(self.n - 1), self.n) * self.h
        self._lags = m
        self._cell = None

    def _kernel(self, tau):
        # Product-integration weights of the hat basis against q'(tau, .).
        h, m = self.h, self._lags
        F = self.table.cdf
        return (F(tau, m + h) - 2 * F(tau, m) + F(tau, m - h)) / h

    def _conv(self, f, kern):
        return signal.fftconvolve(f, kern, mode="valid")

    def T0(self, r):
        tau = r - self.s
        h, m = self.h, self._lags
        F = self.table.cdf
        cell = (F(tau, m + 0.5 * h) - F(tau, m - 0.5 * h)) / h
        return self._conv(self.init, cell)

    def b(self, r):
        if r not in self._b:
            self._b[r] = self.bgrid(r)
        return self._b[r]

    def T(self, k, t):
        key = (k, t)
        if key in self._T:
            return self._T[key]
        if k == 0:
            out = self.T0(t)
        else:
            rs, ws = graded_nodes(self.s, t, self.cfg.time_nodes, self.power)
            out = np.zeros(self.n)
            for r, w in zip(rs, ws):
                f = self.T(k - 1, r) * self.b(r)
                out -= w * self._conv(f, self._kernel(t - r))
        self._T[key] = out
        return out


def _init_masses(init, grid):
    """Masses of the initial law on the grid nodes (linear binning)."""
    h = grid[1] - grid[0]
    if isinstance(init, GridDensity):
        w = np.clip(init(grid), 0, None) * h
        return w / max(w.sum(), 1e-300)
    if isinstance(init, EmpiricalMeasure):
        pts, wts = init.points[:, 0], init.w()
    else:
        pts, wts = np.atleast_1d(np.asarray(init, float)), np.ones(1)
    pos = (pts - grid[0]) / h
    i = np.clip(np.floor(pos).astype(int), 0, len(grid) - 2)
    frac = np.clip(pos - i, 0, 1)
    out = np.bincount(i, wts * (1 - frac), minlength=len(grid))
    out += np.bincount(i + 1, wts * frac, minlength=len(grid))
    return out[:len(grid)]


def _make_grid(init, cfg, t_minus_s, alpha):
    h = cfg.space_step
    if isinstance(init, (GridDensity, EmpiricalMeasure)):
        pts = init.grid if isinstance(init, GridDensity) else init.points[:, 0]
        lo, hi = float(np.min(pts)), float(np.max(pts))
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) + cfg.space_extent
    else:
        c, half = float(init), cfg.space_extent
    n = int(math.ceil(half / h))
    return c + h * np.arange(-n, n + 1)


@lru_cache(maxsize=32)
def reference_constants(alpha: float) -> dict:
    """Empirical sup constants used by the truncation estimate.

    ``c0 = sup q/rho^0``, ``c_grad = sup |q'|/rho^1`` at t = 1 (both are
    scale invariant), and ``c_conv`` the running max of the rho convolution
    ratio for (k1, k2) = (1, 0) and (1, 1) over a sweep of s/t and y.
    """
    table = stable_table(alpha)
    u = np.linspace(0, 2000, 400001)
    c0 = float(np.max(table.density(1.0, u) / rho(RhoParams(0, alpha), 1.0, u)))
    cg = float(np.max(np.abs(table.gradient(1.0, u)) / rho(RhoParams(1, alpha), 1.0, u)))
    tracker = EmpiricalConstant("rho convolution")
    for frac in (0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99):
        for y in (0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0):
            for k1, k2 in ((1, 0), (1, 1), (0, 1)):
                convolution_inequality_ratio(k1, k2, frac, 1.0, y, QuadConfig(300), alpha, tracker)
    return {"c0": c0, "c_grad": cg, "c_conv": tracker.value}


def truncation_bounds(alpha: float, sup_b: float, tau: float, k_max: int | None = None) -> tuple[np.ndarray, dict]:
    """L1 majorants of ||p_hat (x) H^k||, k = 1..k_max.

    With C = ||b|| c_grad c_conv the k-th term is bounded pointwise by
    c0 C^k tau^{k(1-1/alpha)} prod_{j<k} B(1 + j(1-1/alpha), 1-1/alpha) rho^0,
    and rho^0(tau, .) has total mass 2/alpha.  Without ``k_max`` the range is
    doubled until the term ratio drops below 1/2, so the geometric tail
    bound in :func:`series_tail` applies.
    """
    const = reference_constants(alpha)
    C = sup_b * const["c_grad"] * const["c_conv"]
    if C == 0.0:
        return np.zeros(k_max or 1), dict(const, C=0.0)
    if k_max is None:
        # smallest k with term ratio C tau^g B(1/alpha + k g, g) below 1/2
        g = 1.0 - 1.0 / alpha
        log_c = math.log(C) + g * math.log(tau)
        k_max = 400
        while k_max < 1 << 24 and log_c + special.betaln(1 / alpha + k_max * g, g) > -math.log(2):
            k_max *= 2
    with np.errstate(over="ignore", invalid="ignore"):
        b = const["c0"] * (2.0 / alpha) * proxy_series_bound(alpha, C, k_max, tau) / C
    return b, dict(const, C=C)


def density_truncated(drift: DriftModel, flow: MeasureFlow | None, s: float, t: float, x,
                      config: ParametrixConfig = ParametrixConfig(), alpha: float = 1.5,
                      return_result: bool = False):
    """p_K(s, t, x, .) on a uniform y-grid.

    ``x`` is a starting point or an initial law (point atoms or a
    ``GridDensity``); the engine is linear in it.  Negative values in
    ``(-negative_tol, 0)`` are clamped to zero, lower ones raise.
    """
    if not s < t:
        raise ValueError("need s < t")
    if drift.meta.measure_dependent:
        if flow is None:
            raise ValueError("measure-dependent drift needs a flow")
        if not flow.covers(s, t):
            raise ValueError("flow does not cover [s, t]")
    cfg = config
    grid = _make_grid(x, cfg, t - s, alpha)
    init = _init_masses(x, grid)

    def drift_on_grid(r):
        if flow is None:
            return drift.eval(r, grid[:, None], None)[:, 0]
        return flow.drift_at(drift, r, grid[:, None])[:, 0]

    engine = _GridEngine(alpha, drift_on_grid, grid, init, s, cfg)
    proxy = engine.T(0, t)
    terms = []
    if drift.meta.sup_norm > 0:
        terms = [engine.T(k, t) for k in range(1, cfg.truncation_K + 1)]
    else:
        terms = [np.zeros_like(proxy) for _ in range(cfg.truncation_K)]
    h = engine.h
    term_l1 = [float(np.abs(T).sum() * h) for T in terms]
    values = proxy + sum(terms, np.zeros_like(proxy))

    bounds, const = truncation_bounds(alpha, drift.meta.sup_norm, t - s)
    estimate = series_tail(bounds, cfg.truncation_K) if drift.meta.sup_norm > 0 else 0.0
    if cfg.tolerance is not None and estimate > cfg.tolerance:
        raise TruncationError(
            f"truncation estimate {estimate:.3e} exceeds tolerance {cfg.tolerance:.1e}; "
            "raise truncation_K or refine the time mesh")

    low = float(values.min())
    if low <= -cfg.negative_tol:
        raise NegativeDensityError(
            f"density value {low:.3e} below -{cfg.negative_tol:.1e}; refine the grids")
    clamped = np.where(values < 0, 0.0, values)
    dens = GridDensity(grid, clamped, time=t)
    dens.info.update(proxy=proxy, raw=values, K=cfg.truncation_K, s=s)
    if dens.mass_defect > cfg.mass_tol:
        raise NegativeDensityError(
            f"mass defect {dens.mass_defect:.3e} above {cfg.mass_tol:.1e}; widen the grid")
    if not return_result:
        return dens
    return ParametrixResult(dens, terms, term_l1, estimate, bounds, const)


# -- checks --------------------------------------------------------------------

def density_bound_ratio(density: GridDensity, s: float, t: float, x: float,
                        alpha: float = 1.5) -> float:
    """max_y p(s, t, x, y) / rho^0(t - s, y - x)."""
    return float(np.max(density.values / rho(RhoParams(0, alpha), t - s, density.grid - x)))


def centering_residual(t: float, x: float = 0.0, alpha: float = 1.5,
                       extent: float = 300.0, step: float = 0.01) -> float:
    """|int d/dx q(t, y - x) dy| over a grid of half-width ``extent`` around x,
    plus the mass int_{|u| > extent} |q'| = 2 q(t, extent) the grid misses."""
    table = stable_table(alpha)
    n = int(round(extent / step))
    u = step * np.arange(-n, n + 1)
    inner = abs(np.trapezoid(-table.gradient(t, u), u))
    return float(inner + 2 * table.density(t, np.array([extent]))[0])


def chapman_kolmogorov_residual(s: float, r: float, t: float, x: float, y,
                                alpha: float = 1.5, extent: float = 400.0,
                                step: float = 0.005) -> float:
    """L-infinity residual of int p_hat(s,r,x,z) p_hat(r,t,z,y) dz = p_hat(s,t,x,y)."""
    table = stable_table(alpha)
    y = np.atleast_1d(np.asarray(y, float))
    n = int(round(extent / step))
    z = x + step * np.arange(-n, n + 1)
    a = table.density(r - s, z - x)
    lhs = np.array([np.trapezoid(a * table.density(t - r, yi - z), z) for yi in y])
    return float(np.max(np.abs(lhs - table.density(t - s, y - x))))


def holder_ratio(densities: dict, s: float, t: float, gamma: float,
                 alpha: float = 1.5) -> float:
    """max over pairs x1 != x2 and grid y of
    |p(x1, y) - p(x2, y)| / ((t-s)^{-gamma/alpha} |x1 - x2|^gamma (rho^0(y - x1) + rho^0(y - x2)))."""
    keys = sorted(densities)
    best = 0.0
    tau = t - s
    p0 = RhoParams(0, alpha)
    for i, x1 in enumerate(keys):
        for x2 in keys[i + 1:]:
            d1, d2 = densities[x1], densities[x2]
            lo, hi = max(d1.grid[0], d2.grid[0]), min(d1.grid[-1], d2.grid[-1])
            y = np.linspace(lo, hi, 4001)
            num = np.abs(d1(y) - d2(y))
            den = tau ** (-gamma / alpha) * abs(x1 - x2) ** gamma * (
                rho(p0, tau, y - x1) + rho(p0, tau, y - x2))
            best = max(best, float(np.max(num / den)))
    return best


def with_K(config: ParametrixConfig, K: int) -> ParametrixConfig:
    return replace(config, truncation_K=K)
