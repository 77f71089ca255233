"""Reference profiles rho^k and the Beta-function series built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special


@dataclass(frozen=True)
class RhoParams:
    k: float
    alpha: float
    dim: int = 1

    def __post_init__(self):
        if not self.k > -self.alpha:
            raise ValueError(f"rho^k needs k > -alpha (k={self.k}, alpha={self.alpha})")

    def with_k(self, k: float) -> "RhoParams":
        return RhoParams(k, self.alpha, self.dim)


def _radius(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1:
        return np.abs(x)
    return np.linalg.norm(x, axis=-1)


def rho(params: RhoParams, t, x):
    """t^{-d/alpha} (1 + t^{-1/alpha}|x|)^{-d-alpha-k}; vectorised over x."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("rho needs t > 0")
    a, d = params.alpha, params.dim
    return t ** (-d / a) * (1.0 + t ** (-1.0 / a) * _radius(x, d)) ** (-d - a - params.k)


def space_time_ratio(params: RhoParams, gamma: float, t, x):
    """|x|^gamma t^{-gamma/alpha} rho^k / rho^{k-gamma}; never exceeds one."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    lower = params.k - gamma
    if not lower > -params.alpha:
        raise ValueError(f"k - gamma = {lower} violates the threshold > -alpha")
    r = _radius(x, params.dim)
    t = np.asarray(t, dtype=float)
    return r ** gamma * t ** (-gamma / params.alpha) * rho(params, t, x) / rho(params.with_k(lower), t, x)


@dataclass
class EmpiricalConstant:
    """Running maximum of observed ratios; a diagnostic, not a proved constant."""

    name: str = ""
    value: float = 0.0
    count: int = 0
    history: list = field(default_factory=list)

    def update(self, ratio: float) -> float:
        ratio = float(ratio)
        if not np.isfinite(ratio):
            raise FloatingPointError(f"{self.name}: non-finite ratio")
        self.count += 1
        self.value = max(self.value, ratio)
        self.history.append(ratio)
        return self.value


@dataclass(frozen=True)
class QuadConfig:
    """Trapezoid rule on two sinh-stretched node families centred on the
    peaks of the integrand; ``n`` nodes per family."""

    n: int = 400
    cutoff: float = 1e-14

    def doubled(self) -> "QuadConfig":
        return QuadConfig(2 * self.n, self.cutoff)


def _sinh_nodes(center, scale, reach, n):
    vmax = math.asinh(reach / scale)
    return center + scale * np.sinh(np.linspace(-vmax, vmax, n))


def convolution_inequality_ratio(k1: float, k2: float, s: float, t: float, y: float,
                                 quad: QuadConfig = QuadConfig(), alpha: float = 1.5,
                                 tracker: EmpiricalConstant | None = None) -> float:
    """int rho^{k1}(t-s, y-z) rho^{k2}(s, z) dz / rho^{min(k1,k2)}(t, y), d = 1."""
    if not 0.0 < s < t:
        raise ValueError("need 0 < s < t")
    p1, p2 = RhoParams(k1, alpha), RhoParams(k2, alpha)
    tau1, tau2 = (t - s) ** (1 / alpha), s ** (1 / alpha)
    # Integrand decays like |z|^{-(2 + 2 alpha + k1 + k2)}; truncate where it
    # falls below cutoff times its peak.
    decay = 2 + 2 * alpha + k1 + k2
    reach = (abs(y) + tau1 + tau2) * quad.cutoff ** (-1.0 / decay)
    z = np.unique(np.concatenate([
        _sinh_nodes(0.0, tau2, reach, quad.n),
        _sinh_nodes(y, tau1, reach, quad.n),
    ]))
    f = rho(p1, t - s, y - z) * rho(p2, s, z)
    value = np.trapezoid(f, z)
    if not np.isfinite(value) or value <= 0:
        raise FloatingPointError("convolution quadrature failed")
    ratio = value / rho(RhoParams(min(k1, k2), alpha), t, y)
    if tracker is not None:
        tracker.update(ratio)
    return float(ratio)


def convolution_tail_bound(k1: float, k2: float, s: float, t: float, y: float,
                           reach: float, alpha: float = 1.5) -> float:
    """Analytic bound on the mass dropped beyond |z| > reach (d = 1)."""
    # For |z| > reach >> |y|: rho^{k1}(t-s, y-z) <= (t-s)^{-1/a}, and the
    # rho^{k2}(s, .) tail integrates in closed form.
    a = alpha
    e = 1 + a + k2
    sc = s ** (1 / a)
    tail_rho2 = 2 * (1 + reach / sc) ** (1 - e) / (e - 1)
    return float((t - s) ** (-1 / a) * tail_rho2)


def beta_fn(x: float, y: float) -> float:
    if not (x > 0 and y > 0):
        raise ValueError("Beta function needs positive arguments")
    return math.exp(special.gammaln(x) + special.gammaln(y) - special.gammaln(x + y))


def _log_beta_products(alpha, k_max, offset):
    g = 1.0 - 1.0 / alpha
    logs = special.betaln(offset + g * np.arange(1, k_max + 1), g)
    return np.concatenate([[0.0], np.cumsum(logs)])


def beta_product_tail(alpha: float, coefficient: float, k_max: int, tau: float = 1.0) -> np.ndarray:
    """a_k = C^k tau^{(k-1)(1-1/alpha)} prod_{j<k} B(j(1-1/alpha), 1-1/alpha), k = 1..k_max.

    The majorant of the k-th convolution power of the parametrix kernel,
    with the common factor tau^{-1/alpha} rho^1 dropped.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    g = 1.0 - 1.0 / alpha
    k = np.arange(1, k_max + 1)
    logp = _log_beta_products(alpha, k_max, 0.0)[:k_max]
    return np.exp(k * math.log(coefficient) + (k - 1) * g * math.log(tau) + logp)


def proxy_series_bound(alpha: float, coefficient: float, k_max: int, tau: float = 1.0) -> np.ndarray:
    """b_k = C^{k+1} tau^{k(1-1/alpha)} prod_{j<=k} B(1/alpha + j(1-1/alpha), 1-1/alpha).

    Majorant of the k-th parametrix correction term, in units of rho^0.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    g = 1.0 - 1.0 / alpha
    k = np.arange(1, k_max + 1)
    logp = _log_beta_products(alpha, k_max, 1.0 / alpha)[1:]
    with np.errstate(over="ignore"):
        return np.exp((k + 1) * math.log(coefficient) + k * g * math.log(tau) + logp)


def series_tail(terms: np.ndarray, after: int) -> float:
    """sum_{k > after} terms[k-1], with a geometric bound for the part past
    the end of ``terms`` once the ratio test applies."""
    terms = np.asarray(terms, dtype=float)
    head = float(terms[after:].sum())
    if not np.all(np.isfinite(terms[after:])):
        return math.inf
    if len(terms) >= 2 and terms[-2] > 0:
        r = terms[-1] / terms[-2]
        if r < 1:
            head += float(terms[-1] * r / (1 - r))
        else:
            return math.inf
    return head
