"""Rotationally invariant alpha-stable noise: sampling and densities.

Convention: ``E exp(i <xi, Z_t>) = exp(-t |xi|^alpha)`` (unit exponent).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicHermiteSpline

from ._backend import core
from .rng import RandomStream, particle_ids


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class StableLaw:
    alpha: float
    dim: int = 1
    convention: str = "unit_exponent"

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.convention != "unit_exponent":
            raise ValueError(f"unknown convention {self.convention!r}")

    def char_exponent(self, xi) -> np.ndarray:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        norm = np.abs(xi) if self.dim == 1 else np.linalg.norm(xi, axis=-1)
        return norm ** self.alpha


# -- sampling ---------------------------------------------------------------

def sample_increments(law: StableLaw, dt: float, stream: RandomStream,
                      particles, step: int = 0) -> np.ndarray:
    """Increments ``Z_dt`` for each particle id, shape ``(n, dim)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    p = np.ascontiguousarray(particles, dtype=np.int64)
    out = np.empty((len(p), law.dim))
    core.stable_increments(stream.key, p, int(step), law.alpha,
                           dt ** (1.0 / law.alpha), out)
    return out


def sample_increment(law: StableLaw, dt: float, stream: RandomStream,
                     particle: int = 0, step: int = 0) -> np.ndarray:
    return sample_increments(law, dt, stream, [particle], step)[0]


def sample(law: StableLaw, t: float, stream: RandomStream, n: int) -> np.ndarray:
    """``n`` iid copies of ``Z_t``, shape ``(n, dim)``."""
    return sample_increments(law, t, stream, particle_ids(n))


# -- density by radial Fourier inversion -----------------------------------

def _density_at_zero(alpha: float, dim: int) -> float:
    return math.gamma(dim / alpha) / (
        alpha * 2 ** (dim - 1) * math.pi ** (dim / 2) * math.gamma(dim / 2))


def _tail_coeffs(alpha: float, dim: int, order: int, r_ref: float):
    """Coefficients ``(c_k, p_k)`` of the large-|x| series of q(1, .).

    The radial profile (``order`` 0) or its radial derivatives is
    ``sum_k c_k r**p_k``.  The series is asymptotic for alpha > 1, so it is cut
    at its smallest term evaluated at ``r_ref``.
    """
    out = []
    prev = np.inf
    for k in range(1, 60):
        ka = k * alpha
        coef = ((-1) ** (k + 1) * math.sin(math.pi * ka / 2) * 2.0 ** ka
                / math.pi ** (dim / 2 + 1)
                * math.exp(special.gammaln(ka / 2 + 1) + special.gammaln((ka + dim) / 2)
                           - special.gammaln(k + 1)))
        p = -ka - dim
        for j in range(order):
            coef *= p - j
        size = abs(coef) * r_ref ** (p - order)
        if size > prev and k > 2:
            break
        out.append((coef, p - order))
        if size > 0.0:
            prev = size
    return out


def _tail_terms(alpha: float, dim: int, r: float, order: int = 0):
    return [c * r ** p for c, p in _tail_coeffs(alpha, dim, order, r)]


def _tail_cutoff(alpha: float) -> float:
    return 30.0


def _check(res, tol, what):
    val, err = res[0], res[1]
    if not np.isfinite(val) or err > max(tol, 1e3 * np.finfo(float).eps * abs(val)):
        raise QuadratureError(f"{what}: estimated error {err:.2e} exceeds tolerance {tol:.1e}")
    return val


def _panels(f, upper, period, tol, what):
    """Sum of adaptive quadratures over panels no longer than ``period``."""
    edges = np.arange(0.0, upper, max(period, 1e-3))
    edges = np.append(edges, upper) if edges[-1] < upper else edges
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            total += _check(integrate.quad(f, a, b, epsabs=tol / len(edges),
                                           epsrel=1e-12, limit=200), tol, what)
    return total


@lru_cache(maxsize=65536)
def _radial(alpha: float, dim: int, r: float, order: int, tol: float) -> float:
    """Radial profile of q(1, .) (order 0) or its radial derivative (order 1)."""
    if r >= _tail_cutoff(alpha):
        return math.fsum(_tail_terms(alpha, dim, r, order))
    upper = 40.0 ** (1.0 / alpha)
    damp = lambda s: math.exp(-s ** alpha)
    what = f"stable density (alpha={alpha}, d={dim}, r={r})"
    if r == 0.0:
        if order == 1:
            return 0.0
        return _density_at_zero(alpha, dim)
    period = 2 * math.pi / r
    if dim == 1:
        if order == 0:
            f = lambda s: damp(s) / math.pi
            w = "cos"
        else:
            f = lambda s: -s * damp(s) / math.pi
            w = "sin"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return _check(integrate.quad(f, 0.0, upper, weight=w, wvar=r,
                                         epsabs=tol, epsrel=1e-12, limit=500), tol, what)
    if dim == 2:
        if order == 0:
            f = lambda s: special.j0(s * r) * s * damp(s) / (2 * math.pi)
        else:
            f = lambda s: -special.j1(s * r) * s * s * damp(s) / (2 * math.pi)
        return _panels(f, upper, period, tol, what)
    if dim == 3:
        c = 1.0 / (2 * math.pi ** 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            sin_part = _check(integrate.quad(lambda s: s * damp(s), 0.0, upper, weight="sin",
                                             wvar=r, epsabs=tol * r / c, epsrel=1e-12,
                                             limit=500), tol * r / c, what)
            if order == 0:
                return c * sin_part / r
            cos_part = _check(integrate.quad(lambda s: s * s * damp(s), 0.0, upper,
                                             weight="cos", wvar=r, epsabs=tol * r / c,
                                             epsrel=1e-12, limit=500), tol * r / c, what)
        return c * (cos_part / r - sin_part / r ** 2)
    raise ValueError("density evaluation supports dim in {1, 2, 3}")


def _norm(x, dim):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != dim:
        raise ValueError(f"point has {x.size} coordinates, law has dim={dim}")
    return x, float(np.linalg.norm(x))


def stable_density(law: StableLaw, t: float, x, tol: float = 1e-8) -> float:
    """q(t, x) by scaling to t = 1 and radial Fourier inversion."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if law.dim not in (1, 2, 3):
        raise ValueError("density evaluation supports dim in {1, 2, 3}")
    _, r = _norm(x, law.dim)
    scale = t ** (-1.0 / law.alpha)
    return scale ** law.dim * _radial(law.alpha, law.dim, r * scale, 0, tol)


def stable_density_gradient(law: StableLaw, t: float, x, tol: float = 1e-8) -> np.ndarray:
    """Gradient of q(t, .) at x."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if law.dim not in (1, 2, 3):
        raise ValueError("density evaluation supports dim in {1, 2, 3}")
    xv, r = _norm(x, law.dim)
    if r == 0.0:
        return np.zeros(law.dim)
    scale = t ** (-1.0 / law.alpha)
    dr = _radial(law.alpha, law.dim, r * scale, 1, tol) * scale ** (law.dim + 1)
    return dr * xv / r


# -- fast vectorised tables for d = 1 ---------------------------------------

def _xi_nodes(alpha: float, umax: float):
    """Composite Gauss-Legendre nodes on [0, R] graded geometrically at 0."""
    upper = 40.0 ** (1.0 / alpha)
    geo = np.geomspace(1e-10, 0.05, 20)
    width = min(0.5, 2 * np.pi / max(umax, 1.0))
    edges = np.unique(np.concatenate([[0.0], geo, np.arange(0.05, upper, width), [upper]]))
    g, w = np.polynomial.legendre.leggauss(16)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * g + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


class StableTable:
    """Vectorised q(t, x), d/dx q(t, x) and the CDF F(t, x) in dimension one.

    Values on ``|u| <= 30`` come from cubic Hermite interpolation of tables
    built by composite Gauss-Legendre quadrature; beyond that the asymptotic
    tail series is used.
    """

    def __init__(self, alpha: float, step: float = 0.01):
        self.alpha = float(alpha)
        self.umax = _tail_cutoff(alpha)
        u = np.arange(0.0, self.umax + step, step)
        xi, w = _xi_nodes(alpha, self.umax)
        damp = np.exp(-xi ** alpha) * w / np.pi
        cos = np.cos(np.outer(u, xi))
        sin = np.sin(np.outer(u, xi))
        q0 = cos @ damp
        q1 = -(sin @ (xi * damp))
        q2 = -(cos @ (xi ** 2 * damp))
        q3 = sin @ (xi ** 3 * damp)
        cdf = 0.5 + sin @ (damp / xi)
        self._q = CubicHermiteSpline(u, q0, q1)
        self._dq = CubicHermiteSpline(u, q1, q2)
        self._d2q = CubicHermiteSpline(u, q2, q3)
        self._cdf = CubicHermiteSpline(u, cdf, q0)

    def _tail(self, u, order):
        out = np.zeros_like(u)
        for c, p in _tail_coeffs(self.alpha, 1, order, self.umax):
            out += c * u ** p
        return out

    def _upper_tail_mass(self, u):
        out = np.zeros_like(u)
        for c, p in _tail_coeffs(self.alpha, 1, 0, self.umax):
            out -= c * u ** (p + 1) / (p + 1)
        return out

    def _radial(self, u, order):
        u = np.abs(u)
        inner = u <= self.umax
        out = np.empty_like(u)
        spline = (self._q, self._dq, self._d2q)[order]
        out[inner] = spline(u[inner])
        out[~inner] = self._tail(u[~inner], order)
        return out

    def density(self, t, x):
        x = np.asarray(x, dtype=float)
        s = np.asarray(t, dtype=float) ** (-1.0 / self.alpha)
        return s * self._radial(x * s, 0)

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        s = np.asarray(t, dtype=float) ** (-1.0 / self.alpha)
        return np.sign(x) * s * s * self._radial(x * s, 1)

    def second_derivative(self, t, x):
        x = np.asarray(x, dtype=float)
        s = np.asarray(t, dtype=float) ** (-1.0 / self.alpha)
        return s ** 3 * self._radial(x * s, 2)

    def cdf(self, t, x):
        x = np.asarray(x, dtype=float)
        u = x * np.asarray(t, dtype=float) ** (-1.0 / self.alpha)
        a = np.abs(u)
        upper = np.empty_like(a)
        inner = a <= self.umax
        upper[inner] = 1.0 - self._cdf(a[inner])
        upper[~inner] = self._upper_tail_mass(a[~inner])
        return np.where(u >= 0, 1.0 - upper, upper)


@lru_cache(maxsize=16)
def stable_table(alpha: float) -> StableTable:
    return StableTable(alpha)
