"""Test functionals on measures with analytic flat derivatives.

Conventions: ``flat_derivative`` is the raw derivative (no centering); for the
linear functional it is ``psi`` itself.  Finite-difference checks compare
differences or the centered form ``delta phi/delta m - int delta phi/delta m dmu``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalMeasure, GridDensity


def _coord(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        return v[:, 0]
    return v


def _integrate(measure, f):
    """int f dmu for f acting on 1-d arrays of first coordinates."""
    if isinstance(measure, GridDensity):
        return measure.integrate(f)
    vals = f(measure.points[:, 0])
    return float(vals @ measure.w()) if not measure.uniform else float(np.mean(vals, axis=0))


@dataclass(frozen=True)
class Certificate:
    """Membership in the Hoelder class: delta phi/delta m is delta-Hoelder in v
    with constant L, and so is delta^2 phi/delta m^2 in each variable."""

    delta: float
    L: float


class TestFunctional:
    __test__ = False   # not a pytest class
    name = "functional"
    certificate: Certificate

    def eval(self, measure) -> float:
        raise NotImplementedError

    def flat_derivative(self, measure, v) -> np.ndarray:
        raise NotImplementedError

    def flat_derivative_grad(self, measure, v) -> np.ndarray:
        """d/dv of delta phi/delta m (measure)(v)."""
        raise NotImplementedError

    def second_flat_derivative(self, measure, v, v2) -> np.ndarray:
        raise NotImplementedError

    def eval_many(self, measures) -> np.ndarray:
        return np.array([self.eval(m) for m in measures])


class LinearFunctional(TestFunctional):
    """phi(mu) = int psi dmu."""

    def __init__(self, psi=np.sin, dpsi=np.cos, certificate=Certificate(1.0, 1.0), name="linear_sin"):
        self.psi, self.dpsi = psi, dpsi
        self.certificate = certificate
        self.name = name

    def eval(self, measure):
        return _integrate(measure, self.psi)

    def flat_derivative(self, measure, v):
        return self.psi(_coord(v))

    def flat_derivative_grad(self, measure, v):
        return self.dpsi(_coord(v))

    def second_flat_derivative(self, measure, v, v2):
        return np.zeros(np.broadcast(_coord(v), _coord(v2)).shape)


def holder_linear(delta: float) -> LinearFunctional:
    """int psi dmu with psi(x) = sign(x) min(1, |x|)^delta (delta-Hoelder, constant 2^{1-delta})."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")

    def psi(x):
        return np.sign(x) * np.minimum(1.0, np.abs(x)) ** delta

    def dpsi(x):
        a = np.abs(x)
        with np.errstate(divide="ignore"):
            return np.where(a < 1, delta * np.maximum(a, 1e-300) ** (delta - 1), 0.0)

    return LinearFunctional(psi, dpsi, Certificate(delta, 2 ** (1 - delta)), f"holder_{delta:g}")


class QuadraticFunctional(TestFunctional):
    """phi(mu) = int int g(x, y) dmu dmu with symmetric finite-rank
    g(x, y) = sum_r a_r f_r(x) f_r(y).  The default is g = cos(xi (x - y))."""

    def __init__(self, xi: float = 1.0, features=None, name=None):
        self.xi = float(xi)
        if features is None:
            k = self.xi
            features = [
                (1.0, lambda x: np.cos(k * x), lambda x: -k * np.sin(k * x)),
                (1.0, lambda x: np.sin(k * x), lambda x: k * np.cos(k * x)),
            ]
        self.features = features
        self.certificate = Certificate(1.0, 2.0 * self.xi)
        self.name = name or f"quadratic_cos{self.xi:g}"

    def _moments(self, measure):
        return [_integrate(measure, f) for _, f, _ in self.features]

    def g(self, x, y):
        return sum(a * f(x) * f(y) for a, f, _ in self.features)

    def eval(self, measure):
        return float(sum(a * m * m for (a, _, _), m in zip(self.features, self._moments(measure))))

    def flat_derivative(self, measure, v):
        v = _coord(v)
        return sum(2 * a * m * f(v) for (a, f, _), m in zip(self.features, self._moments(measure)))

    def flat_derivative_grad(self, measure, v):
        v = _coord(v)
        return sum(2 * a * m * df(v) for (a, _, df), m in zip(self.features, self._moments(measure)))

    def second_flat_derivative(self, measure, v, v2):
        return 2 * self.g(_coord(v), _coord(v2))

    def eval_samples(self, samples: np.ndarray) -> np.ndarray:
        """phi of each row's empirical measure, ``samples`` of shape (R, N)."""
        out = 0.0
        for a, f, _ in self.features:
            out = out + a * f(samples).mean(axis=1) ** 2
        return out


class CompositeFunctional(TestFunctional):
    """phi(mu) = F(int psi dmu); defaults F = sin, psi = sin."""

    def __init__(self, F=np.sin, dF=np.cos, d2F=lambda m: -np.sin(m),
                 psi=np.sin, dpsi=np.cos, certificate=Certificate(1.0, 1.0), name="composite_sin"):
        self.F, self.dF, self.d2F = F, dF, d2F
        self.psi, self.dpsi = psi, dpsi
        self.certificate = certificate
        self.name = name

    def _m(self, measure):
        return _integrate(measure, self.psi)

    def eval(self, measure):
        return float(self.F(self._m(measure)))

    def flat_derivative(self, measure, v):
        return self.dF(self._m(measure)) * self.psi(_coord(v))

    def flat_derivative_grad(self, measure, v):
        return self.dF(self._m(measure)) * self.dpsi(_coord(v))

    def second_flat_derivative(self, measure, v, v2):
        return self.d2F(self._m(measure)) * self.psi(_coord(v)) * self.psi(_coord(v2))


def builtin_functionals() -> dict:
    return {
        "linear_sin": LinearFunctional(),
        "linear_atan": LinearFunctional(np.arctan, lambda x: 1.0 / (1.0 + x * x),
                                        Certificate(1.0, 1.0), "linear_atan"),
        "holder_0.5": holder_linear(0.5),
        "quadratic_cos": QuadraticFunctional(1.0),
        "quadratic_cos2": QuadraticFunctional(2.0),
        "composite_sin": CompositeFunctional(),
    }


def make_functional(name: str, **params) -> TestFunctional:
    if name == "linear_sin":
        return LinearFunctional()
    if name == "holder":
        return holder_linear(params.get("delta", 0.5))
    if name == "quadratic":
        return QuadraticFunctional(params.get("xi", 1.0))
    cat = builtin_functionals()
    if name in cat:
        return cat[name]
    raise ValueError(f"unknown functional {name!r}; choose from {sorted(cat)}")


# -- finite-difference checks ----------------------------------------------------

def lateral_difference(phi: TestFunctional, mu: EmpiricalMeasure, v, eps: float) -> float:
    """[phi((1-eps) mu + eps delta_v) - phi(mu)] / eps."""
    return (phi.eval(mu.perturb(eps, v)) - phi.eval(mu)) / eps


def flat_derivative_fd(phi: TestFunctional, mu: EmpiricalMeasure, v,
                       eps=(1e-2, 5e-3)) -> float:
    """Richardson-extrapolated lateral derivative; estimates the centered
    delta phi/delta m(mu)(v) - int delta phi/delta m dmu."""
    e1, e2 = eps
    d1, d2 = lateral_difference(phi, mu, v, e1), lateral_difference(phi, mu, v, e2)
    return (e1 * d2 - e2 * d1) / (e1 - e2)


def centered_flat_derivative(phi: TestFunctional, mu: EmpiricalMeasure, v) -> float:
    raw = np.asarray(phi.flat_derivative(mu, np.atleast_1d(v)), float)[0]
    mean = float(np.asarray(phi.flat_derivative(mu, mu.points)) @ mu.w())
    return float(raw - mean)


def empirical_projection_gradient_check(phi: TestFunctional, atoms, i: int, h: float = 1e-5):
    """Central difference of x -> phi(mu^N_x) in x_i against (1/N) d/dv delta phi/delta m(mu^N)(x_i).

    Returns ``(fd_gradient, formula_gradient, discrepancy)``; the difference
    quotient is Richardson-extrapolated over steps h and h/2.
    """
    x = np.asarray(atoms, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)

    def u(xi):
        y = x.copy()
        y[i, 0] = xi
        return phi.eval(EmpiricalMeasure(y))

    def central(step):
        return (u(x[i, 0] + step) - u(x[i, 0] - step)) / (2 * step)

    fd = (4 * central(h / 2) - central(h)) / 3
    formula = float(np.asarray(phi.flat_derivative_grad(EmpiricalMeasure(x), x[i:i + 1, 0]))[0]) / n
    return fd, formula, abs(fd - formula)
