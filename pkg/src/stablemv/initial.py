"""Initial laws with closed-form CDF, quantile antiderivative and keyed sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalMeasure
from .rng import RandomStream, particle_ids

INIT_STEP = -1


class InitSpec:
    """Base class: ``moment_order`` is the q with int |x|^q' dmu finite for q' < q."""

    @property
    def moment_order(self) -> float:
        return math.inf

    def ppf(self, u):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf_integral(self, u):
        raise NotImplementedError

    def sample(self, stream: RandomStream, n: int, offset: int = 0) -> np.ndarray:
        # step index -1 is reserved for initial draws; noise uses steps >= 0
        u = stream.uniforms(particle_ids(n, offset), INIT_STEP, 1)[:, 0]
        return self.ppf(u)[:, None]

    def empirical(self, stream, n) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.sample(stream, n))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformInit(InitSpec):
    low: float = 0.0
    high: float = 1.0

    def ppf(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, float)

    def cdf(self, x):
        return np.clip((np.asarray(x, float) - self.low) / (self.high - self.low), 0.0, 1.0)

    def ppf_integral(self, u):
        u = np.asarray(u, float)
        return self.low * u + 0.5 * (self.high - self.low) * u * u

    def to_dict(self):
        return {"kind": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class ParetoInit(InitSpec):
    """P(X > x) = (x / scale)^{-q} for x >= scale; moments of order < q are finite."""

    q: float = 1.5
    scale: float = 1.0

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("Pareto tail index must exceed 1 for a finite mean")

    @property
    def moment_order(self) -> float:
        return self.q

    def ppf(self, u):
        return self.scale * (1.0 - np.asarray(u, float)) ** (-1.0 / self.q)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, float), self.scale)
        return 1.0 - (x / self.scale) ** (-self.q)

    def ppf_integral(self, u):
        e = 1.0 - 1.0 / self.q
        return -self.scale * (1.0 - np.asarray(u, float)) ** e / e

    def to_dict(self):
        return {"kind": "pareto", "q": self.q, "scale": self.scale}


@dataclass(frozen=True)
class PointInit(InitSpec):
    at: float = 0.0

    def ppf(self, u):
        return np.full(np.shape(u), float(self.at))

    def cdf(self, x):
        return (np.asarray(x, float) >= self.at).astype(float)

    def ppf_integral(self, u):
        return self.at * np.asarray(u, float)

    def to_dict(self):
        return {"kind": "point", "at": self.at}


def make_init(spec: dict) -> InitSpec:
    kind = spec.get("kind")
    args = {k: v for k, v in spec.items() if k != "kind"}
    table = {"uniform": UniformInit, "pareto": ParetoInit, "point": PointInit}
    if kind not in table:
        raise ValueError(f"unknown init kind {kind!r}; choose from {sorted(table)}")
    return table[kind](**args)
