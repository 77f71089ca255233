"""Mean-field N-particle system driven by independent stable noises."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .drift import DriftModel
from .measures import EmpiricalMeasure
from .rng import RandomStream, particle_ids
from .stable import StableLaw, sample_increments


class NonFiniteStateError(FloatingPointError):
    """A particle position overflowed to inf or NaN."""


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    steps: int = 400
    jump_cap: float | None = None
    scheme: str = "euler"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if self.jump_cap is not None and not self.jump_cap > 0:
            raise ValueError("jump_cap must be positive")
        if self.scheme != "euler":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def dt(self) -> float:
        return self.T / self.steps


@dataclass
class ParticleState:
    """Positions ``(N, d)`` at ``time`` after ``step`` Euler steps.

    ``ids`` key each particle's noise; permuting positions together with
    ids permutes every later state identically.
    """

    positions: np.ndarray
    time: float = 0.0
    step: int = 0
    ids: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if len(x) < 1:
            raise ValueError("need at least one particle")
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError("particle positions must be finite")
        self.positions = x
        if self.ids is None:
            self.ids = particle_ids(len(x))
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if self.ids.shape != (len(x),):
            raise ValueError("one id per particle")

    @property
    def n(self) -> int:
        return len(self.positions)

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions)


def capped(increments: np.ndarray, cap: float | None) -> np.ndarray:
    """Radially clip increments longer than ``cap``."""
    if cap is None:
        return increments
    norm = np.linalg.norm(increments, axis=1, keepdims=True)
    scale = np.minimum(1.0, cap / np.maximum(norm, 1e-300))
    return increments * scale


def interaction(drift: DriftModel, t: float, x: np.ndarray) -> np.ndarray:
    """b(t, x_i, mu^N) for all i, summed in a canonical atom order.

    Evaluating on value-sorted atoms makes the result invariant, bit for bit,
    under relabelling of the particles.
    """
    if not drift.meta.measure_dependent:
        return drift.eval_self(t, x)
    order = np.lexsort(x.T[::-1])
    out = np.empty_like(x)
    out[order] = drift.eval_self(t, x[order])
    return out


def step(state: ParticleState, drift: DriftModel, dt: float, law: StableLaw,
         stream: RandomStream, jump_cap: float | None = None) -> ParticleState:
    """One Euler step, all particles updated against the pre-step measure."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    b = interaction(drift, state.time, state.positions)
    dz = capped(sample_increments(law, dt, stream, state.ids, state.step), jump_cap)
    with np.errstate(over="ignore", invalid="ignore"):
        x = state.positions + b * dt + dz
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(f"non-finite position after step {state.step + 1}")
    return ParticleState(x, state.time + dt, state.step + 1, state.ids)


def simulate(init, drift: DriftModel, cfg: SimConfig, law: StableLaw, stream: RandomStream,
             trajectory: bool = False, ids=None):
    """Terminal state (and optionally the ``(steps + 1, N, d)`` path array)."""
    pts = init.points if isinstance(init, EmpiricalMeasure) else init
    state = ParticleState(np.array(pts, dtype=float, copy=True), 0.0, 0, ids)
    if state.positions.shape[1] != law.dim:
        raise ValueError("initial atoms and noise have different dimensions")
    path = [state.positions] if trajectory else None
    dt = cfg.dt
    for k in range(cfg.steps):
        state = step(state, drift, dt, law, stream, cfg.jump_cap)
        # keep times on the grid exactly
        state.time = (k + 1) * dt if k + 1 < cfg.steps else cfg.T
        if trajectory:
            path.append(state.positions)
    if trajectory:
        return state, np.stack(path)
    return state


def moment(measure, beta: float) -> float:
    """(1/N) sum |x_i|^beta."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    pts = measure.points if isinstance(measure, EmpiricalMeasure) else np.asarray(measure, float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = measure.w() if isinstance(measure, EmpiricalMeasure) else np.full(len(pts), 1 / len(pts))
    return float(np.linalg.norm(pts, axis=1) ** beta @ w)
