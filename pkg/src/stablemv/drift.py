"""Drift models b(t, x, mu) with flat derivatives and regularity metadata.

Query points ``x`` are ``(n, d)`` arrays and every evaluator returns an
``(n, d)`` array.  Measures are :class:`EmpiricalMeasure` instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ._backend import core
from .measures import EmpiricalMeasure, GridDensity, as_weighted_atoms


@dataclass(frozen=True)
class DriftMeta:
    """Declared regularity: ``|b| <= sup_norm``, eta-Hoelder in x with
    constant ``holder_x``, W1-Lipschitz in the measure with ``lip_measure``,
    and ``|d/dv delta b/delta m| <= lip_flat``."""

    sup_norm: float
    eta: float
    holder_x: float
    lip_measure: float = 0.0
    lip_flat: float = 0.0
    measure_dependent: bool = False


def _as_points(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        x = x.reshape(-1, 1) if dim in (None, 1) else x.reshape(1, -1)
    return x


class DriftModel:
    """Base class; subclasses provide ``eval`` and the flat derivatives."""

    meta: DriftMeta
    name = "drift"

    def eval(self, t, x, measure):
        raise NotImplementedError

    def flat_derivative(self, t, x, measure, v):
        return np.zeros_like(_as_points(x))

    def second_flat_derivative(self, t, x, measure, v, v2):
        return np.zeros_like(_as_points(x))

    def eval_self(self, t, x):
        """Drift of every atom of ``x`` against the empirical measure of ``x``."""
        return self.eval(t, x, EmpiricalMeasure(x))

    def frozen(self, t, measure):
        """Fast evaluator ``x -> b(t, x, measure)`` for a fixed measure."""
        if isinstance(measure, GridDensity):
            measure = as_weighted_atoms(measure)
        return lambda x: self.eval(t, x, measure)

    def params(self) -> dict:
        return {}


class ZeroDrift(DriftModel):
    name = "zero"
    meta = DriftMeta(0.0, 1.0, 0.0)

    def eval(self, t, x, measure=None):
        return np.zeros_like(_as_points(x))

    def eval_self(self, t, x):
        return np.zeros_like(_as_points(x))


class ConstantDrift(DriftModel):
    name = "constant"

    def __init__(self, c=0.3):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.meta = DriftMeta(float(np.linalg.norm(self.c)), 1.0, 0.0)

    def eval(self, t, x, measure=None):
        x = _as_points(x, len(self.c))
        return np.broadcast_to(self.c, x.shape).copy()

    def eval_self(self, t, x):
        return self.eval(t, x)

    def params(self):
        return {"c": self.c.tolist()}


class HolderDrift(DriftModel):
    """b(x) = amp * min(1, |x|^eta) * sign(x), coordinatewise."""

    name = "holder"

    def __init__(self, amp=0.5, eta=0.7):
        if not 0 < eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        self.amp, self.eta = float(amp), float(eta)
        # sign(x)|x|^eta is eta-Hoelder with constant 2^{1-eta}.
        self.meta = DriftMeta(self.amp, self.eta, self.amp * 2 ** (1 - self.eta))

    def _f(self, x):
        return self.amp * np.sign(x) * np.minimum(1.0, np.abs(x) ** self.eta)

    def eval(self, t, x, measure=None):
        return self._f(_as_points(x))

    def eval_self(self, t, x):
        return self._f(_as_points(x))

    def params(self):
        return {"amp": self.amp, "eta": self.eta}


class ConvolutionDrift(DriftModel):
    """b(t, x, mu) = int K(x - y) dmu(y) with K(u)_c = amp tanh(u_c / width).

    The kernel acts coordinatewise.  delta b/delta m (v) = K(x - v) and the
    second flat derivative vanishes.
    """

    name = "convolution"
    saturation = 20.0   # tanh(20) == 1 in double precision

    def __init__(self, amp=0.5, width=1.0, cell=1.0 / 64):
        self.amp, self.width = float(amp), float(width)
        self.cell = float(cell)
        self.meta = DriftMeta(self.amp, 1.0, self.amp / self.width,
                              lip_measure=self.amp / self.width,
                              lip_flat=self.amp / self.width, measure_dependent=True)

    def kernel(self, u):
        return self.amp * np.tanh(np.asarray(u, dtype=float) / self.width)

    def eval(self, t, x, measure: EmpiricalMeasure):
        x = _as_points(x, measure.dim)
        if not measure.uniform:
            return np.stack([self.kernel(x[:, c, None] - measure.points[None, :, c])
                             @ measure.w() for c in range(measure.dim)], axis=1)
        out = np.empty_like(x)
        col = np.empty(len(x))
        for c in range(x.shape[1]):
            core.conv_tanh_cross_1d(np.ascontiguousarray(x[:, c]),
                                    np.ascontiguousarray(measure.points[:, c]),
                                    self.amp, 1.0 / self.width, col)
            out[:, c] = col
        return out

    def eval_self(self, t, x):
        x = _as_points(x)
        out = np.empty_like(x)
        col = np.empty(len(x))
        for c in range(x.shape[1]):
            core.conv_tanh_self_1d(np.ascontiguousarray(x[:, c]), self.amp,
                                   1.0 / self.width, col)
            out[:, c] = col
        return out

    def flat_derivative(self, t, x, measure, v):
        x = _as_points(x, len(np.atleast_1d(v)))
        return self.kernel(x - np.atleast_1d(v)[None, :])

    def frozen(self, t, measure):
        if isinstance(measure, GridDensity):
            measure = as_weighted_atoms(measure)
        if measure.n < 64:
            return lambda x: self.eval(t, x, measure)
        fields = [_BinnedTanhField(measure.points[:, c], self.amp, self.width,
                                   self.cell, self.saturation, measure.weights)
                  for c in range(measure.dim)]

        def evaluate(x):
            x = _as_points(x, len(fields))
            return np.stack([f(x[:, c]) for c, f in enumerate(fields)], axis=1)
        return evaluate

    def params(self):
        return {"amp": self.amp, "width": self.width}


class _BinnedTanhField:
    """u -> amp sum_j w_j tanh((u - y_j)/w) for a large fixed atom set.

    Inside a core window the atoms are linearly binned on a grid and the sum
    is an FFT convolution, interpolated linearly; atoms beyond the saturation
    radius contribute exactly +-1.  Queries outside the core use an exact
    windowed sum over the sorted atoms.
    """

    def __init__(self, atoms, amp, width, cell, saturation, weights=None):
        y = np.asarray(atoms, dtype=float)
        self.amp, self.width = amp, width
        self.reach = saturation * width
        m = len(y)
        w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, float)
        self._atoms, self._w = y, w
        self._tails = {}
        self.uniform = weights is None
        lo_q, hi_q = np.quantile(y, [1e-3, 1 - 1e-3])
        # a core margin of one reach keeps outer windows inside the sparse tails
        self.lo, self.hi = lo_q - self.reach, hi_q + self.reach
        h = cell * width
        ext_lo = self.lo - self.reach
        n_ext = int(np.ceil((self.hi + self.reach - ext_lo) / h)) + 1
        pos = (y - ext_lo) / h
        i = np.floor(pos).astype(np.int64)
        inside = (i >= 0) & (i < n_ext - 1)
        frac = pos[inside] - i[inside]
        wi = w[inside]
        mass = np.bincount(i[inside], wi * (1 - frac), minlength=n_ext)[:n_ext]
        mass += np.bincount(i[inside] + 1, wi * frac, minlength=n_ext)[:n_ext]
        w_left = w[i < 0].sum()
        w_right = w[i >= n_ext - 1].sum()
        # The kernel spans the whole grid so that binned atoms far from a
        # query still saturate to +-1.
        kern = np.tanh(h * np.arange(-(n_ext - 1), n_ext) / width)
        full = signal.fftconvolve(mass, kern, mode="full")[n_ext - 1:2 * n_ext - 1]
        self.grid = ext_lo + h * np.arange(n_ext)
        self.values = amp * (full + w_left - w_right)

    def _tail(self, side):
        # Atoms within reach of a query beyond the core on ``side``; every
        # other atom lies more than ``reach`` away on the far side.
        if side not in self._tails:
            y, w = self._atoms, self._w
            sel = y < self.lo + self.reach if side < 0 else y > self.hi - self.reach
            order = np.argsort(y[sel], kind="stable")
            self._tails[side] = (y[sel][order], w[sel][order], float(w[~sel].sum()))
        return self._tails[side]

    def _outer(self, q, side):
        y, w, rest = self._tail(side)
        lo = np.searchsorted(y, q - self.reach).astype(np.int64)
        hi = np.searchsorted(y, q + self.reach).astype(np.int64)
        res = np.empty(len(q))
        if self.uniform:
            n = float(len(self._atoms))
            core.conv_tanh_window_1d(q, y, lo, hi, self.amp, 1.0 / self.width, n, res)
            return res + side * self.amp * (n - len(y)) / n
        cw = np.concatenate([[0.0], np.cumsum(w)])
        for k in range(len(q)):
            inner = np.tanh((q[k] - y[lo[k]:hi[k]]) / self.width) @ w[lo[k]:hi[k]]
            res[k] = self.amp * (cw[lo[k]] - (cw[-1] - cw[hi[k]]) + inner)
        return res + side * self.amp * rest

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        inner = (u >= self.lo) & (u <= self.hi)
        out[inner] = np.interp(u[inner], self.grid, self.values)
        for side, mask in ((-1, u < self.lo), (1, u > self.hi)):
            if np.any(mask):
                out[mask] = self._outer(np.ascontiguousarray(u[mask]), side)
        return out


class SaturatedMeanFieldDrift(DriftModel):
    """b(t, x, mu) = amp * sin(int K(x - y) dmu(y)), K(u) = tanh(u), d = 1.

    A genuinely nonlinear dependence on the measure: both flat derivatives
    are nonzero.
    """

    name = "saturated"

    def __init__(self, amp=0.5):
        self.amp = float(amp)
        self.meta = DriftMeta(self.amp, 1.0, self.amp, lip_measure=self.amp,
                              lip_flat=self.amp, measure_dependent=True)

    def _inner(self, x, measure):
        x = _as_points(x)
        return np.tanh(x[:, :1] - measure.points[None, :, 0]) @ measure.w()

    def eval(self, t, x, measure):
        return self.amp * np.sin(self._inner(x, measure))[:, None]

    def flat_derivative(self, t, x, measure, v):
        x = _as_points(x)
        m = self._inner(x, measure)
        return (self.amp * np.cos(m) * np.tanh(x[:, 0] - float(np.ravel(v)[0])))[:, None]

    def second_flat_derivative(self, t, x, measure, v, v2):
        x = _as_points(x)
        m = self._inner(x, measure)
        k1 = np.tanh(x[:, 0] - float(np.ravel(v)[0]))
        k2 = np.tanh(x[:, 0] - float(np.ravel(v2)[0]))
        return (-self.amp * np.sin(m) * k1 * k2)[:, None]

    def params(self):
        return {"amp": self.amp}


DRIFTS = {
    "zero": ZeroDrift,
    "constant": ConstantDrift,
    "holder": HolderDrift,
    "convolution": ConvolutionDrift,
    "saturated": SaturatedMeanFieldDrift,
}


def make_drift(name: str, **params) -> DriftModel:
    try:
        cls = DRIFTS[name]
    except KeyError:
        raise ValueError(f"unknown drift {name!r}; choose from {sorted(DRIFTS)}") from None
    return cls(**params)
