"""Counter-based keyed random streams.

A stream is a value ``(seed, experiment, replication)``.  Draws are addressed
by ``(particle, step, draw index)`` and computed by hashing, so any subset of
particles or steps can be generated in any order, by any worker, and always
yields the same bits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ._backend import core

_MASK = (1 << 64) - 1


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _label_hash(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RandomStream:
    seed: int
    experiment: str | int = 0
    replication: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def key(self) -> int:
        z = _mix64(int(self.seed) ^ 0x243F6A8885A308D3)
        z = _mix64(z + _label_hash(self.experiment))
        return _mix64(z + (int(self.replication) & _MASK))

    def substream(self, experiment=None, replication=None) -> "RandomStream":
        return RandomStream(
            self.seed,
            self.experiment if experiment is None else experiment,
            self.replication if replication is None else replication,
        )

    def uniforms(self, particles, step: int, ndraw: int) -> np.ndarray:
        """Uniforms in (0, 1), shape ``(len(particles), ndraw)``."""
        p = np.ascontiguousarray(particles, dtype=np.int64)
        out = np.empty((len(p), ndraw))
        core.keyed_uniforms(self.key, p, int(step), out)
        return out

    def normals(self, particles, step: int, dim: int) -> np.ndarray:
        u = self.uniforms(particles, step, 2 * ((dim + 1) // 2))
        r = np.sqrt(-2.0 * np.log(u[:, 0::2]))
        z = np.empty((len(u), 2 * r.shape[1]))
        z[:, 0::2] = r * np.cos(2 * np.pi * u[:, 1::2])
        z[:, 1::2] = r * np.sin(2 * np.pi * u[:, 1::2])
        return z[:, :dim]


def particle_ids(n: int, offset: int = 0) -> np.ndarray:
    return np.arange(offset, offset + n, dtype=np.int64)
