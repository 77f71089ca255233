"""Pure NumPy twin of the compiled ``_core`` kernels."""

import numpy as np

_U64 = np.uint64
G_PARTICLE = _U64(0x9E3779B97F4A7C15)
G_STEP = _U64(0xD1B54A32D192ED03)
G_DRAW = _U64(0x8CB92BA72F3D8DD7)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_TWO_M53 = 1.0 / 9007199254740992.0


def mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _M1
        z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def _cell_base(key, particles, step):
    p = np.asarray(particles, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(_U64(key) + p * G_PARTICLE)
        return mix64(z + _U64(np.int64(step).astype(np.uint64)) * G_STEP)


def _draws(base, ndraw):
    j = np.arange(1, ndraw + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = mix64(base[:, None] + j[None, :] * G_DRAW)
    return ((z >> _U64(11)).astype(np.float64) + 0.5) * _TWO_M53


def keyed_uniforms(key, particles, step, out):
    out[...] = _draws(_cell_base(key, particles, step), out.shape[1])


def stable_increments(key, particles, step, alpha, scale, out):
    n, dim = out.shape
    a = 0.5 * alpha
    u = _draws(_cell_base(key, particles, step), 2 + 2 * ((dim + 1) // 2))
    th = np.pi * u[:, 0]
    e = -np.log(u[:, 1])
    log_a = (np.log(np.sin(a * th)) - np.log(np.sin(th)) / a
             + (1.0 - a) / a * (np.log(np.sin((1.0 - a) * th)) - np.log(e)))
    amp = scale * np.sqrt(2.0 * np.exp(log_a))
    for c in range(0, dim, 2):
        r = np.sqrt(-2.0 * np.log(u[:, 2 + c]))
        ang = 2.0 * np.pi * u[:, 3 + c]
        out[:, c] = amp * r * np.cos(ang)
        if c + 1 < dim:
            out[:, c + 1] = amp * r * np.sin(ang)


def conv_tanh_self_1d(x, amp, inv_width, out):
    conv_tanh_cross_1d(x, x, amp, inv_width, out)


def conv_tanh_cross_1d(q, src, amp, inv_width, out, chunk=2048):
    src = np.asarray(src)
    for i0 in range(0, len(q), chunk):
        block = q[i0:i0 + chunk, None] - src[None, :]
        out[i0:i0 + chunk] = amp * np.tanh(block * inv_width).mean(axis=1)


def conv_tanh_window_1d(q, sorted_src, lo, hi, amp, inv_width, n_total, out):
    m = len(sorted_src)
    for i in range(len(q)):
        s = float(lo[i]) - float(m - hi[i])
        s += np.tanh((q[i] - sorted_src[lo[i]:hi[i]]) * inv_width).sum()
        out[i] = amp * s / n_total
