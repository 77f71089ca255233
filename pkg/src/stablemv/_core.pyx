# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a NumPy twin in ``_core_py`` with the same signature.
Integer outputs (keyed uniforms) agree bitwise with the twin; floating outputs
agree to a few ulps (libm vs NumPy transcendental functions).
"""

from libc.math cimport exp, fabs, copysign, log, sin, cos, sqrt, M_PI
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t G_PARTICLE = 0x9E3779B97F4A7C15ULL
cdef uint64_t G_STEP = 0xD1B54A32D192ED03ULL
cdef uint64_t G_DRAW = 0x8CB92BA72F3D8DD7ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t cell_base(uint64_t key, int64_t particle, int64_t step) noexcept nogil:
    return mix64(mix64(key + <uint64_t>particle * G_PARTICLE) + <uint64_t>step * G_STEP)


cdef inline double draw(uint64_t base, int j) noexcept nogil:
    cdef uint64_t z = mix64(base + <uint64_t>(j + 1) * G_DRAW)
    return (<double>(z >> 11) + 0.5) * TWO_M53


def keyed_uniforms(uint64_t key, const int64_t[::1] particles, int64_t step,
                   double[:, ::1] out):
    cdef Py_ssize_t n = particles.shape[0], ndraw = out.shape[1], i, j
    cdef uint64_t base
    with nogil:
        for i in range(n):
            base = cell_base(key, particles[i], step)
            for j in range(ndraw):
                out[i, j] = draw(base, <int>j)


def stable_increments(uint64_t key, const int64_t[::1] particles, int64_t step,
                      double alpha, double scale, double[:, ::1] out):
    """Isotropic alpha-stable increments as a Gaussian subordinated by a
    positive (alpha/2)-stable variable (Kanter's representation)."""
    cdef Py_ssize_t n = out.shape[0], dim = out.shape[1], i, c
    cdef double a = 0.5 * alpha
    cdef double u, e, log_a, amp, r, th
    cdef uint64_t base
    with nogil:
        for i in range(n):
            base = cell_base(key, particles[i], step)
            u = M_PI * draw(base, 0)
            e = -log(draw(base, 1))
            log_a = (log(sin(a * u)) - log(sin(u)) / a
                     + (1.0 - a) / a * (log(sin((1.0 - a) * u)) - log(e)))
            amp = scale * sqrt(2.0 * exp(log_a))
            c = 0
            while c < dim:
                r = sqrt(-2.0 * log(draw(base, <int>(2 + c))))
                th = 2.0 * M_PI * draw(base, <int>(3 + c))
                out[i, c] = amp * r * cos(th)
                if c + 1 < dim:
                    out[i, c + 1] = amp * r * sin(th)
                c += 2


cdef inline double tanh_fast(double v) noexcept nogil:
    cdef double e = exp(-2.0 * fabs(v))
    return copysign((1.0 - e) / (1.0 + e), v)


def conv_tanh_self_1d(const double[::1] x, double amp, double inv_width, double[::1] out):
    """out[i] = amp/N * sum_j tanh((x_i - x_j) * inv_width)."""
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double s, xi
    cdef double w = amp / n
    with nogil:
        for i in range(n):
            xi = x[i]
            s = 0.0
            for j in range(n):
                s = s + tanh_fast((xi - x[j]) * inv_width)
            out[i] = w * s


def conv_tanh_cross_1d(const double[::1] q, const double[::1] src, double amp,
                       double inv_width, double[::1] out):
    cdef Py_ssize_t n = q.shape[0], m = src.shape[0], i, j
    cdef double s, qi
    cdef double w = amp / m
    with nogil:
        for i in range(n):
            qi = q[i]
            s = 0.0
            for j in range(m):
                s = s + tanh_fast((qi - src[j]) * inv_width)
            out[i] = w * s


def conv_tanh_window_1d(const double[::1] q, const double[::1] sorted_src,
                        const int64_t[::1] lo, const int64_t[::1] hi,
                        double amp, double inv_width, double n_total, double[::1] out):
    """Windowed sum; atoms outside [lo, hi) are treated as saturated (+-1)."""
    cdef Py_ssize_t n = q.shape[0], m = sorted_src.shape[0], i, j
    cdef double s, qi
    with nogil:
        for i in range(n):
            qi = q[i]
            s = <double>lo[i] - <double>(m - hi[i])
            for j in range(lo[i], hi[i]):
                s = s + tanh_fast((qi - sorted_src[j]) * inv_width)
            out[i] = amp * s / n_total
