# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based normals and the mixture-weight recursion."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, exp, M_PI
from libc.stdint cimport uint32_t, uint64_t

cnp.import_array()

cdef uint32_t _M0 = 0xD2511F53u
cdef uint32_t _M1 = 0xCD9E8D57u
cdef uint32_t _W0 = 0x9E3779B9u
cdef uint32_t _W1 = 0xBB67AE85u
cdef double _INV_2_53 = 1.0 / 9007199254740992.0
cdef double _BIG = 1e200


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1, int rounds) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3]
    cdef int i
    for i in range(rounds):
        p0 = <uint64_t>_M0 * c0
        p1 = <uint64_t>_M1 * c2
        c0, c1, c2, c3 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0, <uint32_t>p1, \
                         (<uint32_t>(p0 >> 32)) ^ c3 ^ k1, <uint32_t>p0
        k0 = k0 + _W0
        k1 = k1 + _W1
    c[0] = c0
    c[1] = c1
    c[2] = c2
    c[3] = c3


def philox4x32(c0, c1, c2, c3, k0, k1, int rounds=10):
    """Scalar Philox4x32 block, for known-answer checks."""
    cdef uint32_t c[4]
    c[0] = <uint32_t>(int(c0) & 0xFFFFFFFF)
    c[1] = <uint32_t>(int(c1) & 0xFFFFFFFF)
    c[2] = <uint32_t>(int(c2) & 0xFFFFFFFF)
    c[3] = <uint32_t>(int(c3) & 0xFFFFFFFF)
    _philox(c, <uint32_t>(int(k0) & 0xFFFFFFFF), <uint32_t>(int(k1) & 0xFFFFFFFF), rounds)
    return c[0], c[1], c[2], c[3]


def complex_normals(seed, stream, long long trial_start, Py_ssize_t n_trials, Py_ssize_t dim):
    """Circular complex normals CN(0, 1) keyed by (seed, stream, trial, coordinate)."""
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint32_t k0 = <uint32_t>(s & 0xFFFFFFFFu)
    cdef uint32_t k1 = <uint32_t>(s >> 32)
    cdef uint32_t st = <uint32_t>(int(stream) & 0xFFFFFFFF)
    out = np.empty((n_trials, dim), dtype=np.complex128)
    cdef double[:, ::1] view = out.view(np.float64).reshape(n_trials, 2 * dim)
    cdef Py_ssize_t t, j
    cdef uint64_t trial, a, b
    cdef uint32_t c[4]
    cdef double u1, u2, r, th
    with nogil:
        for t in range(n_trials):
            trial = <uint64_t>(trial_start + t)
            for j in range(dim):
                c[0] = <uint32_t>j
                c[1] = st
                c[2] = <uint32_t>(trial & 0xFFFFFFFFu)
                c[3] = <uint32_t>(trial >> 32)
                _philox(c, k0, k1, 10)
                a = ((<uint64_t>c[1]) << 32) | c[0]
                b = ((<uint64_t>c[3]) << 32) | c[2]
                u1 = (<double>(a >> 11) + 1.0) * _INV_2_53
                u2 = <double>(b >> 11) * _INV_2_53
                r = sqrt(-log(u1))
                th = 2.0 * M_PI * u2
                view[t, 2 * j] = r * cos(th)
                view[t, 2 * j + 1] = r * sin(th)
    return out


def mixture_weights(ratios, double log_prefactor, double target_error, Py_ssize_t q_cap):
    """Scaled Moschopoulos weights; see the numpy twin for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c_all = np.asarray(ratios, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = c_all[c_all > 0.0].copy()
    cdef Py_ssize_t d = c.shape[0]
    cdef double mass = exp(log_prefactor)
    cdef double residual = 1.0 - mass
    if d == 0 or residual <= target_error:
        return np.ones(1), 0.0, max(residual, 0.0), True
    cdef Py_ssize_t size = 64
    w_arr = np.zeros(size)
    delta_arr = np.zeros(size)
    cdef double[::1] w = w_arr
    cdef double[::1] delta = delta_arr
    cdef double[::1] powers = np.ones(d)
    cdef double[::1] cv = c
    w[0] = 1.0
    cdef double log_scale = 0.0, comp = 0.0, acc, val, term, y, tt, dsum
    cdef Py_ssize_t q = 0, k, j
    cdef bint converged = False
    while q < q_cap:
        q += 1
        if q >= size:
            size *= 2
            w_arr = np.resize(w_arr, size)
            delta_arr = np.resize(delta_arr, size)
            w_arr[q:] = 0.0
            w = w_arr
            delta = delta_arr
        with nogil:
            dsum = 0.0
            for j in range(d):
                powers[j] *= cv[j]
                dsum += powers[j]
            delta[q] = dsum
            acc = 0.0
            for k in range(1, q + 1):
                acc += delta[k] * w[q - k]
            val = acc / q
            w[q] = val
            if val > _BIG:
                for k in range(q + 1):
                    w[k] /= _BIG
                log_scale += log(_BIG)
                val = w[q]
            term = val * exp(log_scale + log_prefactor)
            y = term - comp
            tt = mass + y
            comp = (tt - mass) - y
            mass = tt
            residual = 1.0 - mass
        if residual <= target_error:
            converged = True
            break
    return np.asarray(w_arr[: q + 1]).copy(), log_scale, max(residual, 0.0), converged
