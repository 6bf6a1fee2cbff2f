"""Pure numpy implementations of the hot kernels.

These mirror the compiled module ``_kernels`` function for function and are
used whenever the extension is not built.
"""

from __future__ import annotations

import math

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_SHIFT32 = np.uint64(32)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

# rescaling threshold for the weight recursion
_BIG = 1e200
_LOG_BIG = math.log(_BIG)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Philox4x32 block cipher on uint64 arrays holding 32-bit words."""
    c0 = np.asarray(c0, dtype=np.uint64) & _MASK32
    c1 = np.asarray(c1, dtype=np.uint64) & _MASK32
    c2 = np.asarray(c2, dtype=np.uint64) & _MASK32
    c3 = np.asarray(c3, dtype=np.uint64) & _MASK32
    k0 = np.uint64(int(k0) & 0xFFFFFFFF)
    k1 = np.uint64(int(k1) & 0xFFFFFFFF)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def complex_normals(seed, stream, trial_start, n_trials, dim):
    """Circular complex normals CN(0, 1) keyed by (seed, stream, trial, coordinate).

    Entry (t, j) depends only on ``seed``, ``stream``, the absolute trial
    index ``trial_start + t`` and ``j``, so any partition of the trials gives
    the same numbers.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    k0, k1 = seed & 0xFFFFFFFF, seed >> 32
    trials = np.arange(trial_start, trial_start + n_trials, dtype=np.uint64)
    coords = np.arange(dim, dtype=np.uint64)
    c0 = np.broadcast_to(coords[None, :], (n_trials, dim))
    c1 = np.full((n_trials, dim), int(stream) & 0xFFFFFFFF, dtype=np.uint64)
    c2 = np.broadcast_to((trials & _MASK32)[:, None], (n_trials, dim))
    c3 = np.broadcast_to((trials >> _SHIFT32)[:, None], (n_trials, dim))
    x0, x1, x2, x3 = philox4x32(c0, c1, c2, c3, k0, k1)
    a = (x1 << _SHIFT32) | x0
    b = (x3 << _SHIFT32) | x2
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (b >> np.uint64(11)).astype(np.float64) * _INV_2_53
    r = np.sqrt(-np.log(u1))
    theta = _TWO_PI * u2
    out = np.empty((n_trials, dim), dtype=np.complex128)
    out.real = r * np.cos(theta)
    out.imag = r * np.sin(theta)
    return out


def mixture_weights(ratios, log_prefactor, target_error, q_cap):
    """Scaled Moschopoulos weights with residual-mass stopping.

    Runs psi_q = (1/q) sum_k delta_k psi_{q-k}, delta_k = sum_j c_j^k, on a
    rescaled copy so that huge or tiny magnitudes stay representable.

    Args:
        ratios: c_j = 1 - sigma_min^2 / sigma_j^2, each in [0, 1).
        log_prefactor: log of prod_j sigma_min^2 / sigma_j^2.
        target_error: stop once the unassigned probability mass is below this.
        q_cap: largest admissible truncation index.

    Returns:
        (scaled, log_scale, residual, converged) where psi_q equals
        ``scaled[q] * exp(log_scale)`` and the mixture probability of term q is
        ``scaled[q] * exp(log_scale + log_prefactor)``.
    """
    c = np.asarray(ratios, dtype=np.float64)
    c = c[c > 0.0]
    size = 64
    w = np.zeros(size)
    delta = np.zeros(size)
    w[0] = 1.0
    log_scale = 0.0
    mass = math.exp(log_prefactor)
    comp = 0.0
    residual = 1.0 - mass
    if c.size == 0 or residual <= target_error:
        return w[:1].copy(), 0.0, max(residual, 0.0), True
    powers = np.ones_like(c)
    q = 0
    while q < q_cap:
        q += 1
        if q >= size:
            size *= 2
            w = np.resize(w, size)
            delta = np.resize(delta, size)
            w[q:] = 0.0
        powers *= c
        delta[q] = powers.sum()
        # delta[1..q] against w[q-1..0]
        val = float(np.dot(delta[1 : q + 1], w[q - 1 :: -1])) / q
        w[q] = val
        if val > _BIG:
            w[: q + 1] /= _BIG
            log_scale += _LOG_BIG
            val = w[q]
        term = val * math.exp(log_scale + log_prefactor)
        # compensated running sum of the assigned mass
        y = term - comp
        t = mass + y
        comp = (t - mass) - y
        mass = t
        residual = 1.0 - mass
        if residual <= target_error:
            return w[: q + 1].copy(), log_scale, max(residual, 0.0), True
    return w[: q + 1].copy(), log_scale, max(residual, 0.0), False
