"""Special functions used by the closed-form performance expressions.

Gamma, log-gamma, regularized and lower incomplete gamma, digamma, the
exponential integrals Ei (negative axis) and E_n, and the integer-parameter
Meijer-G coefficient that drives the MIMO outage asymptote.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, DomainError

EULER_GAMMA = 0.57721566490153286060651209
_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_MAX_ITER = 100_000

# Lanczos approximation, g = 7, nine coefficients
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EvalResult:
    """A computed value together with an absolute error estimate."""

    value: float
    abs_error_estimate: float

    def __post_init__(self) -> None:
        if not (self.abs_error_estimate >= 0.0):
            raise ValueError("abs_error_estimate must be nonnegative")


def _lanczos_sum(z):
    # z is the shifted argument (Gamma(z + 1) form)
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc = acc + _LANCZOS[i] / (z + i)
    return acc


def gamma_fn(z: float) -> float:
    """Gamma function for real z > 0.

    Raises:
        DomainError: if z <= 0.
        OverflowError: if Gamma(z) exceeds the double range (z > ~171.6).
    """
    z = float(z)
    if not z > 0.0 or math.isnan(z):
        raise DomainError(f"gamma_fn needs z > 0, got {z}")
    if z == math.floor(z) and z <= 171.0:
        return float(math.factorial(int(z) - 1))
    if z < 0.5:
        # Gamma(z) = Gamma(z + 1) / z keeps the Lanczos argument >= 0.5
        return gamma_fn(z + 1.0) / z
    x = z - 1.0
    t = x + _LANCZOS_G + 0.5
    try:
        half = t ** ((x + 0.5) / 2.0)
        val = math.sqrt(2.0 * math.pi) * half * math.exp(-t) * half * _lanczos_sum(x)
    except OverflowError:
        raise OverflowError(f"Gamma({z}) overflows") from None
    if math.isinf(val):
        raise OverflowError(f"Gamma({z}) overflows")
    return val


def log_gamma(z):
    """ln Gamma(z) for z > 0; accepts scalars or numpy arrays."""
    arr = np.asarray(z, dtype=np.float64)
    if np.any(~(arr > 0.0)):
        raise DomainError("log_gamma needs z > 0")
    small = arr < 0.5
    zz = np.where(small, arr + 1.0, arr)
    x = zz - 1.0
    t = x + _LANCZOS_G + 0.5
    out = _HALF_LOG_2PI + (x + 0.5) * np.log(t) - t + np.log(_lanczos_sum(x))
    out = np.where(small, out - np.log(arr), out)
    if np.ndim(z) == 0:
        return float(out)
    return out


def regularized_lower_gamma(s: float, x: float) -> float:
    """P(s, x) = Upsilon(s, x) / Gamma(s), computed without forming Gamma(s)."""
    s = float(s)
    x = float(x)
    if not s > 0.0:
        raise DomainError(f"need s > 0, got {s}")
    if not x >= 0.0:
        raise DomainError(f"need x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    log_front = s * math.log(x) - x - log_gamma(s)
    if x < s + 1.0:
        return min(1.0, _lower_series(s, x) * math.exp(log_front))
    return max(0.0, 1.0 - _upper_fraction(s, x) * math.exp(log_front))


def _lower_series(s: float, x: float) -> float:
    # sum_n x^n / (s (s+1) ... (s+n))
    term = 1.0 / s
    total = term
    a = s
    for _ in range(_MAX_ITER):
        a += 1.0
        term *= x / a
        total += term
        if term < total * _EPS * 0.5:
            return total
    raise ConvergenceError(f"incomplete gamma series did not converge (s={s}, x={x})")


def _upper_fraction(s: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Gamma(s, x)
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(f"incomplete gamma fraction did not converge (s={s}, x={x})")


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Upsilon(s, x) = integral_0^x t^(s-1) e^(-t) dt.

    Raises:
        DomainError: on s <= 0 or x < 0.
        OverflowError: if the value exceeds the double range.
    """
    p = regularized_lower_gamma(s, x)
    if p == 0.0:
        return 0.0
    log_val = math.log(p) + log_gamma(float(s))
    if log_val > 709.7:
        raise OverflowError(f"Upsilon({s}, {x}) overflows")
    return math.exp(log_val)


def digamma(x: float) -> float:
    """Digamma psi(x) = d/dx ln Gamma(x) for x > 0."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"digamma needs x > 0, got {x}")
    shift = 0.0
    while x < 10.0:
        shift -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # Bernoulli tail B_2k / (2k x^2k), k = 1..6
    tail = inv2 * (
        1.0 / 12.0
        - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0))))
    )
    return shift + math.log(x) - 0.5 * inv - tail


def _e1(t: float) -> float:
    # E_1(t) for t > 0
    if t <= 1.0:
        total = 0.0
        term = 1.0
        for k in range(1, 200):
            term *= -t / k
            total += term / k
            if abs(term / k) < _EPS * abs(total) * 0.1:
                break
        return -EULER_GAMMA - math.log(t) - total
    return _scaled_en_fraction(1, t) * math.exp(-t)


def _scaled_en_fraction(n: int, x: float) -> float:
    # e^x E_n(x) by continued fraction, x > 0 (fast for x >~ 1)
    b = x + n
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (n - 1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError(f"E_{n}({x}) continued fraction did not converge")


def exp_integral_ei(x: float) -> float:
    """Ei(x) for x < 0, i.e. -E_1(-x); strictly negative, tends to 0 as x -> -inf.

    Raises:
        DomainError: if x >= 0 (the principal-value branch is not supported).
    """
    x = float(x)
    if not x < 0.0:
        raise DomainError(f"exp_integral_ei is defined here only for x < 0, got {x}")
    return -_e1(-x)


def scaled_expn_sequence(kmax: int, x: float) -> np.ndarray:
    """Array of e^x E_k(x) for k = 1..kmax, x > 0.

    Uses forward recursion where it is stable (k >= x) and backward
    recursion below, seeded by one continued-fraction evaluation.
    """
    if kmax < 1:
        return np.zeros(0)
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"need x > 0, got {x}")
    out = np.empty(kmax)
    if x <= 1.0:
        out[0] = math.exp(x) * _e1(x)
        start = 0
    else:
        start = min(kmax, int(math.ceil(x))) - 1
        out[start] = _scaled_en_fraction(start + 1, x)
        for k in range(start, 0, -1):
            # S_k = (1 - k S_{k+1}) / x with S indexed from 1
            out[k - 1] = (1.0 - k * out[k]) / x
    for k in range(start + 1, kmax):
        # S_{k+1} = (1 - x S_k) / k
        out[k] = (1.0 - x * out[k - 1]) / k
    return out


# --- Meijer-G outage coefficient -------------------------------------------------


def _outage_poles(n: int, m: int) -> np.ndarray:
    # upper row (1, 1+m, ..., n+m) paired with lower row (0, 1, ..., n):
    # Gamma(s+1-a)/Gamma(s+1-b) with a - b = d is 1/((s-b)...(s-a+1))
    poles = [0.0]
    for k in range(1, n + 1):
        poles.extend(float(k + i) for i in range(m))
    return np.array(poles)


def _outage_contour(n: int, m: int, rate: float) -> tuple[float, float, float]:
    """Return (log_scale, integral, abs_error) with value = exp(log_scale) * integral / pi."""
    poles = _outage_poles(n, m)
    log_x = rate * math.log(2.0)
    top = poles.max()
    count = poles.size

    def slope(c):
        return log_x - np.sum(1.0 / (c - poles))

    # saddle of c*log_x - sum log(c - p) on (top, inf)
    lo = top + 1.0 / (log_x * (1.0 + count))
    hi = top + 2.0 * count / log_x
    c = optimize.brentq(slope, lo, hi, xtol=1e-14, rtol=1e-14)
    log_scale = c * log_x - float(np.sum(np.log(c - poles)))
    inv = 1.0 / (c - poles)

    def ratio(t):
        return np.exp(-np.sum(np.log1p(1j * t * inv)))

    def head_integrand(t):
        return (np.exp(1j * log_x * t) * ratio(t)).real

    def pieces(a, b):
        count_ = int(min(2000, max(4, math.ceil(2.0 * (b - a) / period))))
        edges = np.linspace(a, b, count_ + 1)
        total = 0.0
        error = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            v, e = integrate.quad(head_integrand, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
            total += v
            error += e
        return total, error

    def tail(a):
        opts = dict(limlst=200, limit=400, epsabs=1e-15)
        re, _ = integrate.quad(lambda t: ratio(t).real, a, np.inf, weight="cos", wvar=log_x, **opts)
        im, _ = integrate.quad(lambda t: ratio(t).imag, a, np.inf, weight="sin", wvar=log_x, **opts)
        return re - im

    # finite head by adaptive quadrature over half-periods, Fourier-type tail
    # by QAWF; the tail error is judged by moving the cut point
    period = 2.0 * math.pi / log_x
    cut = 1.0
    while abs(ratio(cut)) > 1e-9 and cut < 1e12:
        cut *= 2.0
    cut = min(cut, 200.0 * period)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, err = pieces(0.0, cut)
        tail_a = tail(cut)
        extra, err_extra = pieces(cut, 1.5 * cut)
        tail_b = tail(1.5 * cut)
    err += err_extra + abs(tail_a - (extra + tail_b))
    return log_scale, head + extra + tail_b, err


def meijer_outage_eval(
    n: int, m: int, rate: float, abs_tol: float = 1e-9, rel_tol: float = 1e-9
) -> EvalResult:
    """Meijer-G outage coefficient with its absolute error estimate.

    Evaluates G^{0,n+1}_{n+1,n+1}(2^R) with upper parameters (1, 1+m, ..., n+m)
    and lower parameters (0, 1, ..., n) by integrating the Mellin-Barnes
    representation along the vertical line through the real saddle point,
    which lies to the right of every pole.

    Raises:
        DomainError: for invalid n, m or rate.
        ConvergenceError: if the error estimate exceeds both ``abs_tol`` and
            ``rel_tol`` times the value.
    """
    n, m = _check_nm(n, m)
    rate = float(rate)
    if not rate > 0.0 or math.isinf(rate):
        raise DomainError(f"target rate must be positive and finite, got {rate}")
    log_scale, integral, err = _outage_contour(n, m, rate)
    scale = math.exp(log_scale) / math.pi
    value, abs_err = scale * integral, scale * err
    if not integral > 0.0 or abs_err > max(abs_tol, rel_tol * value):
        raise ConvergenceError(
            f"Mellin-Barnes integral for ({n}, {m}, {rate}) did not converge: {value} +- {abs_err}"
        )
    return EvalResult(value, abs_err)


def log_mimo_outage_coefficient(n: int, m: int, rate: float, rel_tol: float = 1e-9) -> float:
    """Natural log of the outage coefficient; safe when the value under/overflows.

    Only the relative error is checked, since the absolute scale is arbitrary.
    """
    n, m = _check_nm(n, m)
    rate = float(rate)
    if not rate > 0.0 or math.isinf(rate):
        raise DomainError(f"target rate must be positive and finite, got {rate}")
    log_scale, integral, err = _outage_contour(n, m, rate)
    if not integral > 0.0 or err > max(rel_tol * integral, 1e-300):
        raise ConvergenceError(f"Mellin-Barnes integral for ({n}, {m}, {rate}) did not converge")
    return log_scale + math.log(integral / math.pi)


def mimo_outage_coefficient(n: int, m: int, rate: float) -> float:
    """High-SNR MIMO outage coefficient for an n x m (n <= m) Rayleigh core.

    Equals 2^R - 1 for n = m = 1; vanishes as R -> 0 and grows with R.
    """
    return meijer_outage_eval(n, m, rate).value


def _check_nm(n: int, m: int) -> tuple[int, int]:
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise DomainError(f"n and m must be positive integers, got {n}, {m}")
    # the coefficient depends only on the smaller and larger dimension
    n, m = sorted((int(n), int(m)))
    return n, m
