"""Closed-form and high-SNR performance metrics of CAPA fading channels.

All single-link (MISO/SIMO) results are functions of the gamma-series law of
||h||^2; the MIMO results depend on the separable variance grid through the
per-side factors rho_r^2 and rho_t^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DomainError, UnsupportedSpectrumError
from .mixture import GammaMixture, cdf, log_mean
from .specfun import digamma, log_gamma, log_mimo_outage_coefficient, scaled_expn_sequence
from .spectrum import ApertureConfig, Layout, MimoSpectrum, Side

LN2 = math.log(2.0)


@dataclass(frozen=True)
class SnrPoint:
    """Operating point: linear SNR, effective channel gain and target rate.

    ``mu_t`` is mu(A_t) mu(A_r) / D_t for MISO and MIMO links. For SIMO links
    pass mu(A_t) mu(A_r) (see :func:`simo_gain`).
    """

    gamma_bar: float
    mu_t: float
    target_rate: float = 5.0

    def __post_init__(self) -> None:
        for name in ("gamma_bar", "mu_t", "target_rate"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class DmtPoint:
    """``log_array_gain`` is the natural log, finite where ``array_gain`` over- or underflows."""

    multiplexing_gain: float
    diversity_gain: float
    array_gain: Union[float, Interval]
    log_array_gain: Union[float, Interval, None] = None

    @property
    def exact(self) -> bool:
        return not isinstance(self.array_gain, Interval)


@dataclass(frozen=True)
class MimoAdrAsymptote:
    """High-SNR ADR offset form: slope * log2(gamma) + offset.

    ``value`` is None when only the bracket [lower, upper] is known.
    """

    slope: int
    value: Optional[float]
    lower: float
    upper: float


@dataclass(frozen=True)
class SimoAsymptotics:
    op_asymptote: float
    adr_asymptote: float
    dmt_point: DmtPoint


def miso_gain(mu_tx: float, mu_rx: float, d_t: int) -> float:
    """Effective MISO gain mu(A_t) mu(A_r) / D_t (isotropic transmit beamforming)."""
    return mu_tx * mu_rx / d_t


def simo_gain(mu_tx: float, mu_rx: float) -> float:
    """Effective SIMO gain mu(A_t) mu(A_r); matched combining has no 1/D_t loss."""
    return mu_tx * mu_rx


def outage_threshold(pt: SnrPoint) -> float:
    """(2^R - 1) / (gamma mu_t), the ||h||^2 level below which the link is in outage."""
    return math.expm1(pt.target_rate * LN2) / (pt.gamma_bar * pt.mu_t)


# --- MISO / SIMO ----------------------------------------------------------------


def op_miso_closed(mixture: GammaMixture, pt: SnrPoint) -> float:
    return float(cdf(mixture, outage_threshold(pt)))


def log_op_miso_asymptotic(mixture: GammaMixture, pt: SnrPoint) -> float:
    d = mixture.dimension
    return d * math.log(outage_threshold(pt)) - log_gamma(d + 1.0) - mixture.variance_product_log


def op_miso_asymptotic(mixture: GammaMixture, pt: SnrPoint) -> float:
    """((2^R-1)/mu_t)^D / (D! prod sigma^2) * gamma^-D, evaluated in log space."""
    return math.exp(log_op_miso_asymptotic(mixture, pt))


def adr_miso_closed(mixture: GammaMixture, pt: SnrPoint) -> float:
    """Exact ADR E log2(1 + gamma mu_t ||h||^2).

    For Y ~ Gamma(n, 1), E ln(1 + cY) = sum_{k=1}^{n} e^{1/c} E_k(1/c). This
    is the alternating Ei/factorial series rearranged into positive terms, so
    it is summed without cancellation using the mixture's truncation Q.
    """
    c = pt.gamma_bar * pt.mu_t * mixture.sigma_min_sq
    d, q = mixture.dimension, mixture.truncation_Q
    en = scaled_expn_sequence(d + q, 1.0 / c)
    partial = np.cumsum(en)[d - 1 :]  # sum_{k<=D+q}, q = 0..Q
    p = mixture.probabilities
    tail = max(0.0, 1.0 - math.fsum(p)) * partial[-1]
    return (math.fsum(p * partial) + tail) / LN2


def power_offset_miso(mixture: GammaMixture, mu_t: float) -> float:
    """L_ms = -log2 mu_t - E log2 ||h||^2, the high-SNR offset in 3-dB units."""
    return -math.log2(mu_t) - log_mean(mixture) / LN2


def adr_miso_asymptotic(mixture: GammaMixture, pt: SnrPoint) -> float:
    return math.log2(pt.gamma_bar) - power_offset_miso(mixture, pt.mu_t)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _check_r(r: float, r_max: float) -> None:
    if not (0.0 < r < r_max):
        raise DomainError(f"multiplexing gain must lie in (0, {r_max}), got {r}")


def log_array_gain_miso(mixture: GammaMixture, r: float, mu_t: float) -> float:
    d = mixture.dimension
    return (d * math.log(mu_t) + log_gamma(d + 1.0) + mixture.variance_product_log) / (d * (1.0 - r))


def dmt_from_variances(variances: Sequence[float], r: float, mu_t: float) -> DmtPoint:
    """Single-link DMT point straight from the exponential means, no mixture needed."""
    _check_r(r, 1.0)
    v = np.asarray(variances, dtype=np.float64)
    if v.size == 0 or np.any(~(v > 0.0)):
        raise DomainError("variances must be a nonempty list of positive values")
    d = v.size
    la = (d * math.log(mu_t) + log_gamma(d + 1.0) + math.fsum(np.log(v))) / (d * (1.0 - r))
    return DmtPoint(r, d * (1.0 - r), _safe_exp(la), la)


def dmt_miso(mixture: GammaMixture, r: float, mu_t: float) -> DmtPoint:
    """d = D (1 - r), a = (mu_t^D D! prod sigma^2)^{1 / (D (1 - r))}.

    The array gain overflows to inf as r -> 1.
    """
    _check_r(r, 1.0)
    d = mixture.dimension
    la = log_array_gain_miso(mixture, r, mu_t)
    return DmtPoint(r, d * (1.0 - r), _safe_exp(la), la)


def simo_asymptotics(mixture: GammaMixture, pt: SnrPoint, r: float) -> SimoAsymptotics:
    """OP/ADR asymptotes and DMT point of a SIMO link; ``pt.mu_t`` is mu(A_t) mu(A_r)."""
    return SimoAsymptotics(
        op_asymptote=op_miso_asymptotic(mixture, pt),
        adr_asymptote=adr_miso_asymptotic(mixture, pt),
        dmt_point=dmt_miso(mixture, r, pt.mu_t),
    )


# --- MIMO -----------------------------------------------------------------------


def _side_factors(spec: MimoSpectrum) -> tuple[np.ndarray, np.ndarray]:
    if not spec.separable:
        raise UnsupportedSpectrumError("MIMO asymptotics need a separable variance grid")
    return np.asarray(spec.rx_factors), np.asarray(spec.tx_factors)


def _all_equal(v: np.ndarray, rtol: float = 1e-12) -> bool:
    # SVD-derived factors of half-wavelength arrays agree only to rounding
    return bool(np.all(np.abs(v / v[0] - 1.0) <= rtol))


def wishart_log_det_mean(n: int, m: int) -> float:
    """E log2 det(G G^H) for an n x m (n <= m) matrix of CN(0, 1) entries."""
    return sum(digamma(float(m - e)) for e in range(n)) / LN2


def mimo_adr_asymptotic(spec: MimoSpectrum, pt: SnrPoint) -> MimoAdrAsymptote:
    """High-SNR ADR of the CAPA MIMO channel as slope * log2(gamma) + offset.

    Square grids give the exact offset log2 det(mu_t R T) + eps_0. For a
    rectangular grid with n = min(D_t, D_r) and m = max, the small side's
    factors A enter through log2 det(mu_t A) and the large side's factors B
    through E log2 det(G B G^H), which is bracketed by
    n log2 min(B) + eps_2 and n log2 max(B) + eps_2 and is exact when B is a
    multiple of the identity.
    """
    rho_r, rho_t = _side_factors(spec)
    d_r, d_t = spec.shape
    n, m = min(d_r, d_t), max(d_r, d_t)
    base = n * math.log2(pt.gamma_bar) + n * math.log2(pt.mu_t)
    eps = wishart_log_det_mean(n, m)
    if d_r == d_t:
        v = base + float(np.sum(np.log2(rho_r)) + np.sum(np.log2(rho_t))) + eps
        return MimoAdrAsymptote(n, v, v, v)
    small, large = (rho_t, rho_r) if n == d_t else (rho_r, rho_t)
    head = base + float(np.sum(np.log2(small))) + eps
    lo = head + n * math.log2(float(large.min()))
    hi = head + n * math.log2(float(large.max()))
    exact = lo if _all_equal(large) else None
    return MimoAdrAsymptote(n, exact, lo, hi)


def log_mimo_op_asymptotic(spec: MimoSpectrum, pt: SnrPoint) -> float:
    rho_r, rho_t = _side_factors(spec)
    d_r, d_t = spec.shape
    n, m = min(d_r, d_t), max(d_r, d_t)
    return (
        log_mimo_outage_coefficient(n, m, pt.target_rate)
        - d_r * d_t * math.log(pt.mu_t * pt.gamma_bar)
        - d_r * float(np.sum(np.log(rho_t)))
        - d_t * float(np.sum(np.log(rho_r)))
    )


def mimo_op_asymptotic(spec: MimoSpectrum, pt: SnrPoint) -> float:
    """eps_{t,r} (mu_t gamma)^{-D_r D_t} / ((prod rho_t^2)^{D_r} (prod rho_r^2)^{D_t})."""
    return math.exp(log_mimo_op_asymptotic(spec, pt))


def dmt_segment(d_r: int, d_t: int, x: int) -> tuple[int, int]:
    """(G_d(x), G_r(x)): intercept and slope of the DMT segment on [x, x + 1]."""
    return d_r * d_t - x * (x + 1), d_r + d_t - (2 * x + 1)


def _segment_index(r: float) -> int:
    # left-continuous: an integer r belongs to the segment ending there
    k = math.floor(r)
    return k - 1 if k == r else k


def diversity_mimo(d_r: int, d_t: int, r: float) -> float:
    _check_r(r, float(min(d_r, d_t)))
    g_d, g_r = dmt_segment(d_r, d_t, _segment_index(r))
    return g_d - g_r * r


def _k_matrix_det(n: int, m: int, x: int) -> Fraction:
    """det [sum_i C(m-n, i) (-1)^i / (u + v + i)]_{u,v=1}^{n-x-1}, exact.

    The matrix is Hilbert-like and far too ill-conditioned for floating
    point elimination; the empty matrix (x >= n - 1) has det 1.
    """
    size = n - x - 1
    if size <= 0:
        return Fraction(1)
    a = [
        [sum(Fraction(math.comb(m - n, i) * (-1) ** i, u + v + i) for i in range(m - n + 1)) for v in range(1, size + 1)]
        for u in range(1, size + 1)
    ]
    det = Fraction(1)
    for col in range(size):
        piv = next((i for i in range(col, size) if a[i][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for i in range(col + 1, size):
            f = a[i][col] / a[col][col]
            if f:
                a[i] = [aij - f * acj for aij, acj in zip(a[i], a[col])]
    return det


def _log_fraction(q: Fraction) -> float:
    if q <= 0:
        raise DomainError("K-matrix determinant is not positive")
    return math.log(q.numerator) - math.log(q.denominator)


def log_array_gain_mimo(d_r: int, d_t: int, r: float, log_x: float) -> float:
    """ln f_r(x) for the MIMO DMT array gain, x = mu_t rho_r^2 rho_t^2."""
    n, m = min(d_r, d_t), max(d_r, d_t)
    k = _segment_index(r)
    g_d, g_r = dmt_segment(d_r, d_t, k)
    d = g_d - g_r * r
    log_kmn = -sum(math.lgamma(n - t + 1) + math.lgamma(m - t + 1) for t in range(1, n + 1))
    log_prod = sum(math.lgamma(t) + math.lgamma(t + 1) for t in range(1, k + 1))
    log_c = log_kmn + _log_fraction(_k_matrix_det(n, m, k)) + log_prod - math.log(g_r)
    return -(log_c - g_d * log_x) / d


def dmt_mimo(spec: MimoSpectrum, r: float, mu_t: float) -> DmtPoint:
    """Diversity and array gain of the CAPA MIMO channel at multiplexing gain r.

    The array gain is exact when each side's factors are equal and otherwise
    the interval [f_r(mu_t min rho^2 rho^2), f_r(mu_t max rho^2 rho^2)].
    """
    rho_r, rho_t = _side_factors(spec)
    d_r, d_t = spec.shape
    d = diversity_mimo(d_r, d_t, r)

    def log_f(x):
        return log_array_gain_mimo(d_r, d_t, r, math.log(mu_t) + math.log(x))

    lo = log_f(float(rho_r.min()) * float(rho_t.min()))
    if _all_equal(rho_r) and _all_equal(rho_t):
        return DmtPoint(r, d, _safe_exp(lo), lo)
    hi = log_f(float(rho_r.max()) * float(rho_t.max()))
    return DmtPoint(r, d, Interval(_safe_exp(lo), _safe_exp(hi)), Interval(lo, hi))


# --- SPDA comparison ------------------------------------------------------------


def default_element_area(wavelength: float) -> float:
    """Effective area lambda^2 / (4 pi) of an isotropic antenna."""
    return wavelength * wavelength / (4.0 * math.pi)


def element_area(config: ApertureConfig, side: Side) -> float:
    a = getattr(config, f"element_area_{Side(side).value}")
    return default_element_area(config.wavelength) if a is None else a


def element_spacing(config: ApertureConfig, side: Side) -> float:
    d = getattr(config, f"element_spacing_{Side(side).value}")
    return 0.5 * config.wavelength if d is None else d


def aperture_measure(config: ApertureConfig, side: Side, layout: Layout) -> float:
    """Area mu(A) of a CAPA: L_x L_z for planar, L_x times the element height for linear."""
    if Layout(layout) is Layout.PLANAR:
        return config.length(side, "x") * config.length(side, "z")
    return config.length(side, "x") * math.sqrt(element_area(config, side))


def element_count(config: ApertureConfig, side: Side, layout: Layout) -> int:
    """Number of discrete elements floor(L / d) per axis (squared for planar)."""
    d = element_spacing(config, side)
    mx = math.floor(config.length(side, "x") / d * (1.0 + 1e-12))
    if mx < 1:
        raise ConfigError(f"spacing {d} exceeds the {Side(side).value} aperture length")
    if Layout(layout) is Layout.PLANAR:
        return mx * math.floor(config.length(side, "z") / d * (1.0 + 1e-12))
    return mx


def occupation_ratio(config: ApertureConfig, side: Side, layout: Layout = Layout.LINEAR) -> float:
    """Fraction M A / mu(A) of the aperture covered by discrete elements."""
    return element_count(config, side, layout) * element_area(config, side) / aperture_measure(config, side, layout)


def array_gain_ratio_spda(config: ApertureConfig, kind: str, layout: Layout = Layout.LINEAR) -> float:
    """A_SPDA / A_CAPA = eta_t eta_r.

    The single-element end of a MISO (receiver) or SIMO (transmitter) link is
    compared against a CAPA of the same area, so its ratio is 1.
    """
    kind = kind.upper()
    if kind not in ("MISO", "SIMO", "MIMO"):
        raise ConfigError(f"unknown link kind {kind!r}")
    eta_t = occupation_ratio(config, Side.TX, layout) if kind in ("MISO", "MIMO") else 1.0
    eta_r = occupation_ratio(config, Side.RX, layout) if kind in ("SIMO", "MIMO") else 1.0
    return eta_t * eta_r
