"""Exact law of ||h||^2 for independent complex Gaussians with unequal variances.

The sum of D independent exponentials with means sigma_j^2 is written as a
single-scale gamma series (Moschopoulos): with sigma_min^2 the smallest
variance and c_j = 1 - sigma_min^2 / sigma_j^2,

    F(x) = sum_q p_q P(D + q, x / sigma_min^2),
    p_q  = prod_j (sigma_min^2 / sigma_j^2) * psi_q,
    psi_0 = 1,  psi_q = (1/q) sum_{k=1}^{q} (sum_j c_j^k) psi_{q-k}.

The p_q are the probabilities of a sum of geometric variables, so they add
up to one and the unassigned mass after Q terms is an exact bound on the
truncation error of the CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import kernels
from .errors import ConvergenceError, DomainError
from .specfun import digamma, log_gamma, regularized_lower_gamma

DEFAULT_TARGET_ERROR = 1e-10
DEFAULT_Q_CAP = 20_000
_COALESCE_RTOL = 1e-12


@dataclass(frozen=True)
class GammaMixture:
    """Single-scale gamma series for ||h||^2.

    Attributes:
        component_variances: the D variances sigma_j^2 (after coalescing).
        sigma_min_sq: smallest variance.
        probabilities: mixture probabilities p_q, q = 0..Q.
        log_prefactor: ln prod_j sigma_min^2 / sigma_j^2.
        truncation_Q: index of the last retained term.
        truncation_error_bound: probability mass beyond Q; bounds the CDF error.
        majorant_bound: looser bound from psi_q <= C(D+q-1, q) c_max^q.
    """

    component_variances: np.ndarray
    sigma_min_sq: float
    probabilities: np.ndarray
    log_prefactor: float
    truncation_Q: int
    truncation_error_bound: float
    majorant_bound: float
    _scaled_weights: np.ndarray
    _log_weight_scale: float

    @property
    def dimension(self) -> int:
        return int(self.component_variances.size)

    @property
    def weights(self) -> np.ndarray:
        """psi_q themselves; entries overflow to inf for very wide variance spreads."""
        with np.errstate(over="ignore", divide="ignore"):
            return np.exp(np.log(self._scaled_weights) + self._log_weight_scale)

    @property
    def variance_product_log(self) -> float:
        return float(np.sum(np.log(self.component_variances)))

    @property
    def mean(self) -> float:
        return float(np.sum(self.component_variances))


def _coalesce(variances: np.ndarray) -> np.ndarray:
    vmin = variances.min()
    out = variances.copy()
    out[np.abs(out / vmin - 1.0) <= _COALESCE_RTOL] = vmin
    return out


def build_mixture(
    variances: Sequence[float],
    target_error: float = DEFAULT_TARGET_ERROR,
    q_cap: int = DEFAULT_Q_CAP,
) -> GammaMixture:
    """Moschopoulos representation of the sum of exponentials with the given means.

    Raises:
        DomainError: on an empty list, nonpositive variances, or a bad target.
        ConvergenceError: if more than ``q_cap`` terms would be needed.
    """
    v = np.asarray(variances, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("need at least one variance")
    if np.any(~(v > 0.0)) or np.any(~np.isfinite(v)):
        raise DomainError("variances must be positive and finite")
    if not 0.0 < target_error < 1.0:
        raise DomainError("target_error must lie in (0, 1)")
    v = _coalesce(v)
    vmin = float(v.min())
    ratio = vmin / v
    c = 1.0 - ratio
    log_pref = float(np.sum(np.log(ratio)))
    scaled, log_scale, residual, converged = kernels.mixture_weights(c, log_pref, target_error, int(q_cap))
    if not converged:
        raise ConvergenceError(
            f"mixture needs more than {q_cap} terms (variance spread {v.max() / vmin:.3g}); raise q_cap"
        )
    scaled = np.asarray(scaled, dtype=np.float64)
    with np.errstate(divide="ignore"):
        probs = np.exp(np.log(scaled) + log_scale + log_pref)
    q = scaled.size - 1
    return GammaMixture(
        component_variances=v,
        sigma_min_sq=vmin,
        probabilities=probs,
        log_prefactor=log_pref,
        truncation_Q=q,
        truncation_error_bound=float(residual),
        majorant_bound=_majorant_tail(v.size, float(c.max()), log_pref, q),
        _scaled_weights=scaled,
        _log_weight_scale=float(log_scale),
    )


def _majorant_tail(d: int, c_max: float, log_pref: float, q: int) -> float:
    # pref * sum_{k>Q} C(D+k-1, k) c^k = pref (1-c)^-D * P(NegBin(D, 1-c) > Q)
    if c_max <= 0.0:
        return 0.0
    log_sf = stats.nbinom.logsf(q, d, 1.0 - c_max)
    return float(min(1.0, math.exp(min(0.0, log_pref - d * math.log1p(-c_max) + log_sf))))


def _gamma_term_probs(mix: GammaMixture, y: float) -> np.ndarray:
    """P(D + q, y) for q = 0..Q, by downward recursion from the top order."""
    d, q_top = mix.dimension, mix.truncation_Q
    top = regularized_lower_gamma(d + q_top, y)
    if q_top == 0:
        return np.array([top])
    s = np.arange(d, d + q_top, dtype=np.float64)
    # t_s = y^s e^-y / Gamma(s + 1) = P(s, y) - P(s + 1, y)
    log_t = s * math.log(y) - y - log_gamma(s + 1.0)
    t = np.exp(log_t)
    tail = np.cumsum(t[::-1])[::-1]
    return np.append(top + tail, top)


def cdf(mix: GammaMixture, x) -> float | np.ndarray:
    """P(||h||^2 <= x), clamped to [0, 1]; accepts scalars or arrays."""
    xs = np.asarray(x, dtype=np.float64)
    if np.any(~(xs >= 0.0)):
        raise DomainError("cdf needs x >= 0")
    out = np.empty(xs.shape)
    flat = out.reshape(-1)
    for i, xi in enumerate(xs.reshape(-1)):
        if xi == 0.0:
            flat[i] = 0.0
        elif math.isinf(xi):
            flat[i] = 1.0
        else:
            pq = _gamma_term_probs(mix, xi / mix.sigma_min_sq)
            flat[i] = min(1.0, max(0.0, math.fsum(mix.probabilities * pq)))
    return float(out) if xs.ndim == 0 else out


def pdf(mix: GammaMixture, x) -> float | np.ndarray:
    """Density of ||h||^2 at x > 0; accepts scalars or arrays."""
    xs = np.asarray(x, dtype=np.float64)
    if np.any(~(xs > 0.0)):
        raise DomainError("pdf needs x > 0")
    d = mix.dimension
    shape = np.arange(d, d + mix.truncation_Q + 1, dtype=np.float64)
    lg = log_gamma(shape)
    with np.errstate(divide="ignore"):
        log_p = np.log(mix.probabilities)
    out = np.empty(xs.shape)
    flat = out.reshape(-1)
    for i, xi in enumerate(xs.reshape(-1)):
        y = xi / mix.sigma_min_sq
        terms = np.exp(log_p + (shape - 1.0) * math.log(y) - y - lg)
        flat[i] = math.fsum(terms) / mix.sigma_min_sq
    return float(out) if xs.ndim == 0 else out


def log_mean(mix: GammaMixture) -> float:
    """E[ln ||h||^2] = sum_q p_q (psi(D + q) + ln sigma_min^2)."""
    d = mix.dimension
    q = mix.truncation_Q
    # psi(D + q) = psi(D) + sum_{i=D}^{D+q-1} 1/i
    dig = digamma(d) + np.concatenate(([0.0], np.cumsum(1.0 / np.arange(d, d + q, dtype=np.float64))))
    p = mix.probabilities
    # the unassigned mass sits beyond Q, where psi(D + q) >= psi(D + Q + 1)
    tail = max(0.0, 1.0 - math.fsum(p)) * (dig[-1] + 1.0 / (d + q))
    return math.fsum(p * dig) + tail + math.log(mix.sigma_min_sq)


def small_x_constant(mix: GammaMixture) -> float:
    """Limit of F(x) / x^D as x -> 0, i.e. 1 / (D! prod sigma_j^2)."""
    return math.exp(-log_gamma(mix.dimension + 1.0) - mix.variance_product_log)
