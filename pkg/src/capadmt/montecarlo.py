"""Monte-Carlo estimates of outage probability and average rate.

Every complex normal is a pure function of (seed, stream, trial, coordinate)
through the Philox counter generator. Trials are processed in fixed-size
chunks whose partial sums are combined in chunk order, so results are
bit-identical for any number of worker threads.

Rare outage events use a scaled proposal h ~ CN(0, s Sigma) with s < 1; the
likelihood ratio of the true law to the proposal is
s^D exp(-(s - 1) ||z||^2), z being the standardized draw. When a discrete
array sees only k < D directions of z, only those are scaled and D, ||z||
become k and the norm of the projection.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, NumericalError
from .performance import SnrPoint
from .spectrum import AngularSpectrum, MimoSpectrum

# stream ids keep independent uses of one seed apart
STREAM_CHANNEL = 0
STREAM_PILOT = 1

_PILOT_TRIALS = 4000
_PILOT_MASS = 0.3


class LinkKind(str, enum.Enum):
    MISO = "MISO"
    SIMO = "SIMO"
    MIMO = "MIMO"


class Method(str, enum.Enum):
    PLAIN = "plain"
    IMPORTANCE = "importance"


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``importance_shift`` is the proposal variance scale s in (0, 1], or
    "auto" to pick s from a pilot run so the outage region carries about 30%
    of the proposal mass.
    """

    trials: int = 100_000
    seed: int = 0
    chunk_size: int = 16_384
    importance_shift: Union[float, str, None] = None
    workers: int = 1

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise ConfigError("chunk_size must be a positive integer")
        object.__setattr__(self, "chunk_size", min(int(self.chunk_size), int(self.trials)))
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        s = self.importance_shift
        if s is not None and s != "auto" and not (isinstance(s, (int, float)) and 0.0 < s <= 1.0):
            raise ConfigError("importance_shift must be in (0, 1], 'auto', or None")


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    std_error: float
    trials_used: int
    method: Method
    degenerate: bool = False
    shift: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    """A link to simulate.

    The rate is log2(1 + gamma_bar * gain * ||T h||^2) for single links and
    log2 det(I + gamma_bar * gain * H H^H) with H = T_r H_a T_t^T for MIMO,
    where the optional ``rx_beam``/``tx_beam`` matrices T map angular
    coefficients to discrete-array channels. For a CAPA the gain is mu_t
    (MISO, MIMO) or mu(A_t) mu(A_r) (SIMO).
    """

    kind: LinkKind
    spectrum: Union[AngularSpectrum, MimoSpectrum]
    gain: float
    gamma_bar: float = 1.0
    target_rate: float = 5.0
    rx_beam: Optional[np.ndarray] = field(default=None, repr=False)
    tx_beam: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        kind = LinkKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (kind is LinkKind.MIMO) != isinstance(self.spectrum, MimoSpectrum):
            raise ConfigError("MIMO scenarios need a MimoSpectrum and single links an AngularSpectrum")
        if not self.gain > 0.0:
            raise ConfigError("gain must be positive")
        if not self.gamma_bar >= 0.0:
            raise ConfigError("gamma_bar must be nonnegative")

    @property
    def dimension(self) -> int:
        if isinstance(self.spectrum, MimoSpectrum):
            return int(np.prod(self.spectrum.shape))
        return self.spectrum.dimension

    @property
    def std_devs(self) -> np.ndarray:
        if isinstance(self.spectrum, MimoSpectrum):
            return np.sqrt(self.spectrum.variance_grid).ravel()
        return np.sqrt(self.spectrum.variances)

    @property
    def beam(self) -> Optional[np.ndarray]:
        return self.tx_beam if self.kind is LinkKind.MISO else self.rx_beam

    def with_snr(self, gamma_bar: float) -> "Scenario":
        return Scenario(self.kind, self.spectrum, self.gain, gamma_bar, self.target_rate, self.rx_beam, self.tx_beam)

    def snr_point(self) -> SnrPoint:
        return SnrPoint(self.gamma_bar, self.gain, self.target_rate)


# --- sampling and rates -------------------------------------------------------------


def sample_channel(
    spectrum: Union[AngularSpectrum, MimoSpectrum],
    seed: int,
    trial_start: int = 0,
    n_trials: int = 1,
    stream: int = STREAM_CHANNEL,
) -> np.ndarray:
    """Independent CN(0, sigma^2) coefficients, shape (n, D) or (n, D_r, D_t)."""
    if isinstance(spectrum, MimoSpectrum):
        d_r, d_t = spectrum.shape
        z = kernels.complex_normals(seed, stream, trial_start, n_trials, d_r * d_t)
        return z.reshape(n_trials, d_r, d_t) * np.sqrt(spectrum.variance_grid)
    z = kernels.complex_normals(seed, stream, trial_start, n_trials, spectrum.dimension)
    return z * np.sqrt(spectrum.variances)


def rate_miso(h: np.ndarray, pt: SnrPoint) -> np.ndarray:
    """log2(1 + gamma mu_t ||h||^2) along the last axis."""
    return np.log2(1.0 + pt.gamma_bar * pt.mu_t * np.sum(np.abs(np.asarray(h)) ** 2, axis=-1))


def rate_simo(h: np.ndarray, pt: SnrPoint) -> np.ndarray:
    """log2(1 + gamma mu(A_t) mu(A_r) ||h||^2); ``pt.mu_t`` carries the SIMO gain."""
    return rate_miso(h, pt)


def _small_gram(h: np.ndarray) -> np.ndarray:
    if h.shape[-2] > h.shape[-1]:
        h = np.conj(np.swapaxes(h, -1, -2))
    return h @ np.conj(np.swapaxes(h, -1, -2))


def rate_mimo(h: np.ndarray, pt: SnrPoint) -> np.ndarray:
    """log2 det(I + gamma mu_t H H^H) via Cholesky of the smaller Gram matrix."""
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise NumericalError("non-finite channel matrix")
    gram = _small_gram(h)
    n = gram.shape[-1]
    try:
        chol = np.linalg.cholesky(np.eye(n) + pt.gamma_bar * pt.mu_t * gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("I + gamma H H^H is not positive definite") from exc
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log2(diag), axis=-1)


# --- chunked engine -----------------------------------------------------------------


def _statistic(scn: Scenario, h: np.ndarray) -> np.ndarray:
    """Per-trial sufficient statistic: ||T h||^2, or eigenvalues of the MIMO Gram."""
    if scn.kind is LinkKind.MIMO:
        if scn.rx_beam is not None:
            h = scn.rx_beam @ h
        if scn.tx_beam is not None:
            h = h @ scn.tx_beam.T
        return np.clip(np.linalg.eigvalsh(_small_gram(h)), 0.0, None)
    t = scn.beam
    if t is not None:
        h = h @ t.T
    return np.sum(np.abs(h) ** 2, axis=-1)


def _rates(scn: Scenario, stat: np.ndarray, gamma_bar: float) -> np.ndarray:
    c = gamma_bar * scn.gain
    if stat.ndim == 2:
        return np.sum(np.log2(1.0 + c * stat), axis=-1)
    return np.log2(1.0 + c * stat)


def _chunks(sim: SimConfig):
    return [(s, min(sim.chunk_size, sim.trials - s)) for s in range(0, sim.trials, sim.chunk_size)]


def _active_basis(scn: Scenario) -> Optional[np.ndarray]:
    """Orthonormal basis of the standardized directions a single-link beam sees.

    An aliasing array ignores part of the angular vector; shrinking those
    directions too only inflates the weights. None means every direction counts.
    """
    t = scn.beam
    if scn.kind is LinkKind.MIMO or t is None:
        return None
    b = t * scn.std_devs[None, :]
    ev, vec = np.linalg.eigh(b.conj().T @ b)
    keep = ev > 1e-12 * ev[-1]
    return None if keep.all() else vec[:, keep]


def _draw(scn: Scenario, sim: SimConfig, start: int, n: int, shift: Optional[float], basis: Optional[np.ndarray] = None):
    """Channel chunk and log likelihood ratios (None for plain sampling)."""
    d = scn.dimension
    z = kernels.complex_normals(sim.seed, STREAM_CHANNEL, start, n, d)
    sd = scn.std_devs
    if shift is None:
        h = z * sd
        log_w = None
    elif basis is None:
        h = z * (math.sqrt(shift) * sd)
        log_w = d * math.log(shift) - (shift - 1.0) * np.sum(np.abs(z) ** 2, axis=-1)
    else:
        c = z @ basis.conj()
        h = (z + (math.sqrt(shift) - 1.0) * (c @ basis.T)) * sd
        log_w = basis.shape[1] * math.log(shift) - (shift - 1.0) * np.sum(np.abs(c) ** 2, axis=-1)
    if scn.kind is LinkKind.MIMO:
        h = h.reshape((n,) + scn.spectrum.shape)
    return h, log_w


def _run(scn: Scenario, sim: SimConfig, gammas: Sequence[float], quantity: str, shift: Optional[float]):
    """Per-chunk (sum, sum of squares) for each SNR, reduced in chunk order."""
    with np.errstate(divide="ignore", over="ignore"):
        thresholds = np.expm1(scn.target_rate * math.log(2.0)) / (np.asarray(gammas) * scn.gain)

    basis = None if shift is None else _active_basis(scn)

    def work(chunk):
        start, n = chunk
        h, log_w = _draw(scn, sim, start, n, shift, basis)
        stat = _statistic(scn, h)
        w = None if log_w is None else np.exp(log_w)
        sums = np.empty((len(gammas), 2))
        for i, g in enumerate(gammas):
            if quantity == "op":
                if stat.ndim == 1:
                    x = (stat < thresholds[i]).astype(np.float64)
                else:
                    x = (_rates(scn, stat, g) < scn.target_rate).astype(np.float64)
            else:
                x = _rates(scn, stat, g)
            if w is not None:
                x = x * w
            sums[i] = (math.fsum(x), math.fsum(x * x))
        return sums

    chunks = _chunks(sim)
    if sim.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    stacked = np.stack(parts)  # (chunks, gammas, 2)
    out = []
    n = sim.trials
    for i in range(len(gammas)):
        s1 = math.fsum(stacked[:, i, 0])
        s2 = math.fsum(stacked[:, i, 1])
        mean = s1 / n
        var = max(0.0, (s2 - n * mean * mean) / (n - 1)) if n > 1 else 0.0
        out.append((mean, math.sqrt(var / n)))
    return out


def _pilot_shift(scn: Scenario, sim: SimConfig) -> float:
    """Variance scale s putting about 30% of the proposal mass in outage."""
    z = kernels.complex_normals(sim.seed, STREAM_PILOT, 0, _PILOT_TRIALS, scn.dimension)
    h = z * scn.std_devs
    if scn.kind is LinkKind.MIMO:
        h = h.reshape((_PILOT_TRIALS,) + scn.spectrum.shape)
    stat = _statistic(scn, h)
    if stat.ndim == 1:
        a = math.expm1(scn.target_rate * math.log(2.0)) / (scn.gamma_bar * scn.gain)
        # scaling h by sqrt(s) scales the statistic by s
        s_star = a / np.maximum(stat, 1e-300)
    else:
        # per-trial scale at which the rate hits the target, by bisection in log s
        lo = np.full(_PILOT_TRIALS, -700.0)
        hi = np.full(_PILOT_TRIALS, 700.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            r = np.sum(np.log2(1.0 + scn.gamma_bar * scn.gain * np.exp(mid)[:, None] * stat), axis=-1)
            below = r < scn.target_rate
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        s_star = np.exp(0.5 * (lo + hi))
    return float(min(1.0, np.quantile(s_star, _PILOT_MASS)))


def _resolve_shift(scn: Scenario, gammas: Sequence[float], sim: SimConfig) -> Optional[float]:
    s = sim.importance_shift
    if s is None:
        return None
    if s == "auto":
        if len(gammas) != 1:
            raise ConfigError("an automatic importance shift needs a single SNR point")
        s = _pilot_shift(scn.with_snr(gammas[0]), sim)
    s = float(s)
    return None if s >= 1.0 else s


def estimate_op_curve(scn: Scenario, gammas: Sequence[float], sim: SimConfig) -> list[EstimateResult]:
    """OP at each SNR from one set of draws (common random numbers)."""
    if scn.target_rate <= 0.0:
        return [EstimateResult(0.0, 0.0, sim.trials, Method.PLAIN) for _ in gammas]
    shift = _resolve_shift(scn, gammas, sim)
    method = Method.PLAIN if shift is None else Method.IMPORTANCE
    res = _run(scn, sim, [float(g) for g in gammas], "op", shift)
    return [EstimateResult(m, se, sim.trials, method, m == 0.0, shift) for m, se in res]


def estimate_op(scn: Scenario, sim: SimConfig) -> EstimateResult:
    """Fraction of trials with rate below the target, optionally importance sampled.

    ``degenerate`` is set when no outage event was observed.
    """
    return estimate_op_curve(scn, [scn.gamma_bar], sim)[0]


def estimate_adr_curve(scn: Scenario, gammas: Sequence[float], sim: SimConfig) -> list[EstimateResult]:
    res = _run(scn, sim, [float(g) for g in gammas], "adr", None)
    return [EstimateResult(m, se, sim.trials, Method.PLAIN) for m, se in res]


def estimate_adr(scn: Scenario, sim: SimConfig) -> EstimateResult:
    """Sample mean of the instantaneous rate with its standard error."""
    if sim.importance_shift is not None:
        raise DomainError("importance sampling is only used for outage estimates")
    return estimate_adr_curve(scn, [scn.gamma_bar], sim)[0]
