"""Discrete-array (SPDA) baseline driven by the same angular coefficients as the CAPA.

An SPDA samples the aperture at element centers, so its channel is the
angular vector seen through a beamspace matrix whose columns are the
angular modes evaluated at the element positions. At half-wavelength
spacing this matrix is a scaled DFT and the SPDA keeps every mode; at wider
spacing modes alias onto each other and the channel loses rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError, UnsupportedSpectrumError
from .performance import element_area, element_spacing
from .spectrum import ApertureConfig, Layout, MimoSpectrum, Side, lattice_ellipse, linear_indices

KINDS = ("MISO", "SIMO", "MIMO")


@dataclass(frozen=True)
class BeamspaceMatrix:
    """Angular modes sampled at element centers (rows elements, columns modes)."""

    entries: np.ndarray
    side: Side
    spacing: float
    layout: Layout
    modes: tuple

    @property
    def n_elements(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_modes(self) -> int:
        return int(self.entries.shape[1])

    def gram_rank(self, rtol: float = 1e-9) -> int:
        s = np.linalg.svd(self.entries, compute_uv=False)
        return int(np.sum(s > rtol * s[0]))


def element_positions(length: float, spacing: float) -> np.ndarray:
    """Centers of floor(L/d) elements spaced by d, symmetric about the origin.

    For even counts this is d (m + 1/2) with m = -M/2, ..., M/2 - 1.
    """
    m = math.floor(length / spacing * (1.0 + 1e-12))
    if m < 1:
        raise ConfigError(f"spacing {spacing} leaves no element on an aperture of length {length}")
    return spacing * (np.arange(m) - 0.5 * (m - 1))


def build_beamspace(
    config: ApertureConfig,
    side: Side,
    layout: Layout = Layout.LINEAR,
    modes: Optional[Sequence] = None,
) -> BeamspaceMatrix:
    """Beamspace matrix with entries exp(+-j 2 pi (l_x x / L_x + l_z z / L_z)).

    The sign is + on the receive side and - on the transmit side. Planar
    elements are ordered z-major, matching the row-major mode order. ``modes``
    defaults to all 2N linear modes or the lattice-ellipse modes.
    """
    side, layout = Side(side), Layout(layout)
    d = element_spacing(config, side)
    sign = 1.0 if side is Side.RX else -1.0
    lx = config.length(side, "x")
    x = element_positions(lx, d)
    if layout is Layout.LINEAR:
        modes = tuple(int(m) for m in (linear_indices(config.n(side, "x")) if modes is None else modes))
        entries = np.exp(sign * 2j * math.pi * np.outer(x, np.asarray(modes, dtype=np.float64)) / lx)
    else:
        lz = config.length(side, "z")
        z = element_positions(lz, d)
        if modes is None:
            modes = lattice_ellipse(config.n(side, "x"), config.n(side, "z"))
        modes = tuple((int(a), int(b)) for a, b in modes)
        idx = np.asarray(modes, dtype=np.float64).reshape(-1, 2)
        zz, xx = np.meshgrid(z, x, indexing="ij")
        phase = np.outer(xx.ravel(), idx[:, 0]) / lx + np.outer(zz.ravel(), idx[:, 1]) / lz
        entries = np.exp(sign * 2j * math.pi * phase)
    entries.setflags(write=False)
    return BeamspaceMatrix(entries, side, d, layout, modes)


def spda_channel(kind: str, angular: np.ndarray, rx: Optional[BeamspaceMatrix] = None, tx: Optional[BeamspaceMatrix] = None) -> np.ndarray:
    """Spatial SPDA channel(s) from angular coefficients.

    SIMO: H_r h_a. MISO: H_t h_a. MIMO: H_r H_a H_t^T. A leading batch axis
    on ``angular`` is carried through.
    """
    kind = _kind(kind)
    a = np.asarray(angular)
    if kind == "SIMO":
        return _apply(rx, a, "rx")
    if kind == "MISO":
        return _apply(tx, a, "tx")
    if rx is None or tx is None:
        raise DomainError("MIMO channels need both beamspace matrices")
    if a.shape[-2:] != (rx.n_modes, tx.n_modes):
        raise DomainError(f"angular matrix shape {a.shape[-2:]} does not match ({rx.n_modes}, {tx.n_modes})")
    return rx.entries @ a @ tx.entries.T


def _apply(beam: Optional[BeamspaceMatrix], a: np.ndarray, name: str) -> np.ndarray:
    if beam is None:
        raise DomainError(f"missing {name} beamspace matrix")
    if a.shape[-1] != beam.n_modes:
        raise DomainError(f"angular vector has {a.shape[-1]} modes, beamspace has {beam.n_modes}")
    return a @ beam.entries.T


def _kind(kind: str) -> str:
    k = str(kind).upper()
    if k not in KINDS:
        raise DomainError(f"unsupported link kind {kind!r}")
    return k


def rate_gain(kind: str, config: ApertureConfig, layout: Layout = Layout.LINEAR) -> float:
    """Multiplier c in log2(1 + gamma c ||h_spatial||^2) (or log2 det(I + gamma c H H^H)).

    Each element contributes sqrt(A_t A_r); MISO and MIMO transmitters split
    the power equally over their M_t elements.
    """
    kind = _kind(kind)
    c = element_area(config, Side.TX) * element_area(config, Side.RX)
    if kind in ("MISO", "MIMO"):
        d = element_spacing(config, Side.TX)
        mx = len(element_positions(config.length(Side.TX, "x"), d))
        m_t = mx * len(element_positions(config.length(Side.TX, "z"), d)) if Layout(layout) is Layout.PLANAR else mx
        c /= m_t
    return c


def spda_rate(kind: str, channel: np.ndarray, config: ApertureConfig, gamma_bar: float, layout: Layout = Layout.LINEAR) -> np.ndarray:
    """Instantaneous SPDA rate in bits/s/Hz; batch axes in front are kept."""
    if gamma_bar < 0.0:
        raise DomainError("gamma_bar must be nonnegative")
    kind = _kind(kind)
    c = gamma_bar * rate_gain(kind, config, layout)
    h = np.asarray(channel)
    if kind in ("MISO", "SIMO"):
        return np.log2(1.0 + c * np.sum(np.abs(h) ** 2, axis=-1))
    small = h if h.shape[-2] <= h.shape[-1] else np.conj(np.swapaxes(h, -1, -2))
    gram = small @ np.conj(np.swapaxes(small, -1, -2))
    ev = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    return np.sum(np.log2(1.0 + c * ev), axis=-1)


def effective_variances(beam: BeamspaceMatrix, variances: np.ndarray, scale: float = 1.0, rtol: float = 1e-12) -> np.ndarray:
    """Variances of the independent components of ||H h_a||^2 (times ``scale``).

    ||H h_a||^2 with h_a ~ CN(0, diag(v)) is a sum of exponentials whose means
    are the nonzero eigenvalues of diag(sqrt v) H^H H diag(sqrt v). Their
    count is the rank of the spatial correlation matrix.
    """
    v = np.asarray(variances, dtype=np.float64)
    if v.size != beam.n_modes:
        raise DomainError("variance count does not match the beamspace modes")
    sq = np.sqrt(v)
    h = beam.entries * sq[None, :]
    ev = np.linalg.svd(h, compute_uv=False) ** 2
    ev = ev[ev > rtol * ev.max()]
    return np.sort(ev * scale)[::-1]


def correlation_rank(beam: BeamspaceMatrix, variances: np.ndarray, rtol: float = 1e-9) -> int:
    return int(effective_variances(beam, variances, rtol=rtol).size)


def mimo_effective_spectrum(rx: BeamspaceMatrix, tx: BeamspaceMatrix, spectrum: MimoSpectrum) -> MimoSpectrum:
    """Separable spectrum with the same rate law as H_r H_a H_t^T.

    With H_a = diag(sqrt rho_r) W diag(sqrt rho_t) and W i.i.d., the thin SVD
    of each side reduces the spatial channel to a k_r x k_t i.i.d. core
    scaled by the nonzero singular values squared of H diag(sqrt rho).
    """
    if not spectrum.separable:
        raise UnsupportedSpectrumError("effective SPDA spectra need a separable angular grid")
    return MimoSpectrum.from_factors(
        effective_variances(rx, spectrum.rx_factors), effective_variances(tx, spectrum.tx_factors)
    )
