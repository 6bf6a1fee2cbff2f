"""Angular-domain second-order statistics of continuous-aperture channels.

All wavenumbers are normalized by k0 = 2*pi/lambda, so the propagating
region is the unit disk and an aperture of N wavelengths partitions each
axis into cells of width 1/N.  Side densities are one-sided: integrating a
side density over the disk gives the total channel power.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, QuadratureError, UnsupportedSpectrumError

log = logging.getLogger(__name__)

_QUAD_TOL = 1e-8
# distance / largest side length below which the far-field flag is raised
_FAR_FIELD_FACTOR = 10.0

Density = Callable[[float, float], float]


class Side(str, enum.Enum):
    TX = "tx"
    RX = "rx"


class Layout(str, enum.Enum):
    LINEAR = "linear"
    PLANAR = "planar"


class SpectrumKind(str, enum.Enum):
    ISOTROPIC = "isotropic"
    CUSTOM_SEPARABLE = "custom_separable"
    NON_SEPARABLE = "non_separable"


@dataclass(frozen=True)
class ApertureConfig:
    """Geometry of the transmit and receive apertures.

    Side lengths are integer multiples of the wavelength (``n_* = L / lambda``).
    The spacing and element-area fields only matter for discrete baselines.
    """

    n_tx_x: int = 10
    n_tx_z: int = 10
    n_rx_x: int = 10
    n_rx_z: int = 10
    wavelength: float = 0.0107
    distance_ry: float = 10.0
    element_spacing_tx: Optional[float] = None
    element_spacing_rx: Optional[float] = None
    element_area_tx: Optional[float] = None
    element_area_rx: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("n_tx_x", "n_tx_z", "n_rx_x", "n_rx_z"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        for name in ("wavelength", "distance_ry"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive, got {v}")
        for side in ("tx", "rx"):
            d = getattr(self, f"element_spacing_{side}")
            a = getattr(self, f"element_area_{side}")
            if d is not None and not d > 0.0:
                raise ConfigError(f"element_spacing_{side} must be positive")
            if a is not None and not a > 0.0:
                raise ConfigError(f"element_area_{side} must be positive")
            if d is not None and a is not None and d < math.sqrt(a) * (1.0 - 1e-12):
                raise ConfigError(f"element_spacing_{side} = {d} is smaller than sqrt(element_area_{side})")

    def n(self, side: Side, axis: str = "x") -> int:
        return getattr(self, f"n_{Side(side).value}_{axis}")

    def length(self, side: Side, axis: str = "x") -> float:
        """Physical side length L = N * lambda in meters."""
        return self.n(side, axis) * self.wavelength

    def spacing(self, side: Side) -> float:
        d = getattr(self, f"element_spacing_{Side(side).value}")
        if d is None:
            raise ConfigError(f"element spacing for {Side(side).value} is not set")
        return d

    def element_area(self, side: Side) -> float:
        a = getattr(self, f"element_area_{Side(side).value}")
        if a is None:
            raise ConfigError(f"element area for {Side(side).value} is not set")
        return a

    @property
    def far_field_violated(self) -> bool:
        """True when the link distance is not much larger than the apertures."""
        longest = self.wavelength * max(self.n_tx_x, self.n_tx_z, self.n_rx_x, self.n_rx_z)
        return self.distance_ry < _FAR_FIELD_FACTOR * longest

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "ApertureConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown aperture fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ScatteringSpectrum:
    """Angular power distribution of the scattering environment.

    For ``CUSTOM_SEPARABLE`` the callables take normalized wavenumbers
    ``(u_x, u_z)`` on the unit disk and return the one-sided side density;
    each is multiplied by ``normalization_constant``.  Both side densities
    must integrate to the same total power.
    """

    kind: SpectrumKind = SpectrumKind.ISOTROPIC
    tx_density: Optional[Density] = None
    rx_density: Optional[Density] = None
    normalization_constant: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SpectrumKind(self.kind))
        if not self.normalization_constant > 0.0:
            raise ConfigError("normalization_constant must be positive")
        if self.kind is SpectrumKind.CUSTOM_SEPARABLE and (self.tx_density is None or self.rx_density is None):
            raise ConfigError("custom separable spectra need both tx_density and rx_density")

    @classmethod
    def isotropic(cls, wavelength: Optional[float] = None) -> "ScatteringSpectrum":
        # A_s(k0) = 2 pi / k0 = lambda normalizes the channel power to 1
        return cls(SpectrumKind.ISOTROPIC, normalization_constant=wavelength or 1.0, name="isotropic")

    def density(self, side: Side) -> Density:
        """One-sided density on the normalized disk for ``side``."""
        if self.kind is SpectrumKind.ISOTROPIC:
            return _isotropic_density
        if self.kind is SpectrumKind.NON_SEPARABLE:
            raise UnsupportedSpectrumError("non-separable angular power distributions are not supported")
        raw = self.tx_density if Side(side) is Side.TX else self.rx_density
        c = self.normalization_constant
        return lambda ux, uz: c * raw(ux, uz)


def _isotropic_density(ux: float, uz: float) -> float:
    r2 = ux * ux + uz * uz
    if r2 >= 1.0:
        return 0.0
    return 1.0 / (2.0 * math.pi * math.sqrt(1.0 - r2))


@dataclass(frozen=True)
class AngularSpectrum:
    """Per-mode variances of the angular coefficients on one side."""

    side: Side
    layout: Layout
    indices: tuple
    variances: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "layout", Layout(self.layout))
        v = np.array(self.variances, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "variances", v)
        if len(self.indices) != v.size:
            raise ValueError("indices and variances differ in length")
        if v.size == 0 or np.any(~(v > 0.0)):
            raise ValueError("variances must be positive")

    @property
    def dimension(self) -> int:
        return int(self.variances.size)

    @property
    def total_power(self) -> float:
        return math.fsum(self.variances)

    def to_json(self) -> str:
        doc = {
            "side": self.side.value,
            "layout": self.layout.value,
            "indices": [list(i) if isinstance(i, tuple) else i for i in self.indices],
            "variances": [float(x) for x in self.variances],
            "meta": self.meta,
        }
        doc["checksum"] = _checksum(doc)
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AngularSpectrum":
        doc = json.loads(text)
        stored = doc.pop("checksum", None)
        if stored is not None and stored != _checksum(doc):
            raise ValueError("angular spectrum checksum mismatch")
        idx = tuple(tuple(i) if isinstance(i, list) else int(i) for i in doc["indices"])
        return cls(doc["side"], doc["layout"], idx, np.array(doc["variances"]), doc.get("meta", {}))


def _checksum(doc: dict) -> str:
    body = json.dumps({k: doc[k] for k in sorted(doc) if k != "checksum"}, sort_keys=True)
    return hashlib.sha256(body.encode()).hexdigest()


@dataclass(frozen=True)
class MimoSpectrum:
    """Variance grid of the MIMO angular coefficients (rows rx, columns tx)."""

    tx_spectrum: AngularSpectrum
    rx_spectrum: AngularSpectrum
    variance_grid: np.ndarray
    separable: bool
    rx_factors: Optional[np.ndarray] = None
    tx_factors: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        g = np.array(self.variance_grid, dtype=np.float64)
        g.setflags(write=False)
        object.__setattr__(self, "variance_grid", g)
        if g.shape != (self.rx_spectrum.dimension, self.tx_spectrum.dimension):
            raise ValueError("grid shape must be (D_r, D_t)")
        if self.separable:
            if self.rx_factors is None or self.tx_factors is None:
                raise ValueError("separable grids need per-side factors")
            r = np.array(self.rx_factors, dtype=np.float64)
            t = np.array(self.tx_factors, dtype=np.float64)
            if not np.allclose(np.outer(r, t), g, rtol=1e-12, atol=0.0):
                raise ValueError("grid is not the outer product of its factors")
            object.__setattr__(self, "rx_factors", r)
            object.__setattr__(self, "tx_factors", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.variance_grid.shape

    @classmethod
    def iid(cls, d_r: int, d_t: int, rho_r: float = 1.0, rho_t: float = 1.0) -> "MimoSpectrum":
        """Equal-variance grid with per-side factors ``rho_r`` and ``rho_t``."""
        tx = AngularSpectrum(Side.TX, Layout.LINEAR, tuple(range(d_t)), np.full(d_t, rho_t))
        rx = AngularSpectrum(Side.RX, Layout.LINEAR, tuple(range(d_r)), np.full(d_r, rho_r))
        return cls(tx, rx, np.full((d_r, d_t), rho_r * rho_t), True, np.full(d_r, rho_r), np.full(d_t, rho_t))

    @classmethod
    def from_factors(cls, rho_r: Sequence[float], rho_t: Sequence[float]) -> "MimoSpectrum":
        """Separable grid rho_r[i] * rho_t[j] on plain 0..D-1 indices."""
        r = np.asarray(rho_r, dtype=np.float64)
        t = np.asarray(rho_t, dtype=np.float64)
        tx = AngularSpectrum(Side.TX, Layout.LINEAR, tuple(range(t.size)), t)
        rx = AngularSpectrum(Side.RX, Layout.LINEAR, tuple(range(r.size)), r)
        return cls(tx, rx, np.outer(r, t), True, r, t)


# --- index sets -------------------------------------------------------------------


def lattice_ellipse(n_x: int, n_z: int) -> list[tuple[int, int]]:
    """Integer pairs with (l_x/n_x)^2 + (l_z/n_z)^2 <= 1, l_z outer and l_x inner, ascending."""
    if n_x < 1 or n_z < 1:
        raise ConfigError("lattice sizes must be positive")
    out = []
    for lz in range(-n_z, n_z + 1):
        for lx in range(-n_x, n_x + 1):
            # exact integer test avoids rounding on the rim
            if (lx * n_z) ** 2 + (lz * n_x) ** 2 <= (n_x * n_z) ** 2:
                out.append((lx, lz))
    return out


def linear_indices(n: int) -> list[int]:
    return list(range(-n, n))


# --- variance construction ----------------------------------------------------------


def _quad(f, a, b, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if points:
                val, err = integrate.quad(f, a, b, points=points, epsabs=1e-13, epsrel=1e-11, limit=400)
            else:
                val, err = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] failed: {exc}") from None
    if err > _QUAD_TOL:
        raise QuadratureError(f"quadrature on [{a}, {b}] reached only {err:.2e}")
    return val


def _column_integral(density: Density, ux: float, z0: float, z1: float) -> float:
    # integral of density(ux, .) over [z0, z1] clipped to the disk
    a = math.sqrt(max(0.0, 1.0 - ux * ux))
    lo, hi = max(z0, -a), min(z1, a)
    if hi <= lo:
        return 0.0
    return _quad(lambda uz: density(ux, uz), lo, hi)


def _rect_integral(density: Density, x0: float, x1: float, z0: float, z1: float) -> float:
    # breakpoints where the clipped z-range changes form
    pts = sorted(
        {math.copysign(math.sqrt(1.0 - z * z), s) for z in (z0, z1) if abs(z) < 1.0 for s in (-1.0, 1.0)}
        | {0.0}
    )
    pts = [p for p in pts if x0 < p < x1]
    lo, hi = max(x0, -1.0), min(x1, 1.0)
    if hi <= lo:
        return 0.0
    return _quad(lambda ux: _column_integral(density, ux, z0, z1), lo, hi, points=pts or None)


def _isotropic_rect(x0: float, x1: float, z0: float, z1: float) -> float:
    """Isotropic power in [x0, x1] x [z0, z1] intersected with the unit disk.

    The z-integral of 1 / sqrt(a^2 - z^2) is arcsin(z / a), so only a smooth
    one-dimensional integral in x remains.
    """

    def column(x):
        a2 = 1.0 - x * x
        if a2 <= 0.0:
            return 0.0
        a = math.sqrt(a2)
        lo, hi = max(z0, -a), min(z1, a)
        if hi <= lo:
            return 0.0
        return math.asin(min(1.0, hi / a)) - math.asin(max(-1.0, lo / a))

    lo, hi = max(x0, -1.0), min(x1, 1.0)
    if hi <= lo:
        return 0.0
    pts = sorted({s * math.sqrt(1.0 - z * z) for z in (z0, z1) if abs(z) < 1.0 for s in (-1.0, 1.0)})
    pts = [p for p in pts if lo < p < hi]
    return _quad(column, lo, hi, points=pts or None) / (2.0 * math.pi)


def linear_variances(config: ApertureConfig, spectrum: ScatteringSpectrum, side: Side) -> AngularSpectrum:
    """Variances of the 2N angular modes of a linear aperture along x.

    Mode l collects the power in normalized wavenumber cell [l/N, (l+1)/N]
    integrated over the full z-extent of the disk.  Under isotropic
    scattering every mode carries exactly 1/(2N).
    """
    side = Side(side)
    n = config.n(side, "x")
    idx = linear_indices(n)
    if spectrum.kind is SpectrumKind.ISOTROPIC:
        var = np.full(2 * n, 1.0 / (2 * n))
    else:
        dens = spectrum.density(side)
        var = np.array([_rect_integral(dens, l / n, (l + 1) / n, -1.0, 1.0) for l in idx])
        if np.any(var <= 0.0):
            raise QuadratureError("a linear angular cell carries no power; the density must be positive on every cell")
    return AngularSpectrum(side, Layout.LINEAR, tuple(idx), var, {"n_x": n, "spectrum": spectrum.kind.value})


def _near_corner(l: int) -> int:
    # the cell edge closest to the origin along one axis
    return l if l >= 0 else l + 1


def planar_variances(config: ApertureConfig, spectrum: ScatteringSpectrum, side: Side) -> AngularSpectrum:
    """Variances over the lattice-ellipse cells of a planar aperture.

    Every rectangular wavenumber cell that meets the disk is integrated
    exactly over its intersection with the disk.  Cells whose index lies
    outside the lattice ellipse are folded into the ellipse cell indexed by
    their corner nearest the origin, and ellipse cells that only touch the
    rim at a point are dropped, so the returned variances partition the
    full disk power.
    """
    side = Side(side)
    nx, nz = config.n(side, "x"), config.n(side, "z")
    order = lattice_ellipse(nx, nz)
    members = set(order)
    acc = {key: 0.0 for key in order}
    if spectrum.kind is SpectrumKind.ISOTROPIC:
        cell = _isotropic_rect
    else:
        dens = spectrum.density(side)

        def cell(x0, x1, z0, z1):
            return _rect_integral(dens, x0, x1, z0, z1)

    folded = 0
    for lz in range(-nz, nz):
        for lx in range(-nx, nx):
            cx, cz = _near_corner(lx), _near_corner(lz)
            if (cx * nz) ** 2 + (cz * nx) ** 2 >= (nx * nz) ** 2:
                continue  # cell meets the disk in at most one point
            v = cell(lx / nx, (lx + 1) / nx, lz / nz, (lz + 1) / nz)
            key = (lx, lz)
            if key not in members:
                key = (cx, cz)
                folded += 1
            acc[key] += v
    keep = [key for key in order if acc[key] > 0.0]
    var = np.array([acc[key] for key in keep])
    meta = {"n_x": nx, "n_z": nz, "spectrum": spectrum.kind.value, "folded_cells": folded}
    return AngularSpectrum(side, Layout.PLANAR, tuple(keep), var, meta)


def side_variances(
    config: ApertureConfig, spectrum: ScatteringSpectrum, side: Side, layout: Layout
) -> AngularSpectrum:
    if Layout(layout) is Layout.LINEAR:
        return linear_variances(config, spectrum, side)
    return planar_variances(config, spectrum, side)


def mimo_variance_grid(config: ApertureConfig, spectrum: ScatteringSpectrum, layout: Layout) -> MimoSpectrum:
    """Variance grid sigma^2_{i,j} of the MIMO angular coefficients.

    For a separable spectrum c * f_r(k) * f_t(kappa) the grid factorizes as
    sigma^2_{r,i} * sigma^2_{t,j} / P with P the total power, so the per-side
    factors are the one-sided variances scaled by 1/sqrt(P).
    """
    if spectrum.kind is SpectrumKind.NON_SEPARABLE:
        raise UnsupportedSpectrumError("non-separable angular power distributions are not supported")
    tx = side_variances(config, spectrum, Side.TX, layout)
    rx = side_variances(config, spectrum, Side.RX, layout)
    p_tx, p_rx = tx.total_power, rx.total_power
    if abs(p_tx - p_rx) > 1e-6 * max(p_tx, p_rx):
        raise ConfigError(f"tx and rx densities carry different total power ({p_tx} vs {p_rx})")
    if spectrum.kind is SpectrumKind.ISOTROPIC:
        # exact factorization for the unit-power isotropic case
        rho_r, rho_t = rx.variances.copy(), tx.variances.copy()
    else:
        s = math.sqrt(p_tx)
        rho_r, rho_t = rx.variances / s, tx.variances / s
    if spectrum.kind is SpectrumKind.ISOTROPIC and Layout(layout) is Layout.LINEAR:
        grid = np.full((rx.dimension, tx.dimension), 1.0 / (rx.dimension * tx.dimension))
    else:
        grid = np.outer(rho_r, rho_t)
    return MimoSpectrum(tx, rx, grid, True, rho_r, rho_t)


def load_or_build_planar(
    path: str | os.PathLike, config: ApertureConfig, spectrum: ScatteringSpectrum, side: Side
) -> AngularSpectrum:
    """Planar isotropic spectrum cached as JSON; rebuilt on a miss or a corrupt cache."""
    side = Side(side)
    want = {"n_x": config.n(side, "x"), "n_z": config.n(side, "z"), "spectrum": spectrum.kind.value}
    if os.path.exists(path):
        try:
            with open(path, encoding="utf-8") as fh:
                spec = AngularSpectrum.from_json(fh.read())
            if spec.side is side and all(spec.meta.get(k) == v for k, v in want.items()):
                return spec
            log.warning("spectrum cache %s does not match the requested aperture; rebuilding", path)
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("spectrum cache %s is unreadable (%s); rebuilding", path, exc)
    spec = planar_variances(config, spectrum, side)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(spec.to_json())
    return spec


def total_disk_power(density: Density) -> float:
    """Integral of a side density over the unit disk."""
    return _rect_integral(density, -1.0, 1.0, -1.0, 1.0)


def check_index_symmetry(indices: Sequence[tuple[int, int]]) -> bool:
    s = set(indices)
    return all((-a, -b) in s for a, b in s)
