"""Figure scenarios: link builders, curve generation and CSV export.

A *link* pairs an angular spectrum with an array type. CAPA links use the
angular coefficients directly; SPDA links see them through beamspace
matrices, and for closed forms they are replaced by the equivalent law of
the spatial channel (the effective variances). Monte-Carlo curves of all
arrays of one link kind share the same seed, so they are evaluated on the
same fading draws.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import montecarlo as mc
from . import performance as perf
from .errors import ConfigError, ConvergenceError, DomainError
from .mixture import build_mixture
from .spda import build_beamspace, effective_variances, mimo_effective_spectrum, rate_gain
from .spectrum import (
    AngularSpectrum,
    ApertureConfig,
    Layout,
    MimoSpectrum,
    ScatteringSpectrum,
    Side,
    load_or_build_planar,
    mimo_variance_grid,
    side_variances,
)

NOISE_DENSITY_DBM_HZ = -174.0
BANDWIDTH_HZ = 1e6
METHODS = ("closed", "asymptotic", "montecarlo")
QUANTITIES = ("op", "adr")
LINKS = ("MISO", "SIMO", "MIMO")

# element spacing per array type, in wavelengths, as (rx, tx); None is the CAPA
ARRAYS = {
    "capa": None,
    "spda_half": (0.5, 0.5),
    "spda_full": (1.0, 1.0),
    "spda_half_full": (0.5, 1.0),
    "spda_full_half": (1.0, 0.5),
}

# |ln a| beyond this is not representable as a double
_CLIP_LOG = 709.0


def noise_power_dbm(density_dbm_hz: float = NOISE_DENSITY_DBM_HZ, bandwidth_hz: float = BANDWIDTH_HZ) -> float:
    return density_dbm_hz + 10.0 * math.log10(bandwidth_hz)


def db_to_linear(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=np.float64) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=np.float64))


def snr_db_from_power(power_dbm, noise_dbm: float):
    """gamma_bar in dB from the total transmit power mu(A_t) P_d in dBm."""
    return np.asarray(power_dbm, dtype=np.float64) - noise_dbm


def power_from_snr_db(snr_db, noise_dbm: float):
    return np.asarray(snr_db, dtype=np.float64) + noise_dbm


# --- links ----------------------------------------------------------------------


@dataclass(frozen=True)
class Link:
    """One (link kind, array type) pair ready for closed forms and simulation.

    ``effective`` is the spectrum whose CAPA formulas give this array's
    performance with gain ``simulation.gain``.
    """

    kind: str
    array: str
    layout: Layout
    simulation: mc.Scenario
    effective: AngularSpectrum | MimoSpectrum | np.ndarray

    @property
    def gain(self) -> float:
        return self.simulation.gain

    @property
    def effective_variances(self) -> np.ndarray:
        e = self.effective
        return e.variances if isinstance(e, AngularSpectrum) else np.asarray(e)

    def diversity_order(self) -> int:
        if isinstance(self.effective, MimoSpectrum):
            d_r, d_t = self.effective.shape
            return d_r * d_t
        return int(self.effective_variances.size)


def spacing_config(config: ApertureConfig, array: str) -> ApertureConfig:
    d_r, d_t = ARRAYS[array]
    lam = config.wavelength
    return dataclasses.replace(config, element_spacing_rx=d_r * lam, element_spacing_tx=d_t * lam)


def _side_spectrum(config, scattering, side, layout, cache_dir):
    if layout is Layout.PLANAR and cache_dir is not None:
        n_x, n_z = config.n(side, "x"), config.n(side, "z")
        path = os.path.join(cache_dir, f"planar_{scattering.kind.value}_{side.value}_{n_x}x{n_z}.json")
        return load_or_build_planar(path, config, scattering, side)
    return side_variances(config, scattering, side, layout)


def build_link(
    config: ApertureConfig,
    kind: str,
    array: str,
    layout: Layout = Layout.LINEAR,
    scattering: Optional[ScatteringSpectrum] = None,
    target_rate: float = 5.0,
    cache_dir: Optional[str] = None,
) -> Link:
    """Build the link model of one array type.

    CAPA gains: mu(A_t) A_r / D_t for MISO (single-antenna receiver of area
    A_r), A_t mu(A_r) for SIMO and mu(A_t) mu(A_r) / D_t for MIMO.
    """
    kind = str(kind).upper()
    if kind not in LINKS:
        raise ConfigError(f"unknown link kind {kind!r}; expected one of {LINKS}")
    if array not in ARRAYS:
        raise ConfigError(f"unknown array type {array!r}; expected one of {sorted(ARRAYS)}")
    layout = Layout(layout)
    if kind == "MIMO" and layout is Layout.PLANAR:
        raise ConfigError("MIMO scenarios are supported for linear apertures only")
    scattering = scattering or ScatteringSpectrum.isotropic()

    if kind == "MIMO":
        spec = mimo_variance_grid(config, scattering, layout)
        if array == "capa":
            gain = perf.miso_gain(
                perf.aperture_measure(config, Side.TX, layout),
                perf.aperture_measure(config, Side.RX, layout),
                spec.shape[1],
            )
            return Link(kind, array, layout, mc.Scenario(kind, spec, gain, target_rate=target_rate), spec)
        cfg = spacing_config(config, array)
        rx, tx = build_beamspace(cfg, Side.RX, layout), build_beamspace(cfg, Side.TX, layout)
        scn = mc.Scenario(kind, spec, rate_gain(kind, cfg, layout), target_rate=target_rate, rx_beam=rx.entries, tx_beam=tx.entries)
        return Link(kind, array, layout, scn, mimo_effective_spectrum(rx, tx, spec))

    side = Side.TX if kind == "MISO" else Side.RX
    spec = _side_spectrum(config, scattering, side, layout, cache_dir)
    if array == "capa":
        mu = perf.aperture_measure(config, side, layout)
        if kind == "MISO":
            gain = perf.miso_gain(mu, perf.element_area(config, Side.RX), spec.dimension)
        else:
            gain = perf.simo_gain(perf.element_area(config, Side.TX), mu)
        return Link(kind, array, layout, mc.Scenario(kind, spec, gain, target_rate=target_rate), spec)
    if ARRAYS[array][0] != ARRAYS[array][1]:
        raise ConfigError(f"array type {array!r} mixes spacings and applies to MIMO links only")
    cfg = spacing_config(config, array)
    beam = build_beamspace(cfg, side, layout, spec.indices)
    beams = {"tx_beam": beam.entries} if kind == "MISO" else {"rx_beam": beam.entries}
    scn = mc.Scenario(kind, spec, rate_gain(kind, cfg, layout), target_rate=target_rate, **beams)
    return Link(kind, array, layout, scn, effective_variances(beam, spec.variances))


# --- curves ---------------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """Tabulated series of one (quantity, method, array) triple."""

    figure: str
    link: str
    layout: str
    array: str
    quantity: str
    method: str
    axis: str
    x: tuple
    value: tuple
    std_error: Optional[tuple] = None
    clipped: Optional[tuple] = None
    noise_dbm: float = field(default_factory=noise_power_dbm)

    @property
    def filename(self) -> str:
        return f"{self.figure}_{self.link.lower()}_{self.layout}_{self.quantity}_{self.method}_{self.array}.csv"

    def header(self) -> list[str]:
        cols = ["snr_db", "power_dbm"] if self.axis == "snr_db" else ["r"]
        cols.append("value")
        if self.std_error is not None:
            cols.append("std_error")
        if self.clipped is not None:
            cols.append("clipped")
        return cols + ["method"]

    def rows(self):
        for i, x in enumerate(self.x):
            row = [_fmt(x)]
            if self.axis == "snr_db":
                row.append(_fmt(float(power_from_snr_db(x, self.noise_dbm))))
            row.append(_fmt(self.value[i]))
            if self.std_error is not None:
                row.append(_fmt(self.std_error[i]))
            if self.clipped is not None:
                row.append("1" if self.clipped[i] else "0")
            row.append(self.method)
            yield row


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curve(curve: Curve, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, curve.filename)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(curve.header())
        w.writerows(curve.rows())
    return path


def _mixture(link: Link):
    try:
        return build_mixture(link.effective_variances)
    except ConvergenceError as exc:
        raise ConfigError(f"closed form unavailable for {link.array} {link.kind}: {exc}") from exc


def closed_curve(link: Link, quantity: str, snr_db: Sequence[float]) -> Optional[np.ndarray]:
    """Exact OP or ADR; None where no closed form exists (MIMO)."""
    if link.kind == "MIMO":
        return None
    mix = _mixture(link)
    rate = link.simulation.target_rate
    fn = perf.op_miso_closed if quantity == "op" else perf.adr_miso_closed
    return np.array([fn(mix, perf.SnrPoint(float(g), link.gain, rate)) for g in db_to_linear(snr_db)])


def asymptotic_curve(link: Link, quantity: str, snr_db: Sequence[float]) -> dict[str, np.ndarray]:
    """High-SNR approximation keyed by quantity name.

    A rectangular MIMO ADR asymptote with unequal side factors has only a
    bracket, returned as ``adr_lower``/``adr_upper``.
    """
    gs = db_to_linear(snr_db)
    rate = link.simulation.target_rate
    pts = [perf.SnrPoint(float(g), link.gain, rate) for g in gs]
    if link.kind == "MIMO":
        spec = link.effective
        if quantity == "op":
            return {"op": np.array([perf.mimo_op_asymptotic(spec, p) for p in pts])}
        a = [perf.mimo_adr_asymptotic(spec, p) for p in pts]
        if all(x.value is not None for x in a):
            return {"adr": np.array([x.value for x in a])}
        return {"adr_lower": np.array([x.lower for x in a]), "adr_upper": np.array([x.upper for x in a])}
    mix = _mixture(link)
    fn = perf.op_miso_asymptotic if quantity == "op" else perf.adr_miso_asymptotic
    return {quantity: np.array([fn(mix, p) for p in pts])}


def montecarlo_curve(link: Link, quantity: str, snr_db: Sequence[float], sim: mc.SimConfig, importance: bool = False):
    """Simulated OP or ADR with standard errors.

    The plain estimator reuses one set of draws over the whole grid. With
    ``importance`` each OP point gets its own auto-tuned proposal.
    """
    gs = [float(g) for g in db_to_linear(snr_db)]
    if quantity == "adr":
        res = mc.estimate_adr_curve(link.simulation, gs, dataclasses.replace(sim, importance_shift=None))
    elif importance:
        auto = dataclasses.replace(sim, importance_shift="auto")
        res = [mc.estimate_op(link.simulation.with_snr(g), auto) for g in gs]
    else:
        res = mc.estimate_op_curve(link.simulation, gs, dataclasses.replace(sim, importance_shift=None))
    return np.array([r.mean for r in res]), np.array([r.std_error for r in res])


def r_grid(r_max: float, points: int) -> np.ndarray:
    """``points`` interior points of (0, r_max)."""
    if points < 1:
        raise ConfigError("the r grid needs at least one point")
    return np.linspace(0.0, r_max, points + 2)[1:-1]


def dmt_curves(link: Link, rs: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(d(r), array gain in dB, clipped flag) on the points of ``rs`` below r_max."""
    d_out, a_out, clip = [], [], []
    for r in rs:
        if isinstance(link.effective, MimoSpectrum):
            pt = perf.dmt_mimo(link.effective, float(r), link.gain)
            la = pt.log_array_gain
            if not isinstance(la, float):
                raise DomainError("array gain is only bracketed for unequal side factors")
        else:
            pt = perf.dmt_from_variances(link.effective_variances, float(r), link.gain)
            la = pt.log_array_gain
        d_out.append(pt.diversity_gain)
        a_out.append(10.0 * la / math.log(10.0))
        clip.append(abs(la) > _CLIP_LOG)
    return np.array(d_out), np.array(a_out), np.array(clip)


def max_multiplexing(link: Link) -> float:
    if isinstance(link.effective, MimoSpectrum):
        return float(min(link.effective.shape))
    return 1.0


# --- figure presets ------------------------------------------------------------


@dataclass(frozen=True)
class Panel:
    """Part of a figure: one link kind, its arrays and what to compute."""

    kind: str
    layout: Layout
    arrays: tuple
    quantities: tuple = ()
    power_grids_dbm: dict = field(default_factory=dict)
    dmt: bool = False
    upper_bound: bool = False


_ADR_GRID = tuple(range(-20, 41, 5))

FIGURES = {
    "fig6": (
        # OP grids stay where OP < ~0.3: above that the two SPDAs swap order
        Panel("MISO", Layout.LINEAR, ("capa", "spda_half", "spda_full"), ("op", "adr"),
              {"op": tuple(range(2, 13)), "adr": _ADR_GRID}),
        Panel("SIMO", Layout.LINEAR, ("capa", "spda_half", "spda_full"), ("op", "adr"),
              {"op": tuple(range(-12, -1)), "adr": _ADR_GRID}),
    ),
    "fig7": (
        Panel("MISO", Layout.LINEAR, ("capa", "spda_half", "spda_full"), dmt=True),
        Panel("SIMO", Layout.LINEAR, ("capa", "spda_half", "spda_full"), dmt=True),
    ),
    "fig8": (
        Panel("MISO", Layout.PLANAR, ("capa", "spda_half", "spda_full"), ("adr",), {"adr": _ADR_GRID}, True, True),
        Panel("SIMO", Layout.PLANAR, ("capa", "spda_half", "spda_full"), ("adr",), {"adr": _ADR_GRID}, True, True),
    ),
    "fig9": (
        Panel("MIMO", Layout.LINEAR, ("capa", "spda_half", "spda_half_full", "spda_full"), ("adr",),
              {"adr": tuple(range(-20, 41, 5))}, True),
    ),
}


@dataclass
class CurveRequest:
    """Everything :func:`generate` needs besides the links."""

    figure: str
    methods: tuple
    sim: mc.SimConfig
    noise_dbm: float = field(default_factory=noise_power_dbm)
    r_points: int = 99
    importance: bool = False


def quantity_curves(req: CurveRequest, links: Sequence[Link], quantity: str, snr_db: Sequence[float]) -> list[Curve]:
    x = tuple(float(s) for s in snr_db)
    out = []
    for link in links:
        base = dict(figure=req.figure, link=link.kind, layout=link.layout.value, array=link.array, axis="snr_db", x=x, noise_dbm=req.noise_dbm)
        if "closed" in req.methods:
            v = closed_curve(link, quantity, x)
            if v is not None:
                out.append(Curve(quantity=quantity, method="closed", value=tuple(v), **base))
        if "asymptotic" in req.methods:
            for name, v in asymptotic_curve(link, quantity, x).items():
                out.append(Curve(quantity=name, method="asymptotic", value=tuple(v), **base))
        if "montecarlo" in req.methods:
            v, se = montecarlo_curve(link, quantity, x, req.sim, req.importance and quantity == "op")
            out.append(Curve(quantity=quantity, method="montecarlo", value=tuple(v), std_error=tuple(se), **base))
    return out


def dmt_curve_set(req: CurveRequest, links: Sequence[Link], config: ApertureConfig, upper_bound: bool) -> list[Curve]:
    r_max = max(max_multiplexing(l) for l in links)
    rs = r_grid(r_max, req.r_points)
    out = []
    for link in links:
        sub = rs[rs < max_multiplexing(link)]
        d, a, clip = dmt_curves(link, sub)
        base = dict(figure=req.figure, link=link.kind, layout=link.layout.value, array=link.array, method="closed", axis="r", x=tuple(sub))
        out.append(Curve(quantity="diversity", value=tuple(d), **base))
        out.append(Curve(quantity="array_gain_db", value=tuple(a), clipped=tuple(bool(c) for c in clip), **base))
    if upper_bound and links and links[0].kind != "MIMO":
        # 4 N_x N_z (1 - r): every sample of a lambda/2 grid counted as a mode
        link = links[0]
        side = Side.TX if link.kind == "MISO" else Side.RX
        n = 4 * config.n(side, "x") * (config.n(side, "z") if link.layout is Layout.PLANAR else 1)
        out.append(
            Curve(req.figure, link.kind, link.layout.value, "upper_bound", "diversity", "closed", "r",
                  tuple(rs), tuple(n * (1.0 - rs)))
        )
    return out


def figure_curves(
    figure: str,
    req: CurveRequest,
    config: Optional[ApertureConfig] = None,
    target_rate: float = 5.0,
    cache_dir: Optional[str] = None,
) -> list[Curve]:
    """All curves of one figure preset in a fixed order."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {sorted(FIGURES)}")
    config = config or ApertureConfig()
    out: list[Curve] = []
    for panel in FIGURES[figure]:
        links = [build_link(config, panel.kind, a, panel.layout, target_rate=target_rate, cache_dir=cache_dir) for a in panel.arrays]
        for q in panel.quantities:
            grid = snr_db_from_power(panel.power_grids_dbm[q], req.noise_dbm)
            out.extend(quantity_curves(req, links, q, grid))
        if panel.dmt:
            out.extend(dmt_curve_set(req, links, config, panel.upper_bound))
    return out
