"""End-to-end checks of the toolkit against independent references.

Each check returns a :class:`CheckResult` with the measured quantities and
the tolerances they were held to. ``run_all`` executes them in order and is
what the ``validate`` command reports.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from . import montecarlo as mc
from . import performance as perf
from . import scenarios as sc
from .mixture import build_mixture, cdf
from .montecarlo import Scenario, SimConfig
from .spda import build_beamspace, spda_channel, spda_rate
from .specfun import mimo_outage_coefficient
from .spectrum import (
    AngularSpectrum,
    ApertureConfig,
    Layout,
    MimoSpectrum,
    ScatteringSpectrum,
    Side,
    linear_variances,
    planar_variances,
)


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:2d} {self.name} ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Context:
    """Shared controls. ``trial_scale`` shrinks every trial budget (for smoke runs)."""

    seed: int = 0
    workers: int = 1
    trial_scale: float = 1.0
    figure_trials: int = 100_000

    def trials(self, n: int) -> int:
        return max(1000, int(round(n * self.trial_scale)))

    def sim(self, n: int, workers: Optional[int] = None, **kw) -> SimConfig:
        return SimConfig(self.trials(n), seed=self.seed, workers=self.workers if workers is None else workers, **kw)


def _vec(v) -> AngularSpectrum:
    v = np.asarray(v, dtype=np.float64)
    return AngularSpectrum(Side.TX, Layout.LINEAR, tuple(range(v.size)), v)


def _sf(x: float, digits: int = 6) -> float:
    return float(f"{x:.{digits}g}")


# --- 1: gamma-mixture CDF -----------------------------------------------------------


def convolution_cdf(variances, x_max: float, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """CDF of a sum of independent exponentials by trapezoidal convolution on a grid."""
    x = np.arange(0.0, x_max + 0.5 * dx, dx)
    dens = np.exp(-x / variances[0]) / variances[0]
    for v in variances[1:]:
        g = np.exp(-x / v) / v
        full = fftconvolve(dens, g)[: x.size]
        # trapezoid: drop half of the two endpoint products
        full -= 0.5 * (dens[0] * g + g[0] * dens)
        dens = dx * full
    c = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1])) * dx))
    return x, c


def ks_upper_bound(sorted_samples: np.ndarray, cdf_fn: Callable, stride: int) -> float:
    """Rigorous upper bound on sup |F_n - F| from F at every ``stride``-th order statistic.

    On [g_j, g_{j+1}) both CDFs are monotone, so the gap is at most
    max(F_n(g_{j+1}-) - F(g_j), F(g_{j+1}) - F_n(g_j)).
    """
    n = sorted_samples.size
    idx = np.arange(0, n, stride)
    g = sorted_samples[idx]
    f = np.concatenate(([0.0], cdf_fn(g), [1.0]))
    fn_at = np.concatenate(([0.0], (idx + 1) / n, [1.0]))
    fn_before = np.concatenate(([0.0], idx / n, [1.0]))
    return float(max(np.max(fn_before[1:] - f[:-1]), np.max(f[1:] - fn_at[:-1])))


def check_mixture_cdf(ctx: Context) -> CheckResult:
    n = ctx.trials(10**7)
    eps = math.sqrt(math.log(2.0 / 0.01) / (2.0 * n))
    measured, ok = {}, True
    for v in ([1.0, 0.5], [1.0, 0.5, 0.25]):
        mix = build_mixture(v)
        x, ref = convolution_cdf(v, 40.0, 1e-3)
        pick = np.arange(0, x.size, 50)
        sup = float(np.max(np.abs(cdf(mix, x[pick]) - ref[pick])))
        s = np.sort(np.sum(np.abs(mc.sample_channel(_vec(v), ctx.seed, 0, n)) ** 2, axis=1))
        ks = ks_upper_bound(s, lambda g: cdf(mix, g), max(1, n // 20000))
        measured[f"D{len(v)}_sup_vs_convolution"] = _sf(sup)
        measured[f"D{len(v)}_ks_bound"] = _sf(ks)
        ok &= sup <= 1e-5 and ks <= eps
    return CheckResult(1, "gamma-mixture CDF vs convolution oracle and DKW band", ok, measured,
                       {"sup_norm": 1e-5, "dkw_99": _sf(eps), "samples": n})


# --- 2, 3: MISO OP and ADR ----------------------------------------------------------


D_LIN = 20
IID20 = _vec(np.full(D_LIN, 1.0 / D_LIN))


def _gamma_for_op(mix, target: float, rate: float = 5.0) -> float:
    f = lambda lg: math.log(perf.op_miso_closed(mix, perf.SnrPoint(math.exp(lg), 1.0, rate))) - math.log(target)
    return math.exp(brentq(f, math.log(1e-3), math.log(1e12), xtol=1e-12))


def _miso_op_points(mix):
    return [_gamma_for_op(mix, p) for p in (1e-3, 5e-3, 2e-2, 0.1, 0.5)]


def _mc_miso_op(ctx: Context, workers=None):
    mix = build_mixture(IID20.variances)
    gs = _miso_op_points(mix)
    return gs, mc.estimate_op_curve(Scenario("MISO", IID20, 1.0), gs, ctx.sim(10**6, workers))


def check_miso_op(ctx: Context) -> CheckResult:
    mix = build_mixture(IID20.variances)
    gs, res = _mc_miso_op(ctx)
    z = []
    for g, r in zip(gs, res):
        p = perf.op_miso_closed(mix, perf.SnrPoint(g, 1.0))
        z.append(abs(r.mean - p) / math.sqrt(p * (1.0 - p) / r.trials_used))
    # log-log slopes over the last SNR decade, ending where the exact OP is 1e-100
    g_hi = _gamma_for_op(mix, 1e-100)
    lg = np.log10(np.geomspace(g_hi / 10.0, g_hi, 11))
    pts = [perf.SnrPoint(10**x, 1.0) for x in lg]
    slope_asym = float(np.polyfit(lg, [perf.log_op_miso_asymptotic(mix, p) / math.log(10) for p in pts], 1)[0])
    slope_exact = float(np.polyfit(lg, np.log10([perf.op_miso_closed(mix, p) for p in pts]), 1)[0])
    ok = max(z) <= 3.0 and abs(slope_asym + 20.0) <= 0.5 and abs(slope_exact + 20.0) <= 0.5
    return CheckResult(2, "MISO OP closed form vs Monte Carlo and diversity slope", ok,
                       {"max_binomial_z": _sf(max(z)), "asymptote_slope": _sf(slope_asym),
                        "exact_slope": _sf(slope_exact), "op_points": [_sf(r.mean) for r in res]},
                       {"z": 3.0, "slope": "-20 +- 0.5"})


_ADR_DB = (10.0, 20.0, 30.0)


def _mc_miso_adr(ctx: Context, workers=None):
    gs = [10 ** (x / 10) for x in _ADR_DB]
    return mc.estimate_adr_curve(Scenario("MISO", IID20, 1.0), gs, ctx.sim(10**6, workers))


def check_miso_adr(ctx: Context) -> CheckResult:
    mix = build_mixture(IID20.variances)
    res = _mc_miso_adr(ctx)
    errs = [abs(r.mean - perf.adr_miso_closed(mix, perf.SnrPoint(10 ** (x / 10), 1.0))) for x, r in zip(_ADR_DB, res)]
    g = 1e8
    offset = perf.adr_miso_closed(mix, perf.SnrPoint(g, 1.0)) - math.log2(g)
    gap = abs(offset + perf.power_offset_miso(mix, 1.0))
    ok = max(errs) <= 0.02 and gap <= 0.01
    return CheckResult(3, "MISO ADR closed form vs Monte Carlo and power offset", ok,
                       {"max_abs_error": _sf(max(errs)), "offset_gap_80dB": _sf(gap)},
                       {"adr": 0.02, "offset": 0.01})


# --- 4: SIMO/MISO gap ---------------------------------------------------------------


_GAP_POWER_DBM = 40.0


def _mc_gap(ctx: Context, workers=None):
    cfg = ApertureConfig()
    g = float(sc.db_to_linear(sc.snr_db_from_power(_GAP_POWER_DBM, sc.noise_power_dbm())))
    out = []
    for kind in ("MISO", "SIMO"):
        link = sc.build_link(cfg, kind, "capa")
        out.append(mc.estimate_adr(link.simulation.with_snr(g), ctx.sim(10**5, workers)))
    return out


def check_simo_miso_gap(ctx: Context) -> CheckResult:
    cfg = ApertureConfig()
    g = float(sc.db_to_linear(sc.snr_db_from_power(_GAP_POWER_DBM, sc.noise_power_dbm())))
    adr = {}
    for kind in ("MISO", "SIMO"):
        link = sc.build_link(cfg, kind, "capa")
        adr[kind] = perf.adr_miso_closed(build_mixture(link.effective_variances), perf.SnrPoint(g, link.gain))
    gap = adr["SIMO"] - adr["MISO"]
    miso, simo = _mc_gap(ctx)
    mc_gap = simo.mean - miso.mean
    want = math.log2(D_LIN)
    ok = abs(gap - want) <= 0.05 and abs(mc_gap - want) <= 0.05
    return CheckResult(4, "SIMO minus MISO ADR equals log2 D_t", ok,
                       {"closed_gap": _sf(gap), "montecarlo_gap": _sf(mc_gap), "log2_Dt": _sf(want)}, {"abs": 0.05})


# --- 5, 6: MIMO -------------------------------------------------------------------


IID44 = MimoSpectrum.iid(4, 4, 0.5, 0.5)
_MIMO_DB = (50.0, 60.0, 70.0)


def _mc_mimo_adr(ctx: Context, workers=None):
    gs = [10 ** (x / 10) for x in _MIMO_DB]
    return mc.estimate_adr_curve(Scenario("MIMO", IID44, 1.0), gs, ctx.sim(10**5, workers))


def check_mimo_adr(ctx: Context) -> CheckResult:
    res = _mc_mimo_adr(ctx)
    asym = perf.mimo_adr_asymptotic(IID44, perf.SnrPoint(1e6, 1.0)).value
    err = abs(res[1].mean - asym)
    x = np.array(_MIMO_DB) / (10 * math.log10(2.0))
    slope = float(np.polyfit(x, [r.mean for r in res], 1)[0])
    ok = err <= 0.1 and abs(slope - 4.0) <= 0.05
    return CheckResult(5, "MIMO 4x4 ADR asymptote and multiplexing slope", ok,
                       {"abs_error_60dB": _sf(err), "slope": _sf(slope)}, {"adr": 0.1, "slope": "4 +- 0.05"})


IID22 = MimoSpectrum.iid(2, 2, 1.0, 1.0)


def _mimo_op_gamma() -> float:
    f = lambda lg: perf.log_mimo_op_asymptotic(IID22, perf.SnrPoint(math.exp(lg), 1.0)) - math.log(1e-6)
    return math.exp(brentq(f, 0.0, 40.0, xtol=1e-12))


def _mc_mimo_op(ctx: Context, workers=None):
    g = _mimo_op_gamma()
    return mc.estimate_op(Scenario("MIMO", IID22, 1.0, g), ctx.sim(2 * 10**5, workers, importance_shift="auto"))


def check_mimo_op(ctx: Context) -> CheckResult:
    res = _mc_mimo_op(ctx)
    g = _mimo_op_gamma()
    asym = perf.mimo_op_asymptotic(IID22, perf.SnrPoint(g, 1.0))
    rel = abs(res.mean / asym - 1.0)
    anchor = abs(mimo_outage_coefficient(1, 1, 5.0) - 31.0)
    ok = rel <= 0.10 and anchor <= 1e-6
    return CheckResult(6, "MIMO 2x2 importance-sampled OP vs asymptote", ok,
                       {"relative_error": _sf(rel), "is_estimate": _sf(res.mean), "std_error": _sf(res.std_error),
                        "eps_1_1_anchor_error": _sf(anchor)},
                       {"relative": 0.10, "anchor": 1e-6})


# --- 7: DMT identities --------------------------------------------------------------


def check_dmt(ctx: Context) -> CheckResult:
    mix = build_mixture(IID20.variances)
    rs = np.linspace(0.0, 1.0, 102)[1:-1]
    e_miso = max(abs(perf.dmt_miso(mix, float(r), 1.0).diversity_gain - D_LIN * (1.0 - r)) for r in rs)
    e_int, e_cont = 0.0, 0.0
    for d_r, d_t in ((2, 2), (3, 5), (4, 4), (20, 20), (7, 3)):
        for k in range(1, min(d_r, d_t)):
            e_int = max(e_int, abs(perf.diversity_mimo(d_r, d_t, float(k)) - (d_t - k) * (d_r - k)))
            gl, sl = perf.dmt_segment(d_r, d_t, k - 1)
            gr, sr = perf.dmt_segment(d_r, d_t, k)
            e_cont = max(e_cont, abs((gl - sl * k) - (gr - sr * k)))
    ok = e_miso <= 1e-12 and e_int == 0.0 and e_cont <= 1e-12
    return CheckResult(7, "DMT identities", ok,
                       {"miso_grid_error": _sf(e_miso), "integer_point_error": e_int, "breakpoint_jump": e_cont},
                       {"abs": 1e-12})


# --- 8: SPDA ------------------------------------------------------------------------


def _spda_equivalence(ctx: Context) -> float:
    cfg = ApertureConfig()
    half = sc.spacing_config(cfg, "spda_half")
    rx, tx = build_beamspace(half, Side.RX), build_beamspace(half, Side.TX)
    g = 1e11
    worst = 0.0
    for kind in ("MISO", "SIMO", "MIMO"):
        capa = sc.build_link(cfg, kind, "capa")
        h = mc.sample_channel(capa.simulation.spectrum, ctx.seed, 0, 500)
        r_spda = spda_rate(kind, spda_channel(kind, h, rx=rx, tx=tx), half, g)
        # the SPDA is a CAPA with its gain scaled by the array-gain ratio
        eta = perf.array_gain_ratio_spda(cfg, kind)
        fn = {"MISO": mc.rate_miso, "SIMO": mc.rate_simo, "MIMO": mc.rate_mimo}[kind]
        r_capa = fn(h, perf.SnrPoint(g, capa.gain * eta))
        worst = max(worst, float(np.max(np.abs(r_spda - r_capa))))
    return worst


_SLOPE_OPS = (1e-10, 1e-12)


def _full_spacing_link():
    return sc.build_link(ApertureConfig(), "MISO", "spda_full")


def _slope_gammas(link) -> list[float]:
    mix = build_mixture(link.effective_variances)
    out = []
    for p in _SLOPE_OPS:
        f = lambda lg: math.log(perf.op_miso_closed(mix, perf.SnrPoint(math.exp(lg), link.gain))) - math.log(p)
        out.append(math.exp(brentq(f, math.log(1e8), math.log(1e20), xtol=1e-12)))
    return out


def _mc_spda_slope(ctx: Context, workers=None):
    link = _full_spacing_link()
    sim = ctx.sim(10**5, workers, importance_shift="auto")
    return [mc.estimate_op(link.simulation.with_snr(g), sim) for g in _slope_gammas(link)]


def check_spda(ctx: Context) -> CheckResult:
    eq = _spda_equivalence(ctx)
    link = _full_spacing_link()
    gs = _slope_gammas(link)
    res = _mc_spda_slope(ctx)
    slope = -math.log(res[1].mean / res[0].mean) / math.log(gs[1] / gs[0])
    n = ApertureConfig().n(Side.TX)
    etas = []
    for nn in (2, 5, 10, 16):
        for d in (0.5, 0.75, 1.0, 1.5):
            lam = 0.0107
            cfg = ApertureConfig(nn, nn, nn, nn, element_spacing_tx=d * lam, element_spacing_rx=d * lam)
            for layout in (Layout.LINEAR, Layout.PLANAR):
                etas += [perf.array_gain_ratio_spda(cfg, k, layout) for k in ("MISO", "SIMO", "MIMO")]
    ok = eq <= 1e-10 and abs(slope / n - 1.0) <= 0.10 and max(etas) <= 1.0
    return CheckResult(8, "SPDA equivalence, aliasing diversity and array-gain ratio", ok,
                       {"max_rate_gap": _sf(eq), "wavelength_op_slope": _sf(slope), "max_eta": _sf(max(etas))},
                       {"rate_gap": 1e-10, "slope": f"{n} +- 10%", "eta": 1.0})


# --- 9: normalization ---------------------------------------------------------------


def check_normalization(ctx: Context) -> CheckResult:
    cfg = ApertureConfig()
    iso = ScatteringSpectrum.isotropic()
    lin = math.fsum(linear_variances(cfg, iso, Side.TX).variances)
    pla = math.fsum(planar_variances(cfg, iso, Side.TX).variances)
    ok = abs(lin - 1.0) <= 1e-14 and abs(pla - 1.0) <= 1e-3
    return CheckResult(9, "angular variances sum to one", ok,
                       {"linear_sum_error": _sf(abs(lin - 1.0)), "planar_sum_error": _sf(abs(pla - 1.0))},
                       {"linear": 1e-14, "planar": 1e-3})


# --- 10: figure ordering --------------------------------------------------------------


def _figure_request(ctx: Context, figure: str, workers=None) -> sc.CurveRequest:
    sim = SimConfig(ctx.trials(ctx.figure_trials), seed=ctx.seed, workers=ctx.workers if workers is None else workers)
    return sc.CurveRequest(figure, sc.METHODS, sim)


def ordering_violations(curves) -> list[str]:
    """Grid points where CAPA <= lambda/2 <= lambda (OP) or CAPA >= SPDA (ADR) fails."""
    by = {(c.figure, c.link, c.layout, c.quantity, c.method, c.array): c for c in curves}
    bad = []
    for (fig, link, layout, q, method, array), c in by.items():
        if array != "capa" or q not in ("op", "adr") or method == "asymptotic":
            continue
        for other in ("spda_half", "spda_full", "spda_half_full"):
            o = by.get((fig, link, layout, q, method, other))
            if o is None:
                continue
            a, b = np.array(c.value), np.array(o.value)
            hit = a > b if q == "op" else a < b
            bad += [f"{fig}/{link}/{q}/{method}: capa vs {other} at {c.x[i]:.1f} dB" for i in np.flatnonzero(hit)]
        if q == "op":
            h, f = by.get((fig, link, layout, q, method, "spda_half")), by.get((fig, link, layout, q, method, "spda_full"))
            if h is not None and f is not None:
                hit = np.array(h.value) > np.array(f.value)
                bad += [f"{fig}/{link}/op/{method}: lambda/2 vs lambda at {c.x[i]:.1f} dB" for i in np.flatnonzero(hit)]
    return bad


def _mc_figure(ctx: Context, workers=None):
    req = _figure_request(ctx, "fig6", workers)
    req = dataclasses.replace(req, methods=("montecarlo",))
    return [c.value for c in sc.figure_curves("fig6", req)]


def check_figures(ctx: Context) -> CheckResult:
    t0 = time.perf_counter()
    curves = []
    for fig in sc.FIGURES:
        curves += sc.figure_curves(fig, _figure_request(ctx, fig))
    elapsed = time.perf_counter() - t0
    bad = ordering_violations(curves)
    ok = not bad and elapsed < 600.0
    return CheckResult(10, "figure ordering on paired seeds and pipeline time", ok,
                       {"violations": bad[:20], "n_violations": len(bad), "pipeline_seconds": round(elapsed, 1),
                        "curves": len(curves)},
                       {"violations": 0, "seconds": 600})


# --- 11: determinism ---------------------------------------------------------------


def _fingerprint(x):
    if isinstance(x, (list, tuple)):
        return tuple(_fingerprint(v) for v in x)
    if isinstance(x, mc.EstimateResult):
        return (x.mean, x.std_error, x.trials_used, x.shift)
    return x


MONTE_CARLO_CHECKS = {
    2: lambda ctx, w: _mc_miso_op(ctx, w)[1],
    3: _mc_miso_adr,
    4: _mc_gap,
    5: _mc_mimo_adr,
    6: _mc_mimo_op,
    8: _mc_spda_slope,
    10: _mc_figure,
}


def check_determinism(ctx: Context) -> CheckResult:
    mismatched = []
    for cid, fn in MONTE_CARLO_CHECKS.items():
        prints = [_fingerprint(fn(ctx, w)) for w in (1, 2, 8)]
        if not prints[0] == prints[1] == prints[2]:
            mismatched.append(cid)
    return CheckResult(11, "bit-identical Monte Carlo under 1, 2 and 8 workers", not mismatched,
                       {"checked": sorted(MONTE_CARLO_CHECKS), "mismatched": mismatched}, {"workers": [1, 2, 8]})


CHECKS: dict[int, Callable[[Context], CheckResult]] = {
    1: check_mixture_cdf,
    2: check_miso_op,
    3: check_miso_adr,
    4: check_simo_miso_gap,
    5: check_mimo_adr,
    6: check_mimo_op,
    7: check_dmt,
    8: check_spda,
    9: check_normalization,
    10: check_figures,
    11: check_determinism,
}


def run_check(cid: int, ctx: Context) -> CheckResult:
    t0 = time.perf_counter()
    res = CHECKS[cid](ctx)
    res.seconds = round(time.perf_counter() - t0, 2)
    return res


def run_all(ctx: Context, only=None, echo: Optional[Callable[[str], None]] = None) -> list[CheckResult]:
    out = []
    for cid in sorted(CHECKS):
        if only is not None and cid not in only:
            continue
        res = run_check(cid, ctx)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
