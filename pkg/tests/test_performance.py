import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capadmt.errors import ConfigError, DomainError, UnsupportedSpectrumError
from capadmt.mixture import build_mixture
from capadmt.performance import (
    Interval,
    SnrPoint,
    adr_miso_asymptotic,
    adr_miso_closed,
    aperture_measure,
    array_gain_ratio_spda,
    default_element_area,
    diversity_mimo,
    dmt_mimo,
    dmt_miso,
    dmt_segment,
    element_count,
    mimo_adr_asymptotic,
    mimo_op_asymptotic,
    miso_gain,
    op_miso_asymptotic,
    op_miso_closed,
    power_offset_miso,
    simo_asymptotics,
    simo_gain,
)
from capadmt.specfun import EULER_GAMMA
from capadmt.spectrum import ApertureConfig, Layout, MimoSpectrum, Side


def literal_adr_series(variances, gamma_bar, mu_t, dps=60):
    """The alternating Ei/factorial triple series for the MISO ADR, in mpmath."""
    mp.mp.dps = dps
    m = build_mixture(variances)
    c = mp.mpf(gamma_bar) * mu_t * m.sigma_min_sq
    d = m.dimension
    total = mp.mpf(0)
    for q, pq in enumerate(m.probabilities):
        n = d + q
        acc = mp.mpf(0)
        for v in range(n):
            e = n - 1 - v
            head = (-1) ** (n - v) * mp.e ** (1 / c) / c**e * mp.ei(-1 / c)
            body = mp.fsum(mp.factorial(u - 1) * (-1 / c) ** (e - u) for u in range(1, e + 1))
            acc += (head + body) / mp.factorial(e)
        total += pq * acc
    return float(total / mp.log(2))


def mc_log2det(d_r, d_t, grid, g, n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((n, d_r, d_t)) + 1j * rng.standard_normal((n, d_r, d_t))) * np.sqrt(grid / 2.0)
    if d_r > d_t:
        h = np.conj(np.transpose(h, (0, 2, 1)))
    gram = np.eye(h.shape[1]) + g * h @ np.conj(np.transpose(h, (0, 2, 1)))
    vals = np.log2(np.linalg.det(gram).real)
    return vals.mean(), vals.std() / math.sqrt(n)


# --- MISO OP --------------------------------------------------------------------


def test_snr_point_validation():
    with pytest.raises(DomainError):
        SnrPoint(0.0, 1.0)
    with pytest.raises(DomainError):
        SnrPoint(1.0, 1.0, -1.0)


@pytest.mark.parametrize("rate,g", [(1.0, 3.0), (5.0, 100.0), (0.2, 0.5)])
def test_op_single_mode_exponential(rate, g):
    m = build_mixture([1.0])
    ref = 1.0 - math.exp(-(2**rate - 1) / g)
    assert op_miso_closed(m, SnrPoint(g, 1.0, rate)) == pytest.approx(ref, rel=1e-13)


def test_op_vanishes_at_high_snr():
    m = build_mixture([0.25] * 4)
    ops = [op_miso_closed(m, SnrPoint(g, 1.0, 5.0)) for g in (1e2, 1e4, 1e6, 1e8)]
    assert all(b < a for a, b in zip(ops, ops[1:]))
    assert ops[-1] < 1e-20


def test_op_asymptote_single_mode():
    m = build_mixture([0.7])
    pt = SnrPoint(50.0, 2.0, 3.0)
    assert op_miso_asymptotic(m, pt) == pytest.approx(7.0 / (0.7 * 2.0 * 50.0), rel=1e-13)


@pytest.mark.parametrize("variances", [[0.25] * 4, [0.4, 0.3, 0.2, 0.1], [0.05] * 20])
def test_op_asymptote_ratio_tends_to_one(variances):
    m = build_mixture(variances)
    d = m.dimension
    # choose gamma so the closed-form OP is about 1e-8
    a = (1e-8 * math.factorial(d) * np.prod(variances)) ** (1.0 / d)
    pt = SnrPoint(31.0 / a, 1.0, 5.0)
    closed = op_miso_closed(m, pt)
    asym = op_miso_asymptotic(m, pt)
    assert asym / closed == pytest.approx(1.0, abs=d * a / max(variances))


def test_op_asymptote_slope():
    m = build_mixture([0.4, 0.3, 0.2, 0.1])
    lo = op_miso_asymptotic(m, SnrPoint(1e6, 1.0))
    hi = op_miso_asymptotic(m, SnrPoint(1e8, 1.0))
    assert (math.log10(hi) - math.log10(lo)) / 2.0 == pytest.approx(-4.0, abs=1e-6)


def test_op_asymptote_no_overflow_planar_size():
    m = build_mixture(np.full(300, 1.0 / 300))
    v = op_miso_asymptotic(m, SnrPoint(1e3, 1.0))
    assert v == 0.0 or math.isfinite(v)


# --- MISO ADR -------------------------------------------------------------------


@pytest.mark.parametrize("g", [0.05, 1.0, 30.0, 1e4])
def test_adr_single_mode_classical(g):
    ref = math.exp(1 / g) * float(-mp.ei(-1 / g)) / math.log(2)
    assert adr_miso_closed(build_mixture([1.0]), SnrPoint(g, 1.0)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("variances", [[0.25] * 4, [1.0, 0.5, 0.3], [0.9, 0.2]])
@pytest.mark.parametrize("g", [0.3, 10.0, 1000.0])
def test_adr_matches_literal_series(variances, g):
    m = build_mixture(variances)
    assert adr_miso_closed(m, SnrPoint(g, 1.0)) == pytest.approx(literal_adr_series(variances, g, 1.0), abs=5e-9)


def test_adr_increasing_in_snr():
    m = build_mixture([0.4, 0.3, 0.2, 0.1])
    vals = [adr_miso_closed(m, SnrPoint(g, 1.0)) for g in np.logspace(-2, 6, 30)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert adr_miso_closed(m, SnrPoint(10.0, 1.0)) < adr_miso_closed(m, SnrPoint(100.0, 1.0))


def test_adr_monte_carlo():
    rng = np.random.default_rng(3)
    n = 10**6
    s = rng.gamma(4.0, 0.25, size=n)
    g = 1e3
    rates = np.log2(1 + g * s)
    assert adr_miso_closed(build_mixture([0.25] * 4), SnrPoint(g, 1.0)) == pytest.approx(rates.mean(), abs=0.02)


def test_adr_asymptote_unit_slope():
    m = build_mixture([0.3, 0.2])
    pt1, pt2 = SnrPoint(1e5, 1.0), SnrPoint(2e5, 1.0)
    assert adr_miso_asymptotic(m, pt2) - adr_miso_asymptotic(m, pt1) == pytest.approx(1.0, abs=1e-12)


def test_power_offset_single_mode():
    assert power_offset_miso(build_mixture([1.0]), 1.0) == pytest.approx(EULER_GAMMA / math.log(2), abs=1e-14)


def test_adr_closed_meets_asymptote():
    m = build_mixture([0.4, 0.3, 0.2, 0.1])
    pt = SnrPoint(1e8, 1.0)
    assert adr_miso_closed(m, pt) - adr_miso_asymptotic(m, pt) == pytest.approx(0.0, abs=1e-6)


# --- MISO / SIMO DMT -----------------------------------------------------------


def test_dmt_miso_formula():
    m = build_mixture([0.05] * 20)
    p = dmt_miso(m, 0.5, 1.0)
    assert p.diversity_gain == 10.0
    assert p.array_gain == pytest.approx((math.factorial(20) * 0.05**20) ** (1 / 10), rel=1e-12)


def test_dmt_miso_limits():
    m = build_mixture([0.3, 0.2, 0.1])
    assert dmt_miso(m, 1e-9, 1.0).diversity_gain == pytest.approx(3.0)
    near_one = dmt_miso(m, 1.0 - 1e-9, 10.0)
    assert near_one.diversity_gain < 1e-8
    assert near_one.array_gain == math.inf or near_one.array_gain > 1e100
    for r in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            dmt_miso(m, r, 1.0)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(min_value=0.1, max_value=10.0), r=st.floats(min_value=0.05, max_value=0.9))
def test_dmt_miso_scaling_law(c, r):
    v = np.array([0.4, 0.25, 0.1])
    a1 = dmt_miso(build_mixture(v), r, 1.0).array_gain
    a2 = dmt_miso(build_mixture(c * v), r, 1.0).array_gain
    assert a2 / a1 == pytest.approx(c ** (1.0 / (1.0 - r)), rel=1e-10)


def test_simo_vs_miso_substitution():
    m = build_mixture([0.05] * 20)
    mu_tx, mu_rx, d_t = 3e-4, 9e-6, 20
    g = 1e12
    miso = SnrPoint(g, miso_gain(mu_tx, mu_rx, d_t))
    simo = SnrPoint(g, simo_gain(mu_tx, mu_rx))
    out = simo_asymptotics(m, simo, 0.5)
    assert out.op_asymptote == pytest.approx(op_miso_asymptotic(m, SnrPoint(g, d_t * miso.mu_t)), rel=1e-12)
    assert out.adr_asymptote - adr_miso_asymptotic(m, miso) == pytest.approx(math.log2(20), abs=1e-12)
    assert dmt_miso(m, 1e-9, 1.0).diversity_gain == pytest.approx(20.0)


# --- MIMO ADR / OP ---------------------------------------------------------------


def test_mimo_adr_one_by_one():
    s = MimoSpectrum.iid(1, 1, 0.5, 0.4)
    out = mimo_adr_asymptotic(s, SnrPoint(1e6, 2.0))
    ref = math.log2(1e6) + math.log2(2.0 * 0.2) - EULER_GAMMA / math.log(2)
    assert out.value == pytest.approx(ref, abs=1e-12)


def test_mimo_adr_square_monte_carlo():
    s = MimoSpectrum.iid(4, 4, 0.5, 0.5)
    g = 1e6
    mean, se = mc_log2det(4, 4, 0.25, g, n=50_000)
    out = mimo_adr_asymptotic(s, SnrPoint(g, 1.0))
    assert out.slope == 4
    assert out.value == pytest.approx(mean, abs=0.1)


@pytest.mark.parametrize("d_r,d_t", [(2, 4), (4, 2)])
def test_mimo_adr_rectangular_exact_iid(d_r, d_t):
    s = MimoSpectrum.iid(d_r, d_t, 0.3, 0.2)
    g = 1e7
    mean, se = mc_log2det(d_r, d_t, 0.06, g, n=100_000, seed=d_r)
    out = mimo_adr_asymptotic(s, SnrPoint(g, 1.0))
    assert out.value is not None
    assert out.value == pytest.approx(mean, abs=max(4 * se, 0.01))


def test_mimo_adr_rectangular_bracket():
    rho_r = np.array([0.5, 0.3, 0.15, 0.05])
    rho_t = np.array([0.6, 0.4])
    base = MimoSpectrum.iid(4, 2)
    s = MimoSpectrum(base.tx_spectrum, base.rx_spectrum, np.outer(rho_r, rho_t), True, rho_r, rho_t)
    g = 1e7
    out = mimo_adr_asymptotic(s, SnrPoint(g, 1.0))
    assert out.value is None and out.lower < out.upper
    rng = np.random.default_rng(9)
    n = 100_000
    h = (rng.standard_normal((n, 4, 2)) + 1j * rng.standard_normal((n, 4, 2))) * np.sqrt(np.outer(rho_r, rho_t) / 2)
    gram = np.eye(2) + g * np.conj(np.transpose(h, (0, 2, 1))) @ h
    mc = np.log2(np.linalg.det(gram).real).mean()
    assert out.lower <= mc <= out.upper


def test_mimo_adr_slope_is_min_dimension():
    s = MimoSpectrum.iid(3, 5, 0.3, 0.2)
    a = mimo_adr_asymptotic(s, SnrPoint(1e6, 1.0)).value
    b = mimo_adr_asymptotic(s, SnrPoint(2e6, 1.0)).value
    assert b - a == pytest.approx(3.0, abs=1e-12)


def test_mimo_op_one_by_one_matches_miso():
    s = MimoSpectrum.iid(1, 1, 0.5, 0.4)
    pt = SnrPoint(1e4, 2.0, 3.0)
    assert mimo_op_asymptotic(s, pt) == pytest.approx(op_miso_asymptotic(build_mixture([0.2]), pt), rel=1e-9)


def test_mimo_op_slope():
    s = MimoSpectrum.iid(2, 3, 0.5, 0.5)
    lo = mimo_op_asymptotic(s, SnrPoint(1e6, 1.0, 2.0))
    hi = mimo_op_asymptotic(s, SnrPoint(1e7, 1.0, 2.0))
    assert math.log10(hi) - math.log10(lo) == pytest.approx(-6.0, abs=1e-9)


def test_non_separable_rejected():
    base = MimoSpectrum.iid(2, 2)
    s = MimoSpectrum(base.tx_spectrum, base.rx_spectrum, np.array([[1.0, 0.5], [0.25, 1.0]]), False)
    with pytest.raises(UnsupportedSpectrumError):
        mimo_adr_asymptotic(s, SnrPoint(10.0, 1.0))
    with pytest.raises(UnsupportedSpectrumError):
        dmt_mimo(s, 0.5, 1.0)


# --- MIMO DMT -------------------------------------------------------------------


@pytest.mark.parametrize("d_r,d_t", [(2, 2), (3, 5), (20, 20), (4, 7)])
def test_dmt_mimo_integer_points(d_r, d_t):
    for k in range(1, min(d_r, d_t)):
        assert diversity_mimo(d_r, d_t, k) == (d_t - k) * (d_r - k)


@pytest.mark.parametrize("d_r,d_t", [(2, 2), (3, 5), (20, 20)])
def test_dmt_mimo_continuity(d_r, d_t):
    for k in range(1, min(d_r, d_t)):
        gl, sl = dmt_segment(d_r, d_t, k - 1)
        gr, sr = dmt_segment(d_r, d_t, k)
        assert abs((gl - sl * k) - (gr - sr * k)) < 1e-12
        assert diversity_mimo(d_r, d_t, k + 1e-12) == pytest.approx(diversity_mimo(d_r, d_t, k), abs=1e-9)


def test_dmt_mimo_endpoints():
    assert diversity_mimo(3, 4, 1e-12) == pytest.approx(12.0)
    assert diversity_mimo(3, 4, 3 - 1e-12) == pytest.approx(0.0, abs=1e-9)
    assert diversity_mimo(20, 20, 10) == 100
    for r in (0.0, 3.0, 3.5):
        with pytest.raises(DomainError):
            diversity_mimo(3, 4, r)


def test_dmt_mimo_decreasing():
    rs = np.linspace(0.01, 3.99, 200)
    ds = [diversity_mimo(4, 6, r) for r in rs]
    assert all(b < a for a, b in zip(ds, ds[1:]))


def test_dmt_mimo_two_by_two_array_gain():
    # r < 1: K_{2,2} = 1, det K(0) = 1/2, G_r = 3, so f = (x^-4 / 6)^(-1/d)
    s = MimoSpectrum.iid(2, 2, 0.5, 0.5)
    r = 0.5
    p = dmt_mimo(s, r, 2.0)
    x = 2.0 * 0.25
    assert p.exact
    assert p.array_gain == pytest.approx((x**-4 / 6) ** (-1 / p.diversity_gain), rel=1e-13)


def test_dmt_mimo_single_row_matches_miso():
    s = MimoSpectrum.iid(1, 5, 1.0, 0.3)
    m = build_mixture([0.3] * 5)
    for r in (0.1, 0.5, 0.8):
        assert dmt_mimo(s, r, 2.0).array_gain == pytest.approx(dmt_miso(m, r, 2.0).array_gain, rel=1e-12)


def test_dmt_mimo_interval_for_unequal_factors():
    rho_r = np.array([0.6, 0.4])
    rho_t = np.array([0.7, 0.3])
    base = MimoSpectrum.iid(2, 2)
    s = MimoSpectrum(base.tx_spectrum, base.rx_spectrum, np.outer(rho_r, rho_t), True, rho_r, rho_t)
    p = dmt_mimo(s, 0.5, 1.0)
    assert isinstance(p.array_gain, Interval)
    assert p.array_gain.lo < p.array_gain.hi
    eq = dmt_mimo(MimoSpectrum.iid(2, 2, 0.5, 0.5), 0.5, 1.0).array_gain
    assert eq in p.array_gain


def test_dmt_mimo_large_is_finite():
    s = MimoSpectrum.iid(20, 20, 0.05, 0.05)
    for r in (0.5, 9.5, 10.0, 18.7):
        p = dmt_mimo(s, r, 1e-10)
        assert math.isfinite(p.log_array_gain)
        if p.array_gain > 0.0:
            assert math.log(p.array_gain) == pytest.approx(p.log_array_gain, rel=1e-12)


# --- SPDA array-gain ratio ----------------------------------------------------------


def test_aor_full_occupation():
    lam = 0.0107
    # elements tile the aperture: spacing equals the element width
    c = ApertureConfig(10, 10, 10, 10, lam, 10.0, lam / 2, lam / 2, (lam / 2) ** 2, (lam / 2) ** 2)
    for kind in ("MISO", "SIMO", "MIMO"):
        assert array_gain_ratio_spda(c, kind, Layout.LINEAR) == pytest.approx(1.0, rel=1e-12)
        assert array_gain_ratio_spda(c, kind, Layout.PLANAR) == pytest.approx(1.0, rel=1e-12)


def test_aor_half_wavelength_isotropic_elements():
    c = ApertureConfig()
    eta = array_gain_ratio_spda(c, "SIMO")
    # 2N A / (N lambda sqrt(A)) = 2 sqrt(A) / lambda = 1 / sqrt(pi)
    assert eta == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-12)
    assert array_gain_ratio_spda(c, "MIMO") == pytest.approx(1.0 / math.pi, rel=1e-12)
    assert array_gain_ratio_spda(c, "SIMO", Layout.PLANAR) == pytest.approx(1.0 / math.pi, rel=1e-12)


def test_aor_linear_in_area():
    lam = 0.0107
    a = default_element_area(lam)
    c1 = ApertureConfig(element_area_tx=a)
    c2 = ApertureConfig(element_area_tx=2 * a)
    assert array_gain_ratio_spda(c2, "MISO", Layout.PLANAR) == pytest.approx(
        2 * array_gain_ratio_spda(c1, "MISO", Layout.PLANAR), rel=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 30),
    frac=st.floats(min_value=0.05, max_value=1.0),
    spacing_mult=st.floats(min_value=0.5, max_value=3.0),
)
def test_aor_never_exceeds_one(n, frac, spacing_mult):
    lam = 0.0107
    d = spacing_mult * lam
    if d > n * lam:
        return
    area = (frac * d) ** 2
    c = ApertureConfig(n, n, n, n, lam, 10.0, d, d, area, area)
    for kind in ("MISO", "SIMO", "MIMO"):
        for layout in (Layout.LINEAR, Layout.PLANAR):
            assert 0.0 < array_gain_ratio_spda(c, kind, layout) <= 1.0 + 1e-12


def test_element_count_and_measure():
    c = ApertureConfig(element_spacing_tx=0.0107)
    assert element_count(c, Side.TX, Layout.LINEAR) == 10
    assert element_count(c, Side.RX, Layout.PLANAR) == 400
    assert aperture_measure(c, Side.TX, Layout.PLANAR) == pytest.approx(0.107**2)
    with pytest.raises(ConfigError):
        array_gain_ratio_spda(c, "SISO")
