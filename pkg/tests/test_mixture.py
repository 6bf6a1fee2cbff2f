import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, signal

from capadmt.errors import ConvergenceError, DomainError
from capadmt.mixture import build_mixture, cdf, log_mean, pdf, small_x_constant
from capadmt.specfun import EULER_GAMMA, regularized_lower_gamma
from capadmt.spectrum import ApertureConfig, ScatteringSpectrum, Side, planar_variances


def convolution_oracle(variances, xs, h=2e-3, x_max=60.0):
    """CDF of a sum of exponentials by discrete convolution on a grid.

    floor(X/h) of an exponential is geometric and independent of the
    fractional part, so the integer parts convolve exactly; the fractional
    parts are treated as uniform (Irwin-Hall), an O(h^2) approximation.
    """
    n = int(x_max / h)
    k = np.arange(n)
    mass = None
    for v in variances:
        q = math.exp(-h / v)
        geo = (1.0 - q) * q**k
        mass = geo if mass is None else signal.fftconvolve(mass, geo)[:n]
    mass = np.clip(mass, 0.0, None)
    d = len(variances)

    def irwin_hall(t):
        t = np.clip(t, 0.0, d)
        acc = np.zeros_like(t)
        for j in range(d + 1):
            acc += (-1) ** j * math.comb(d, j) * np.where(t > j, (t - j) ** d, 0.0)
        return acc / math.factorial(d)

    return np.array([np.sum(mass * irwin_hall(x / h - k)) for x in xs])


# --- weights -------------------------------------------------------------------


def test_equal_variances_single_term():
    m = build_mixture([0.3, 0.3, 0.3])
    assert m.truncation_Q == 0
    assert list(m.weights) == [1.0]
    assert m.probabilities[0] == pytest.approx(1.0, abs=1e-15)


def test_single_variance():
    m = build_mixture([2.0])
    assert m.truncation_Q == 0 and m.weights[0] == 1.0


def test_two_variance_recursion():
    m = build_mixture([1.0, 0.5])
    # c = 1/2: psi_q = 0.5^q and p_q = 0.5^{q+1}
    assert m.weights[0] == 1.0
    assert m.weights[1] == pytest.approx(0.5, abs=1e-15)
    assert m.weights[2] == pytest.approx(0.25, abs=1e-15)
    assert np.allclose(m.probabilities, 0.5 ** (np.arange(m.truncation_Q + 1) + 1), rtol=1e-13)


def test_weights_against_direct_recursion():
    v = np.array([1.0, 0.7, 0.3, 0.25])
    c = 1 - v.min() / v
    psi = [1.0]
    for q in range(1, 30):
        psi.append(sum(np.sum(c**k) * psi[q - k] for k in range(1, q + 1)) / q)
    m = build_mixture(v)
    assert np.allclose(m.weights[:30], psi, rtol=1e-12)


def test_probabilities_sum_and_bound():
    m = build_mixture([1.0, 0.5, 0.25, 0.01], target_error=1e-12)
    assert m.truncation_error_bound <= 1e-12
    assert math.fsum(m.probabilities) == pytest.approx(1.0, abs=2e-12)
    assert m.majorant_bound >= m.truncation_error_bound


def test_coalescing_near_equal():
    m = build_mixture([1.0, 1.0 + 1e-14, 1.0 - 5e-13])
    assert m.truncation_Q == 0
    assert np.all(m.component_variances == m.sigma_min_sq)


def test_cap_raises():
    with pytest.raises(ConvergenceError):
        build_mixture([1.0, 1e-4], q_cap=50)


def test_bad_input():
    for bad in ([], [1.0, 0.0], [1.0, -1.0], [np.nan]):
        with pytest.raises(DomainError):
            build_mixture(bad)
    with pytest.raises(DomainError):
        build_mixture([1.0], target_error=0.0)


def test_large_planar_spread():
    s = planar_variances(ApertureConfig(10, 10, 10, 10), ScatteringSpectrum.isotropic(), Side.RX)
    m = build_mixture(s.variances)
    assert m.dimension == s.dimension
    assert m.truncation_error_bound <= 1e-10
    assert cdf(m, 20.0) == pytest.approx(1.0, abs=1e-9)
    assert 0.0 < cdf(m, 0.9) < 1.0


# --- CDF ------------------------------------------------------------------------


def test_cdf_trivial():
    m = build_mixture([1.0])
    assert cdf(m, 0.0) == 0.0
    assert cdf(m, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)


@pytest.mark.parametrize("variances", [[1.0, 0.5], [1.0, 0.5, 0.25]])
def test_cdf_convolution_oracle(variances):
    m = build_mixture(variances)
    xs = np.linspace(0.01, 12.0, 120)
    ref = convolution_oracle(variances, xs)
    assert np.max(np.abs(cdf(m, xs) - ref)) < 1e-5


def test_cdf_hypoexponential_closed_form():
    # two distinct rates: F = 1 - (a e^{-x/a} - b e^{-x/b}) / (a - b)
    a, b = 1.3, 0.4
    m = build_mixture([a, b])
    for x in (0.05, 0.7, 2.0, 9.0):
        ref = 1 - (a * math.exp(-x / a) - b * math.exp(-x / b)) / (a - b)
        assert cdf(m, x) == pytest.approx(ref, abs=1e-12)


def test_cdf_iid_monte_carlo():
    rng = np.random.default_rng(11)
    n = 10**7
    s = rng.gamma(4.0, 0.05, size=n)
    emp = np.mean(s <= 0.1)
    se = math.sqrt(emp * (1 - emp) / n)
    m = build_mixture([0.05] * 4)
    assert abs(cdf(m, 0.1) - emp) < 3 * se
    assert cdf(m, 0.1) == pytest.approx(regularized_lower_gamma(4, 2.0), abs=1e-14)


def test_cdf_large_x_limit():
    m = build_mixture([1.0, 0.2, 0.05])
    assert cdf(m, 200.0) == pytest.approx(1.0, abs=1e-10)
    assert cdf(m, np.inf) == 1.0


def test_small_x_law():
    v = [1.0, 0.5, 0.25]
    m = build_mixture(v)
    x = 1e-8 * m.sigma_min_sq
    assert cdf(m, x) * math.factorial(3) * np.prod(v) / x**3 == pytest.approx(1.0, rel=1e-6)
    assert small_x_constant(m) == pytest.approx(1 / (6 * np.prod(v)), rel=1e-13)


def test_cdf_array_shape():
    m = build_mixture([1.0, 0.5])
    out = cdf(m, np.array([[0.1, 0.2], [0.3, 0.4]]))
    assert out.shape == (2, 2)
    with pytest.raises(DomainError):
        cdf(m, -1.0)


@settings(max_examples=40, deadline=None)
@given(
    v=st.lists(st.floats(min_value=0.05, max_value=3.0), min_size=1, max_size=6),
    j=st.integers(0, 5),
    bump=st.floats(min_value=0.05, max_value=2.0),
)
def test_stochastic_dominance(v, j, bump):
    j = j % len(v)
    w = list(v)
    w[j] += bump
    a, b = build_mixture(v), build_mixture(w)
    xs = np.linspace(0.05, 3.0 * sum(w), 12)
    assert np.all(cdf(b, xs) <= cdf(a, xs) + 1e-10)


@settings(max_examples=40, deadline=None)
@given(v=st.lists(st.floats(min_value=0.01, max_value=5.0), min_size=1, max_size=8))
def test_cdf_is_a_distribution(v):
    m = build_mixture(v)
    xs = np.linspace(0.0, 8.0 * sum(v), 40)
    f = cdf(m, xs)
    assert np.all(np.diff(f) >= -1e-12)
    assert np.all((f >= 0) & (f <= 1))
    assert math.fsum(m.probabilities) == pytest.approx(1.0, abs=2e-10)


# --- PDF ------------------------------------------------------------------------


def test_pdf_exponential():
    m = build_mixture([1.0])
    for x in (0.1, 1.0, 5.0):
        assert pdf(m, x) == pytest.approx(math.exp(-x), rel=1e-13)


def test_pdf_integrates_to_one():
    m = build_mixture([1.0, 0.5, 0.25, 0.1])
    total, _ = integrate.quad(lambda x: pdf(m, x), 0.0, np.inf, epsabs=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_pdf_is_cdf_derivative():
    m = build_mixture([0.8, 0.5, 0.3])
    h = 1e-5
    for x in np.linspace(0.05, 6.0, 50):
        num = (cdf(m, x + h) - cdf(m, x - h)) / (2 * h)
        assert pdf(m, x) == pytest.approx(num, abs=1e-6)


def test_pdf_mode_equal_variances():
    d, s2 = 5, 0.3
    m = build_mixture([s2] * d)
    xs = np.linspace(0.01, 5.0, 4000)
    f = pdf(m, xs)
    peak = xs[np.argmax(f)]
    assert peak == pytest.approx((d - 1) * s2, abs=2e-3)
    # unimodal: increasing then decreasing
    i = np.argmax(f)
    assert np.all(np.diff(f[: i + 1]) > 0) and np.all(np.diff(f[i:]) < 0)


# --- log mean ------------------------------------------------------------------


def test_log_mean_exponential():
    assert log_mean(build_mixture([1.0])) == pytest.approx(-EULER_GAMMA, abs=1e-14)
    assert log_mean(build_mixture([3.5])) == pytest.approx(math.log(3.5) - EULER_GAMMA, abs=1e-14)


def test_log_mean_unequal_closed_form():
    # E ln(X1 + X2) for rates a, b: (a(ln a - g) - b(ln b - g)) / (a - b)
    a, b = 2.0, 0.5
    ref = (a * (math.log(a) - EULER_GAMMA) - b * (math.log(b) - EULER_GAMMA)) / (a - b)
    assert log_mean(build_mixture([a, b])) == pytest.approx(ref, abs=1e-10)


def test_log_mean_monte_carlo():
    rng = np.random.default_rng(5)
    v = np.array([0.05, 0.08, 0.1, 0.2])
    n = 10**7
    s = np.zeros(n)
    for vi in v:
        s += rng.exponential(vi, size=n)
    ln = np.log(s)
    se = ln.std() / math.sqrt(n)
    assert abs(log_mean(build_mixture(v)) - ln.mean()) < 3 * se
