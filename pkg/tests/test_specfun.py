import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from capadmt import specfun
from capadmt.errors import DomainError
from capadmt.specfun import (
    EULER_GAMMA,
    EvalResult,
    digamma,
    exp_integral_ei,
    gamma_fn,
    log_gamma,
    log_mimo_outage_coefficient,
    lower_incomplete_gamma,
    meijer_outage_eval,
    mimo_outage_coefficient,
    regularized_lower_gamma,
    scaled_expn_sequence,
)


def residue_oracle(n, m, rate):
    """Sum of residues of x^s / prod(s - p) over the pole multiset, exact in sympy."""
    s = sp.symbols("s")
    x = sp.Integer(2) ** sp.nsimplify(rate)
    poles = [0] + [k + i for k in range(1, n + 1) for i in range(m)]
    expr = x**s
    for p in poles:
        expr = expr / (s - p)
    total = sum(sp.residue(expr, s, p) for p in sorted(set(poles)))
    return float(sp.N(total, 30))


# --- gamma family -----------------------------------------------------------


def test_gamma_integers():
    assert gamma_fn(1) == 1.0
    assert gamma_fn(5) == 24.0


def test_gamma_half_integer_against_recurrence():
    # Gamma(7.5) = 6.5 * 5.5 * ... * 0.5 * sqrt(pi)
    expected = math.sqrt(math.pi)
    for k in range(7):
        expected *= 0.5 + k
    assert gamma_fn(7.5) == pytest.approx(expected, rel=1e-13)


def test_gamma_recurrence_grid():
    for z in np.arange(0.5, 51.0, 1.0):
        lhs = gamma_fn(z + 1.0)
        assert abs(lhs - z * gamma_fn(z)) / lhs < 1e-10


def test_gamma_relative_accuracy_to_170():
    for z in np.linspace(0.01, 170.0, 400):
        assert gamma_fn(z) == pytest.approx(math.gamma(z), rel=1e-12)


def test_gamma_errors():
    with pytest.raises(DomainError):
        gamma_fn(0.0)
    with pytest.raises(DomainError):
        gamma_fn(-2.5)
    with pytest.raises(OverflowError):
        gamma_fn(200.0)


def test_log_gamma_vector_and_scalar():
    z = np.array([0.1, 1.0, 3.7, 50.0, 1000.0])
    out = log_gamma(z)
    assert out.shape == z.shape
    for zi, oi in zip(z, out):
        assert oi == pytest.approx(math.lgamma(zi), rel=1e-13, abs=1e-13)
    assert isinstance(log_gamma(2.5), float)


def test_lower_incomplete_trivial():
    assert lower_incomplete_gamma(1, 1) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)
    assert lower_incomplete_gamma(2, 0) == 0.0


def test_lower_incomplete_quadrature_oracle():
    ref, _ = integrate.quad(lambda t: t**2.5 * math.exp(-t), 0.0, 2.2, epsabs=1e-14, epsrel=1e-13)
    assert lower_incomplete_gamma(3.5, 2.2) == pytest.approx(ref, abs=1e-10)


def test_lower_incomplete_large_x_limit():
    assert lower_incomplete_gamma(4.0, 200.0) == pytest.approx(6.0, rel=1e-14)


def test_lower_incomplete_small_x_law():
    for s in (0.5, 1.0, 3.0, 20.0):
        x = 1e-6
        assert lower_incomplete_gamma(s, x) * s / x**s == pytest.approx(1.0, rel=1e-5)


def test_lower_incomplete_errors():
    with pytest.raises(DomainError):
        lower_incomplete_gamma(0.0, 1.0)
    with pytest.raises(DomainError):
        lower_incomplete_gamma(1.0, -1.0)


@settings(max_examples=100, deadline=None)
@given(
    s=st.floats(min_value=0.05, max_value=300.0),
    x=st.floats(min_value=0.0, max_value=500.0),
    dx=st.floats(min_value=0.0, max_value=50.0),
)
def test_regularized_gamma_bounded_and_monotone(s, x, dx):
    p0 = regularized_lower_gamma(s, x)
    p1 = regularized_lower_gamma(s, x + dx)
    assert 0.0 <= p0 <= 1.0
    assert p1 >= p0 - 1e-13


# --- digamma ----------------------------------------------------------------


def test_digamma_anchors():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-14)
    assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, abs=1e-14)


def test_digamma_half_integer_oracle():
    # psi(n + 1/2) = -gamma - 2 ln 2 + sum_{k=1}^n 2/(2k-1)
    ref = -EULER_GAMMA - 2.0 * math.log(2.0) + sum(2.0 / (2 * k - 1) for k in range(1, 11))
    assert digamma(10.5) == pytest.approx(ref, abs=1e-12)


def test_digamma_recurrence_grid():
    for x in np.linspace(0.05, 60.0, 300):
        assert digamma(x + 1.0) - digamma(x) == pytest.approx(1.0 / x, abs=1e-10)


def test_digamma_domain():
    with pytest.raises(DomainError):
        digamma(0.0)


# --- exponential integrals --------------------------------------------------


def test_ei_series_oracle():
    x = -1.0
    series = EULER_GAMMA + math.log(abs(x)) + math.fsum(x**k / (k * math.factorial(k)) for k in range(1, 40))
    assert exp_integral_ei(x) == pytest.approx(series, abs=1e-12)


def test_ei_quadrature_oracle():
    e1, _ = integrate.quad(lambda t: math.exp(-t) / t, 0.5, np.inf, epsabs=1e-14)
    assert exp_integral_ei(-0.5) == pytest.approx(-e1, abs=1e-12)


def test_ei_far_limit():
    v = exp_integral_ei(-700.0)
    assert v < 0.0
    assert abs(v) < 1e-300


def test_ei_negative_and_decreasing():
    # Ei(x) = -E1(-x) runs from 0- at -inf down to -inf at 0-
    xs = -np.logspace(-6, 2.5, 200)[::-1]
    vals = [exp_integral_ei(x) for x in xs]
    assert all(v < 0.0 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_ei_domain():
    with pytest.raises(DomainError):
        exp_integral_ei(0.0)
    with pytest.raises(DomainError):
        exp_integral_ei(1.0)


@pytest.mark.parametrize("x", [1e-4, 0.3, 1.0, 7.5, 40.0, 900.0])
def test_scaled_expn_against_quadrature(x):
    seq = scaled_expn_sequence(30, x)
    for k in (1, 2, 5, 17, 30):
        # e^x E_k(x) = int_1^inf e^{-x(t-1)} t^{-k} dt
        ref, _ = integrate.quad(lambda t: math.exp(-x * (t - 1.0)) * t ** (-k), 1.0, np.inf, epsabs=0, epsrel=1e-13, limit=400)
        assert seq[k - 1] == pytest.approx(ref, rel=1e-11)


# --- Meijer-G outage coefficient --------------------------------------------


@pytest.mark.parametrize("rate", [1e-3, 0.01, 0.5, 1.0, 5.0, 12.0])
def test_outage_coefficient_single_link(rate):
    assert mimo_outage_coefficient(1, 1, rate) == pytest.approx(2.0**rate - 1.0, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize(
    "n,m,rate",
    [(1, 2, 3.0), (1, 3, 0.7), (2, 2, 5.0), (2, 2, 0.3), (2, 3, 2.0), (3, 3, 4.0), (1, 4, 6.0)],
)
def test_outage_coefficient_against_residues(n, m, rate):
    ref = residue_oracle(n, m, rate)
    res = meijer_outage_eval(n, m, rate)
    assert res.value == pytest.approx(ref, rel=1e-8)
    assert abs(res.value - ref) <= 10 * max(res.abs_error_estimate, 1e-12 * ref)


def test_outage_coefficient_two_by_two_closed_form():
    x = 2.0**5
    ref = 1 / 12 - x / 2 + x**2 / 4 - x**2 * math.log(x) / 2 + x**3 / 6
    assert mimo_outage_coefficient(2, 2, 5.0) == pytest.approx(ref, rel=1e-10)


def test_outage_coefficient_vanishes_at_zero_rate():
    # near R = 0 the 2x2 coefficient behaves like delta^4 / 24 with delta = R ln 2
    r = 0.01
    delta = r * math.log(2.0)
    v = mimo_outage_coefficient(2, 2, r)
    assert v == pytest.approx(delta**4 / 24.0, rel=0.05)
    assert mimo_outage_coefficient(3, 4, 1e-3) < 1e-30


def test_outage_coefficient_monotone_in_rate():
    for n, m in [(1, 1), (1, 3), (2, 2), (2, 4)]:
        vals = [mimo_outage_coefficient(n, m, r) for r in np.linspace(0.1, 8.0, 15)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_outage_coefficient_symmetric():
    assert mimo_outage_coefficient(2, 3, 2.5) == mimo_outage_coefficient(3, 2, 2.5)


def test_log_outage_coefficient_matches_and_extends():
    assert log_mimo_outage_coefficient(2, 2, 5.0) == pytest.approx(math.log(mimo_outage_coefficient(2, 2, 5.0)), rel=1e-12)
    big = log_mimo_outage_coefficient(20, 20, 5.0)
    assert math.isfinite(big) and big < -700.0


def test_outage_coefficient_errors():
    with pytest.raises(DomainError):
        mimo_outage_coefficient(0, 1, 1.0)
    with pytest.raises(DomainError):
        mimo_outage_coefficient(1, 1, 0.0)
    with pytest.raises(DomainError):
        mimo_outage_coefficient(1.5, 2, 1.0)


def test_eval_result_rejects_negative_error():
    with pytest.raises(ValueError):
        EvalResult(1.0, -1.0)


@settings(max_examples=30, deadline=None)
@given(rate=st.floats(min_value=0.05, max_value=10.0))
def test_outage_coefficient_positive_property(rate):
    assert specfun.mimo_outage_coefficient(1, 2, rate) > 0.0
