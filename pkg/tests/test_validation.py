import math

import numpy as np
import pytest

from capadmt import validation


def hypoexp_cdf(v, x):
    # distinct rates: F(x) = 1 - sum_i prod_{j != i} v_i / (v_i - v_j) exp(-x / v_i)
    out = np.ones_like(x)
    for i, vi in enumerate(v):
        c = math.prod(vi / (vi - vj) for j, vj in enumerate(v) if j != i)
        out -= c * np.exp(-x / vi)
    return out


def test_convolution_oracle_matches_hypoexponential():
    v = [2.0, 1.0, 0.5]
    x, f = validation.convolution_cdf(v, 40.0, 1e-3)
    assert np.max(np.abs(f - hypoexp_cdf(v, x))) < 1e-6


def test_ks_bound_is_an_upper_bound():
    rng = np.random.default_rng(0)
    s = np.sort(rng.exponential(size=5000))
    cdf = lambda t: 1 - np.exp(-np.asarray(t))
    n = s.size
    f = cdf(s)
    exact = max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n))
    for stride in (1, 7, 50):
        assert validation.ks_upper_bound(s, cdf, stride) >= exact - 1e-15
    assert validation.ks_upper_bound(s, cdf, 1) == pytest.approx(exact, abs=1e-12)


def test_check_result_line_and_dict():
    r = validation.CheckResult(3, "name", True, {"a": 1}, {"a": 2}, 1.25)
    assert r.line().startswith("[PASS]  3 name")
    assert r.to_dict()["passed"] is True


def test_context_trial_floor():
    assert validation.Context(trial_scale=1e-9).trials(10**6) == 1000
    assert validation.Context().trials(10**6) == 10**6


@pytest.mark.parametrize("cid", [7, 9])
def test_deterministic_checks_pass(cid):
    assert validation.run_check(cid, validation.Context()).passed
