import math

from decimal import Decimal, getcontext
import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmwcov.numerics import (ConvergenceError, EmpiricalCCDF, LogGrid, QuadratureSpec,
                             binomial_ci, ccdf_at, integrate_semi_infinite, log_q_function,
                             q_function, truncated_series_sum)


def test_q_function_symmetry_point():
    assert q_function(0.0) == 0.5


def test_q_function_far_tail_underflows():
    assert q_function(40.0) < 1e-300


def _q_series(x, digits=50):
    """Q(x) from the Maclaurin series of erf in decimal arithmetic."""
    getcontext().prec = digits
    z = Decimal(x) / Decimal(2).sqrt()
    term, total, n = z, Decimal(0), 0
    while True:
        add = term / (2 * n + 1)
        total += add
        if abs(add) < Decimal(10) ** (-digits + 5):
            break
        n += 1
        term = -term * z * z / n
    pi = Decimal("3.14159265358979323846264338327950288419716939937510")
    erf = 2 * total / pi.sqrt()
    return float((1 - erf) / 2)


def test_q_function_matches_arbitrary_precision():
    for x in (-3.0, -0.5, 1.0, 2.5, 5.0):
        assert q_function(x) == pytest.approx(_q_series(x), rel=1e-12)
    assert q_function(1.0) == pytest.approx(0.158655, abs=1e-6)
    for x in (7.0, 20.0):
        assert q_function(x) == pytest.approx(0.5 * math.erfc(x / math.sqrt(2.0)), rel=1e-13)


def test_log_q_tracks_q_where_both_representable():
    x = np.linspace(-5, 30, 50)
    assert np.allclose(log_q_function(x), np.log(q_function(x)), rtol=1e-12)
    assert np.isfinite(log_q_function(60.0))


@pytest.mark.parametrize("f, lower, exact", [
    (lambda t: np.exp(-t), 0.0, 1.0),
    (lambda t: np.exp(-t), 2.0, math.exp(-2.0)),
    (lambda t: t * np.exp(-t * t), 0.0, 0.5),
])
def test_semi_infinite_integrals(f, lower, exact):
    assert integrate_semi_infinite(f, lower) == pytest.approx(exact, abs=1e-6)


def test_heavy_tail_with_scale():
    # int_0^inf 1/(1+t/s)^2 dt = s
    s = 1e9
    val = integrate_semi_infinite(lambda t: 1.0 / (1.0 + t / s) ** 2, 0.0, scale=s)
    assert val == pytest.approx(s, rel=1e-6)


def test_divergent_integral_raises():
    with pytest.raises(ConvergenceError):
        integrate_semi_infinite(lambda t: 1.0 / (1.0 + t) ** 0.5, 0.0,
                                QuadratureSpec(max_subdivisions=20))


def test_series_sums():
    assert truncated_series_sum(lambda n: 2.0 ** -n, 10).total == 0.9990234375
    res = truncated_series_sum(lambda n: 0.0, 5)
    assert res.total == 0.0 and res.last_term == 0.0


def test_ccdf_counting():
    s = EmpiricalCCDF.from_samples([1, 2, 3])
    assert ccdf_at(s, 2) == pytest.approx(1 / 3)
    assert ccdf_at(s, 0) == 1.0
    assert ccdf_at(s, 5) == 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.floats(-2e3, 2e3))
def test_ccdf_matches_direct_count(xs, t):
    s = EmpiricalCCDF.from_samples(xs)
    assert s(t) == sum(x > t for x in xs) / len(xs)


def test_binomial_ci_brackets_estimate():
    k = np.array([0, 3, 50, 100])
    lo, hi = binomial_ci(k, 100)
    p = k / 100
    assert np.all(lo <= p) and np.all(p <= hi)
    assert lo[0] == 0.0 and hi[-1] == 1.0


def test_log_grid_integrates_smooth_function():
    g = LogGrid(-30.0, 6.0, 0.05)
    # int_0^inf t e^{-t} dt = 1; the integrand vanishes at both grid ends
    assert g.integrate(g.t * np.exp(-g.t)) == pytest.approx(1.0, rel=1e-10)
