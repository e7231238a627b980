import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergobound.numerics import (
    CumulativeIntegral,
    LogIntegral,
    Tolerance,
    fit_exp_rate,
    gamma_fn,
    integrate,
    local_log_integral,
    sum_series,
)


def test_geometric_series():
    res = sum_series(lambda k: 0.5 ** k, Tolerance(rel=1e-12))
    assert res.converged
    assert abs(res.value - 2.0) <= 1e-12 * 2


def test_basel_series():
    # reference: 10^7 partial sum plus the integral tail bracket 1/(N+1) <= tail <= 1/N
    N = 10 ** 7
    k = np.arange(1, N + 1, dtype=float)
    partial = float(np.sum(1.0 / k[::-1] ** 2))
    lo, hi = partial + 1.0 / (N + 1), partial + 1.0 / N
    res = sum_series(lambda k: 1.0 / (k + 1.0) ** 2)
    assert res.converged
    assert lo - 1e-9 <= res.value <= hi + 1e-9
    assert res.value == pytest.approx(math.pi ** 2 / 6, rel=1e-9)


def test_divergent_series():
    res = sum_series(lambda k: np.ones_like(k, dtype=float))
    assert not res.converged and res.diverges


def test_tolerance_contract_on_converged_series():
    tol = Tolerance(rel=1e-8)
    res = sum_series(lambda k: 1.0 / (k + 1.0) ** 3, tol)
    fine = sum_series(lambda k: 1.0 / (k + 1.0) ** 3, Tolerance(rel=1e-9))
    assert res.error_estimate <= max(tol.abs, tol.rel * abs(res.value))
    assert abs(res.value - fine.value) <= 3 * res.error_estimate + 1e-15


def test_exponential_integral():
    res = integrate(lambda x: np.exp(-x), 0.0, math.inf)
    assert res.converged and abs(res.value - 1.0) < 1e-10


def test_quartic_integral_against_gamma():
    res = integrate(lambda z: np.exp(-((z / 2) ** 4)), 0.0, math.inf)
    assert res.value == pytest.approx(2 * gamma_fn(1.25), rel=1e-10)


@pytest.mark.parametrize("method", ["panels", "substitution"])
def test_semi_infinite_methods(method):
    res = integrate(lambda x: 1.0 / (1.0 + x * x), 0.0, math.inf, method=method)
    assert res.value == pytest.approx(math.pi / 2, rel=1e-8)


def test_constant_integral():
    assert integrate(lambda x: np.ones_like(x), 0.0, 1.0).value == pytest.approx(1.0, abs=1e-15)


def test_divergent_integral_verdict():
    res = integrate(lambda x: 1.0 / (1.0 + x), 0.0, math.inf)
    assert res.diverges and not res.converged


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_quadrature_additivity(c1, c2):
    f = lambda x: np.exp(-x) * np.sin(3 * x) ** 2
    a, c, b = 0.0, c1, c1 + c2
    whole = integrate(f, a, b)
    parts = integrate(f, a, c).value + integrate(f, c, b).value
    allowance = whole.error_estimate + 1e-12 + 1e-10 * abs(whole.value)
    assert abs(whole.value - parts) <= allowance


@pytest.mark.parametrize("x, expected", [(1, 1.0), (0.5, math.sqrt(math.pi)), (5, 24.0)])
def test_gamma_values(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-13)


def test_gamma_reflection_and_poles():
    assert gamma_fn(-0.5) == pytest.approx(-2 * math.sqrt(math.pi), rel=1e-13)
    with pytest.raises(ValueError):
        gamma_fn(-2)


@given(st.floats(0.05, 49.0))
def test_gamma_against_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mp.gamma(x)), rel=1e-12)


def test_fit_exact_exponentials():
    t = np.linspace(0, 3, 20)
    rate, r2 = fit_exp_rate(t, np.exp(-2 * t))
    assert rate == pytest.approx(2.0, abs=1e-12) and r2 == pytest.approx(1.0)
    rate, _ = fit_exp_rate(t, 3 * np.exp(-0.5 * t))
    assert rate == pytest.approx(0.5, abs=1e-12)


def test_fit_window_and_errors():
    t = np.linspace(0, 10, 50)
    v = np.where(t < 5, np.exp(-t), np.exp(-5) * np.exp(-3 * (t - 5)))
    rate, _ = fit_exp_rate(t, v, window=(5.5, 10))
    assert rate == pytest.approx(3.0, abs=1e-10)
    with pytest.raises(ValueError):
        fit_exp_rate([1, 1, 1, 1, 1], [1, 2, 3, 4, 5])
    with pytest.raises(ValueError):
        fit_exp_rate(t, -v)


@given(st.floats(1e-6, 1e6))
def test_fit_scale_invariance(s):
    t = np.linspace(0.1, 4, 15)
    v = np.exp(-1.3 * t) * (1 + 0.1 * np.sin(5 * t))
    assert fit_exp_rate(t, s * v)[0] == pytest.approx(fit_exp_rate(t, v)[0], abs=1e-12)


def test_cumulative_integral():
    F = CumulativeIntegral(lambda y: -4 * y ** 3, base=1.0)
    xs = np.array([0.0, 0.5, 1.0, 2.0, 7.5])
    assert np.allclose(F(xs), 1 - xs ** 4, rtol=1e-12, atol=1e-12)


def test_log_integral_total():
    L = LogIntegral(lambda y: -(y ** 4), 0.0)
    assert L.total().value == pytest.approx(math.gamma(1.25), rel=1e-10)
    assert L.log_total() == pytest.approx(math.log(math.gamma(1.25)), rel=1e-10)


def test_log_integral_divergence():
    assert LogIntegral(lambda y: np.zeros_like(y), 0.0).total().diverges


@pytest.mark.parametrize("x", [0.5, 3.0, 40.0, 1e6])
def test_local_log_integral_against_mpmath(x):
    # log int_x^inf exp(int_x^z -4 s^3 ds) dz
    logs, ok = local_log_integral(lambda s: -4 * s ** 3, lambda z: np.zeros_like(z), np.array([x]), +1, math.inf)
    assert ok
    mp.mp.dps = 30
    X = mp.mpf(x)
    ref = mp.quad(lambda u: mp.e ** (-(4 * X ** 3 * u + 6 * X ** 2 * u ** 2 + 4 * X * u ** 3 + u ** 4)),
                  [0, 1 / (4 * X ** 3 + 1), 10 / (4 * X ** 3 + 1), mp.inf])
    assert logs[0] == pytest.approx(float(mp.log(ref)), rel=1e-12, abs=1e-12)
