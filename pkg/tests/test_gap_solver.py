import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permspectra.errors import NumericalFailure, ParameterError
from permspectra.gap_solver import (
    fourier_gap, fourier_transform_modulus, gap_samples, gap_series, kernel_hat_integral,
    mc_gap, solve_volterra, volterra_residual,
)
from permspectra.gap_solver import _kernel_hat
from permspectra.sampling_core import RandomStream


@pytest.fixture(scope="module")
def volterra():
    return {theta: solve_volterra(theta, 1e-3, 10.0) for theta in (0.5, 1.0, 2.0)}


# ------------------------------------------------------------------ Volterra

@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_volterra_is_a_survival_function(volterra, theta):
    G = volterra[theta]
    assert G.values[0] == 1.0
    assert np.all(np.diff(G.values) <= 1e-15)
    assert G.values[-1] < G(1.0) and np.all(G.values >= 0)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_volterra_matches_series_on_unit_interval(volterra, theta):
    G = volterra[theta]
    x = G.x[G.x <= 1.0]
    assert np.max(np.abs(G.values[: x.size] - gap_series(theta, x))) < 1e-6


def test_initial_slope_is_minus_one():
    # one expected point per unit length, so P[no point in [0, x]] = 1 - x + O(x**2)
    G = solve_volterra(1.0, 1e-3, 1.0)
    slope = (G.values[1] - G.values[0]) / G.h
    assert abs(slope + 1.0) < 1e-3
    # the series agrees: 0F1(; 1; -x) = sum (-x)**n / (n!)**2
    x = 1e-3
    assert math.isclose(gap_series(1.0, x), 1 - x + x ** 2 / 4 - x ** 3 / 36, rel_tol=1e-14)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_volterra_residual(volterra, theta):
    assert volterra_residual(theta, volterra[theta]) < 1e-6


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_richardson_order(theta):
    Gs = [solve_volterra(theta, h, 3.0).values for h in (1e-2, 5e-3, 2.5e-3)]
    d1 = np.max(np.abs(Gs[0] - Gs[1][::2]))
    d2 = np.max(np.abs(Gs[1] - Gs[2][::2]))
    assert math.log2(d1 / d2) >= 1.5


def test_weighted_function_is_integrable():
    G = solve_volterra(1.0, 1e-2, 30.0)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (G.values[1:] + G.values[:-1]) * G.h)])
    beyond = cum[G.x >= 20.0]
    assert beyond[-1] - beyond[0] < 1e-10
    # int G is the mean smallest point
    s = gap_samples(1.0, 200_000, RandomStream(4))
    assert abs(s.mean() - cum[-1]) < 4 * s.std() / math.sqrt(s.size)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_faster_than_exponential_decay(volterra, theta):
    G = volterra[theta]
    r = [math.log(float(G(x))) / x for x in (2.0, 4.0, 6.0)]
    assert r[0] > r[1] > r[2]


def test_volterra_argument_checks():
    with pytest.raises(ParameterError):
        solve_volterra(1.0, 0.02, 5.0)
    with pytest.raises(ParameterError):
        solve_volterra(1.0, 1e-3, 0.5)
    with pytest.raises(ParameterError):
        solve_volterra(1.0, 3e-3, 5.0)
    with pytest.raises(ParameterError):
        solve_volterra(-1.0, 1e-3, 5.0)


def test_grid_csv():
    text = solve_volterra(1.0, 1e-2, 1.0).to_csv()
    lines = text.splitlines()
    assert "# method=volterra" in lines and "x,G" in lines
    assert lines[lines.index("x,G") + 1] == "0.0,1.0"


def test_series_domain():
    with pytest.raises(ParameterError):
        gap_series(1.0, 1.5)


# ------------------------------------------------------------------- Fourier

def test_kernel_value_at_origin():
    assert _kernel_hat(np.array([0.0]))[0] == 0.5
    mu = np.array([9.99e-3, 1.001e-2])
    direct = (1 - np.exp(-1j * mu) - 1j * mu) / mu ** 2
    assert np.allclose(_kernel_hat(mu), direct, rtol=1e-10, atol=0)


def test_kernel_integral_against_quadrature():
    from scipy import integrate

    lam = np.linspace(0.0, 7.0, 71)
    ours = kernel_hat_integral(lam)
    for i in (10, 35, 70):
        re = integrate.quad(lambda m: _kernel_hat(np.array([m]))[0].real, 0, lam[i], epsabs=1e-14)[0]
        im = integrate.quad(lambda m: _kernel_hat(np.array([m]))[0].imag, 0, lam[i], epsabs=1e-14)[0]
        assert abs(ours[i] - (re + 1j * im)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5.0))
def test_transform_modulus_is_non_increasing(theta):
    lam = np.linspace(0.0, 200.0, 20001)
    mod = fourier_transform_modulus(theta, lam)
    assert mod[0] == 1.0
    assert np.all(np.diff(mod) <= 1e-14)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_fourier_matches_volterra(volterra, theta):
    F = fourier_gap(theta)
    V = volterra[theta]
    x = V.x[V.x <= 5.0]
    assert F.values[0] == 1.0
    assert np.max(np.abs(F.values[: x.size] - V.values[: x.size])) <= 1e-3


def test_fourier_failures():
    with pytest.raises(NumericalFailure):
        fourier_gap(1.0, lambda_max=1000.0, n_freq=1 << 10)
    with pytest.raises(NumericalFailure):
        fourier_gap(0.5, lambda_max=20.0, n_freq=1 << 6, x_max=1.0)


# --------------------------------------------------------------- Monte Carlo

def test_mc_gap_starts_at_one():
    G = mc_gap(1.0, 1000, RandomStream(1))
    assert G.values[0] == 1.0 and G.meta["n"] == "1000"


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_three_routes_agree(volterra, theta):
    n = 200_000
    pts = [0.5, 1.0, 2.0, 4.0]
    M = mc_gap(theta, n, RandomStream(2, int(2 * theta)), grid=np.array(pts))
    V = volterra[theta]
    for x, g in zip(pts, M.values):
        ref = float(V(x))
        se = math.sqrt(max(ref * (1 - ref), 1e-12) / n)
        assert abs(g - ref) < 4 * se + 1e-3


def test_gap_samples_are_positive_and_batch_independent():
    a = gap_samples(1.5, 3000, RandomStream(3), batch=3000)
    assert np.all(a > 0) and np.all(np.isfinite(a))
    b = gap_samples(1.5, 3000, RandomStream(3), batch=3000)
    assert np.array_equal(a, b)
