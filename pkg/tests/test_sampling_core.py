import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from permspectra.errors import CapabilityError, ParameterError
from permspectra.exact_measures import gem_moment
from permspectra.sampling_core import (
    DiracOne, LogStable, RandomStream, RootsOfUnity, ShiftLaw, UniformCircle,
    cesaro_convolution, convolution_power_on_roots, cycle_products, discrete_angles,
    law_to_text, limit_shift_law, parse_law, sample_cycle_product, sample_gem,
    sample_gem_batch, sample_poisson_dirichlet, sample_stable, sample_z, stable_cdf,
    stable_density_at_zero, stable_variates,
)


# ---------------------------------------------------------------- streams

def test_stream_is_reproducible():
    a = RandomStream(7, 3).generator().random(5)
    b = RandomStream(7, 3).generator().random(5)
    assert np.array_equal(a, b)


def test_distinct_streams_differ_and_look_independent():
    a = RandomStream(7, 0).generator().random(100_000)
    b = RandomStream(7, 1).generator().random(100_000)
    assert not np.array_equal(a[:10], b[:10])
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(a.size)


def test_spawn_is_deterministic_and_distinct():
    s = RandomStream(11)
    assert s.spawn(2) == s.spawn(2)
    assert s.spawn(1) != s.spawn(2)


@given(st.integers(0, 20_000), st.integers(0, 20_000), st.integers(0, 9000))
@settings(max_examples=30, deadline=None)
def test_indexed_uniforms_do_not_depend_on_chunking(a, b, c):
    s = RandomStream(5, 9)
    lo, hi = sorted((a, b))
    whole = s.indexed_uniforms(lo, hi + c)
    cut = lo + (hi + c - lo) // 2
    parts = np.concatenate([s.indexed_uniforms(lo, cut), s.indexed_uniforms(cut, hi + c)])
    assert np.array_equal(whole, parts)


def test_stream_rejects_bad_seed():
    with pytest.raises(ParameterError):
        RandomStream(-1)
    with pytest.raises(ParameterError):
        RandomStream(1 << 64)


# ---------------------------------------------------------------- laws

def test_roots_law_validation():
    with pytest.raises(ParameterError):
        RootsOfUnity(2, (0.5, 0.4))
    with pytest.raises(ParameterError):
        RootsOfUnity(2, (1.5, -0.5))
    with pytest.raises(ParameterError):
        RootsOfUnity(3, (0.5, 0.5))
    assert RootsOfUnity(3).p == (Fraction(1, 3),) * 3


def test_parse_law_grammar():
    assert parse_law("dirac1") == DiracOne()
    assert parse_law("uniform-circle") == UniformCircle()
    assert parse_law("log-stable:alpha=0.5,rho=1") == LogStable(0.5, 1.0)
    law = parse_law("roots:r=4,p=0.5/0/0.5/0")
    assert law.r == 4 and law.p == (0.5, 0.0, 0.5, 0.0)
    for bad in ("dirac2", "roots:p=1", "log-stable:beta=1", "roots:r=x", "log-stable:alpha=3"):
        with pytest.raises(ParameterError):
            parse_law(bad)


@pytest.mark.parametrize("law", [DiracOne(), UniformCircle(), LogStable(0.25, 2.0), RootsOfUnity(3),
                                 RootsOfUnity(4, (0.5, 0.0, 0.25, 0.25))])
def test_law_text_round_trip(law):
    assert parse_law(law_to_text(law)) == law


def test_discrete_angles_rejects_continuous():
    with pytest.raises(CapabilityError):
        discrete_angles(UniformCircle())


# ---------------------------------------------------------------- GEM / PD

def test_gem_tail_contract():
    g = sample_gem(1.0, RandomStream(1), tol=1e-12)
    assert g.tail < 1e-12
    assert abs(g.weights.sum() + g.tail - 1) < 1e-12
    w, tail = sample_gem_batch(2.5, 1000, RandomStream(2), tol=1e-9)
    assert np.all(tail < 1e-9)
    assert np.all(np.abs(w.sum(axis=1) + tail - 1) < 1e-12)


def test_gem_theta_one_breaks_are_uniform():
    w, _ = sample_gem_batch(1.0, 100_000, RandomStream(3), tol=1e-12)
    # first two break factors V_1 = y_1 and V_2 = y_2 / (1 - y_1)
    v1 = w[:, 0]
    v2 = w[:, 1] / (1 - w[:, 0])
    for v in (v1, v2):
        assert stats.kstest(v, "uniform").pvalue > 0.001


def test_gem_theta_two_first_weight_mean():
    w, _ = sample_gem_batch(2.0, 1_000_000, RandomStream(4), tol=1e-6)
    y1 = w[:, 0]
    se = y1.std() / math.sqrt(y1.size)
    assert abs(y1.mean() - 1 / 3) < 3 * se


@pytest.mark.parametrize("theta", [0.5, 1.0, 3.0])
def test_gem_sum_of_squares_matches_moment(theta):
    w, _ = sample_gem_batch(theta, 200_000, RandomStream(5), tol=1e-10)
    s = (w ** 2).sum(axis=1)
    se = s.std() / math.sqrt(s.size)
    assert abs(s.mean() - 1 / (theta + 1)) < 4 * se
    assert gem_moment(theta, 2, 0) == pytest.approx(1 / (theta + 1), rel=1e-12)


def test_pd_sorted_and_mass_preserved():
    g = sample_poisson_dirichlet(1.5, RandomStream(6))
    assert np.all(np.diff(g.weights) <= 0)
    assert abs(g.weights.sum() + g.tail - 1) < 1e-12


def test_pd_largest_weight_against_sorted_gem():
    # independent oracle: sort GEM rows directly
    n = 200_000
    w, _ = sample_gem_batch(1.0, n, RandomStream(8), tol=1e-8)
    oracle = w.max(axis=1)
    ours = np.array([sample_poisson_dirichlet(1.0, RandomStream(9, i), 1e-8).weights[0]
                     for i in range(2000)])
    se = math.sqrt(oracle.var() / n + ours.var() / ours.size)
    assert abs(oracle.mean() - ours.mean()) < 3 * se
    # the Dickman-type value E[largest] = 0.6243 at theta = 1 (Golomb-Dickman constant)
    assert abs(oracle.mean() - 0.62433) < 4 * oracle.std() / math.sqrt(n)


# ---------------------------------------------------------------- stable

def test_cauchy_median_and_cdf():
    x = stable_variates(1.0, 1_000_000, RandomStream(10).generator())
    n = x.size
    # median within 3 sigma: sd of the sample median is 1/(2 f(0) sqrt(n)) = pi/(2 sqrt n)
    assert abs(np.median(x)) < 3 * math.pi / (2 * math.sqrt(n))
    p = np.mean(x <= 1)
    assert abs(p - 0.75) < 3 * math.sqrt(0.75 * 0.25 / n)


def test_gaussian_variance_two():
    x = stable_variates(2.0, 1_000_000, RandomStream(11).generator())
    # var of the sample variance for N(0, 2) is 2 sigma^4 / n
    assert abs(x.var() - 2) < 3 * math.sqrt(2 * 4 / x.size)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.5])
def test_stable_sampler_matches_cdf(alpha):
    x = stable_variates(alpha, 3000, RandomStream(12).generator())
    assert stats.kstest(x, lambda t: stable_cdf(t, alpha)).pvalue > 0.001


def test_stable_cdf_closed_forms_and_symmetry():
    assert stable_cdf(np.array([1.0]), 1.0)[0] == pytest.approx(0.75)
    assert stable_cdf(np.array([0.0]), 0.7)[0] == 0.5
    x = np.array([0.3, 1.7, 4.0])
    for a in (0.5, 1.2):
        assert np.allclose(stable_cdf(x, a) + stable_cdf(-x, a), 1.0, atol=1e-7)


@pytest.mark.parametrize("alpha", [0.25, 0.8, 1.5])
def test_stable_cdf_near_origin(alpha):
    # F(x) - 1/2 ~ f(0) x for small x; the near-origin route must join the far one
    for x in (1e-9, 1e-7):
        slope = (stable_cdf(np.array([x]), alpha)[0] - 0.5) / x
        assert slope == pytest.approx(stable_density_at_zero(alpha), rel=1e-4)
    edge = np.array([0.99e-2, 1.01e-2])
    assert abs(np.diff(stable_cdf(edge, alpha))[0]) < 2e-4 * stable_density_at_zero(alpha) * 1.01
    assert stable_cdf(1e-4, alpha) > 0.5


def test_stable_density_at_zero_closed_form():
    assert stable_density_at_zero(1.0) == pytest.approx(1 / math.pi)
    assert stable_density_at_zero(2.0) == pytest.approx(1 / (2 * math.sqrt(math.pi)))


def test_sample_stable_scalar():
    assert isinstance(sample_stable(1.3, RandomStream(1)), float)
    with pytest.raises(ParameterError):
        sample_stable(2.5, RandomStream(1))


# ---------------------------------------------------------------- entries

def test_sample_z_variants():
    assert np.all(sample_z(DiracOne(), RandomStream(1), 10) == 1)
    z = sample_z(RootsOfUnity(2, (0.5, 0.5)), RandomStream(2), 100_000)
    assert np.allclose(np.abs(z.imag), 0, atol=1e-12)
    plus = np.sum(z.real > 0)
    obs = np.array([plus, z.size - plus])
    assert stats.chisquare(obs).pvalue > 0.001
    z = sample_z(LogStable(1.5, 0.7), RandomStream(3), 3000)
    ang = (np.angle(z) / (2 * np.pi)) % 1
    assert stats.kstest(ang, "uniform").pvalue > 0.001
    s = np.log(np.abs(z)) / 0.7
    assert stats.kstest(s, lambda t: stable_cdf(t, 1.5)).pvalue > 0.001


def test_cycle_product_examples():
    assert sample_cycle_product(DiracOne(), 5, RandomStream(1)) == (0.0, 0.0)
    lm, ang = sample_cycle_product(RootsOfUnity(2, (0, 1)), 3, RandomStream(1))
    assert lm == 0.0 and ang == 0.5
    with pytest.raises(ParameterError):
        sample_cycle_product(DiracOne(), 0, RandomStream(1))


def test_cauchy_cycle_root_modulus_law_is_unchanged():
    # log|Z_l| / l for alpha = 1 has the law of a single log-modulus
    lm, _, _ = cycle_products(LogStable(1.0, 1.0), np.full(50_000, 7), RandomStream(4))
    assert stats.kstest(lm / 7, "cauchy").pvalue > 0.001


@pytest.mark.parametrize("law", [RootsOfUnity(3, (0.2, 0.5, 0.3)), UniformCircle(), LogStable(1.9, 0.2)])
def test_cycle_product_matches_direct_product(law):
    l, n = 3, 50_000
    lm, ang, _ = cycle_products(law, np.full(n, l), RandomStream(20))
    z = sample_z(law, RandomStream(21), n * l).reshape(n, l).prod(axis=1)
    if isinstance(law, LogStable):
        assert stats.ks_2samp(lm, np.log(np.abs(z))).pvalue > 0.001
    else:
        assert np.all(lm == 0)
    direct = (np.angle(z) / (2 * np.pi)) % 1
    if isinstance(law, RootsOfUnity):
        a = np.bincount(np.rint(ang * 3).astype(int) % 3, minlength=3)
        b = np.bincount(np.rint(direct * 3).astype(int) % 3, minlength=3)
        assert stats.chi2_contingency(np.array([a, b]))[1] > 0.001
    else:
        assert stats.ks_2samp(ang, direct).pvalue > 0.001


# ---------------------------------------------------------------- roots of unity

def test_convolution_power_examples():
    p = (Fraction(1, 5), Fraction(3, 5), Fraction(1, 5))
    assert convolution_power_on_roots(p, 1) == list(p)
    assert convolution_power_on_roots((Fraction(1, 2), Fraction(1, 2)), 7) == [Fraction(1, 2)] * 2
    assert convolution_power_on_roots((0, 1, 0), 3) == [1, 0, 0]


@given(st.lists(st.integers(0, 5), min_size=2, max_size=6), st.integers(0, 40))
@settings(max_examples=50, deadline=None)
def test_convolution_power_fourier_identity(weights, l):
    if sum(weights) == 0:
        weights[0] = 1
    p = [Fraction(w, sum(weights)) for w in weights]
    q = convolution_power_on_roots(p, l)
    assert sum(q) == 1
    r = len(p)
    ph = np.fft.fft(np.array(p, dtype=float))
    qh = np.fft.fft(np.array(q, dtype=float))
    assert np.allclose(qh, ph ** l, atol=1e-12)


def test_limit_shift_law_examples():
    assert limit_shift_law(DiracOne()) == ShiftLaw(1)
    assert limit_shift_law(RootsOfUnity(4, (0.5, 0, 0.5, 0))) == ShiftLaw(2)
    s = limit_shift_law(UniformCircle())
    assert math.isinf(s.r) and not s.is_lattice and s.atom_at_zero == 0
    assert limit_shift_law(LogStable(0.5)).r == math.inf
    x = ShiftLaw(3).sample(30_000, np.random.default_rng(0))
    assert set(np.unique(x)) == {0, 1 / 3, 2 / 3}


def test_cesaro_examples():
    p = (Fraction(1, 6), Fraction(1, 2), Fraction(1, 3))
    assert cesaro_convolution(p, 4, 1) == convolution_power_on_roots(p, 4)
    u = (Fraction(1, 4),) * 4
    assert cesaro_convolution(u, 5, 3) == list(u)

    def dev(q):
        return max(abs(float(x) - 1 / 3) for x in q)

    assert dev(cesaro_convolution(p, 64, 64)) < dev(cesaro_convolution(p, 8, 8))


@given(st.lists(st.integers(0, 4), min_size=2, max_size=5), st.integers(0, 12), st.integers(1, 12))
@settings(max_examples=40, deadline=None)
def test_cesaro_fourier_coefficients(weights, k, d):
    if sum(weights) == 0:
        weights[-1] = 1
    p = np.array(weights, dtype=float) / sum(weights)
    q = np.array(cesaro_convolution(list(p), k, d), dtype=float)
    ph = np.fft.fft(p)
    expect = sum(ph ** e for e in range(k, k + d)) / d
    assert np.allclose(np.fft.fft(q), expect, atol=1e-12)
