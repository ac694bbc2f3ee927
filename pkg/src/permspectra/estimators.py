"""Monte Carlo estimators and goodness-of-fit tests on sampled point sets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .errors import ParameterError
from .sampling_core import (
    LogStable, as_generator, sample_gem_batch, stable_variates, _check_theta,
)
from .spectrum import PointBatch
from .virtual_permutation import feller_cycle_lengths


@dataclass(frozen=True)
class TestReport:
    """Outcome of one statistical or numerical check; passes iff ``statistic <= threshold``."""

    name: str
    statistic: float
    threshold: float
    n: int
    passed: bool
    description: str = ""

    __test__ = False

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), sort_keys=True)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g} n={self.n}"


def _clean(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, float)):
            v = float(v)
            out[k] = repr(v) if not math.isfinite(v) else v
        elif isinstance(v, (np.integer,)):
            out[k] = int(v)
        elif isinstance(v, np.bool_):
            out[k] = bool(v)
        else:
            out[k] = v
    return out


def report(name: str, statistic: float, threshold: float, n: int, description: str = "") -> TestReport:
    statistic, threshold = float(statistic), float(threshold)
    return TestReport(name, statistic, threshold, int(n), bool(statistic <= threshold), description)


# ---------------------------------------------------------------- counting

def _check_inside(batch: PointBatch, a: float, b: float) -> None:
    lo, hi = batch.window
    if a < lo or b > hi:
        raise ParameterError(f"window [{a}, {b}] leaves the generated window [{lo}, {hi}]")


def counts_in_window(batch: PointBatch, a: float, b: float) -> np.ndarray:
    """Per-sample number of points in ``[a, b)``."""
    _check_inside(batch, a, b)
    x = batch.points
    inside = (x >= a) & (x < b)
    return np.bincount(batch.sample_index[inside], minlength=batch.n_samples)


def count_in_window(batch: PointBatch, a: float, b: float) -> tuple[float, float]:
    """Mean number of points in ``[a, b)`` and its standard error."""
    c = counts_in_window(batch, a, b).astype(float)
    n = c.size
    return float(c.mean()), float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def pair_correlation_estimate(batch: PointBatch, bins: Sequence[tuple], window: tuple):
    """Bin-averaged pair correlation from ordered pairs of distinct points.

    For each bin ``(u1, u2)`` with ``0 < u1 < u2``, counts pairs with
    ``x_i`` in ``window`` and ``x_j - x_i`` in ``[u1, u2)``, divided by
    ``|window| * (u2 - u1)``.

    Returns
    -------
    estimate, standard_error : ndarray
        One entry per bin; the error comes from per-sample pair counts.
    """
    a, b = window
    umax = max(u2 for _, u2 in bins)
    for u1, u2 in bins:
        if not 0 < u1 < u2:
            raise ParameterError("bins must satisfy 0 < u1 < u2")
    _check_inside(batch, a, b + umax)
    x = batch.points
    s = batch.sample_index
    # a per-sample offset larger than the window keeps samples apart after concatenation
    span = batch.window[1] - batch.window[0] + umax + 1.0
    key = x + s * span
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    sel = (x >= a) & (x <= b)
    xi, si = key[sel], s[sel]
    est, err = [], []
    n = batch.n_samples
    for u1, u2 in bins:
        cnt = (np.searchsorted(key_sorted, xi + u2, side="left")
               - np.searchsorted(key_sorted, xi + u1, side="left"))
        per = np.bincount(si, weights=cnt, minlength=n)
        norm = (b - a) * (u2 - u1)
        est.append(per.mean() / norm)
        err.append(per.std(ddof=1) / math.sqrt(n) / norm)
    return np.array(est), np.array(err)


# ---------------------------------------------------------------- tests

MIN_KS_SAMPLES = 50


def _check_sample(x: np.ndarray) -> None:
    if x.size < MIN_KS_SAMPLES or not np.all(np.isfinite(x)):
        raise ParameterError(f"need at least {MIN_KS_SAMPLES} finite samples for the asymptotic test")


def ks_test(samples, cdf: Callable, alpha: float = 0.01, name: str = "ks") -> TestReport:
    """One-sample Kolmogorov-Smirnov test with the asymptotic critical value."""
    samples = np.asarray(samples, dtype=float)
    _check_sample(samples)
    n = samples.size
    d = stats.kstest(samples, cdf).statistic
    thr = special.kolmogi(alpha) / math.sqrt(n)
    return report(name, d, thr, n, f"one-sample KS at level {alpha}")


def ks_two_sample(a, b, alpha: float = 0.01, name: str = "ks2") -> TestReport:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic critical value."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check_sample(a)
    _check_sample(b)
    d = stats.ks_2samp(a, b).statistic
    n, m = a.size, b.size
    thr = special.kolmogi(alpha) * math.sqrt((n + m) / (n * m))
    return report(name, d, thr, min(n, m), f"two-sample KS at level {alpha}")


def chi_square(observed, expected, alpha: float = 0.01, ddof: int = 0,
               name: str = "chi2") -> TestReport:
    """Pearson goodness of fit; categories with tiny expectation are pooled."""
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or np.any(o < 0) or np.any(e < 0) or e.sum() <= 0:
        raise ParameterError("observed and expected must be matching non-negative counts")
    o, e = _pool(o, e)
    stat = float(np.sum((o - e) ** 2 / e))
    df = o.size - 1 - ddof
    if df < 1:
        raise ParameterError("too few categories left after pooling for a chi-square test")
    thr = stats.chi2.ppf(1 - alpha, df)
    return report(name, stat, thr, int(o.sum()), f"chi-square, {df} dof, level {alpha}")


def _pool(o: np.ndarray, e: np.ndarray, min_expected: float = 5.0):
    order = np.argsort(e)
    o, e = o[order], e[order]
    oo, ee = [], []
    acc_o = acc_e = 0.0
    for oi, ei in zip(o, e):
        acc_o += oi
        acc_e += ei
        if acc_e >= min_expected:
            oo.append(acc_o)
            ee.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if ee:
            oo[-1] += acc_o
            ee[-1] += acc_e
        else:
            oo.append(acc_o)
            ee.append(acc_e)
    return np.array(oo), np.array(ee)


def chi_square_two_sample(a, b, alpha: float = 0.01, name: str = "chi2-2") -> TestReport:
    """Homogeneity test for two samples of integer-valued observations."""
    a, b = np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
    top = int(max(a.max(), b.max())) + 1
    ca = np.bincount(a, minlength=top).astype(float)
    cb = np.bincount(b, minlength=top).astype(float)
    # merge sparse upper categories
    tot = ca + cb
    keep = []
    acc_a = acc_b = 0.0
    for i in range(top):
        acc_a += ca[i]
        acc_b += cb[i]
        if acc_a + acc_b >= 10 or i == top - 1:
            keep.append((acc_a, acc_b))
            acc_a = acc_b = 0.0
    if len(keep) > 1 and sum(keep[-1]) < 10:
        last = keep.pop()
        keep[-1] = (keep[-1][0] + last[0], keep[-1][1] + last[1])
    table = np.array(keep).T
    if table.shape[1] < 2:
        return report(name, 0.0, 0.0, int(tot.sum()), "single category")
    stat, _, dof, _ = stats.chi2_contingency(table, correction=False)
    thr = stats.chi2.ppf(1 - alpha, dof)
    return report(name, stat, thr, int(tot.sum()), f"two-sample chi-square, {dof} dof, level {alpha}")


# ------------------------------------------------------- limiting functionals

def beta_identity_samples(theta: float, n: int, stream, tol: float = 1e-12) -> np.ndarray:
    """``n`` draws of ``sum_m y_m eps_m`` with GEM weights and fair coins."""
    _check_theta(theta)
    rng = as_generator(stream)
    out = np.empty(n)
    step = 100_000
    for start in range(0, n, step):
        m = min(step, n - start)
        w, _ = sample_gem_batch(theta, m, rng, tol)
        eps = rng.random(w.shape) < 0.5
        out[start:start + m] = (w * eps).sum(axis=1)
    return out


def beta_identity_sample(theta: float, stream, tol: float = 1e-12) -> float:
    """One draw of ``sum_m y_m eps_m``; distributed as Beta(theta/2, theta/2)."""
    return float(beta_identity_samples(theta, 1, stream, tol)[0])


def _angular_mean(f: Callable, log_modulus: np.ndarray, n_angle: int = 64) -> np.ndarray:
    """``(1/2pi) int f(e^{rho S} e^{i t}) dt`` by the periodic trapezoid rule."""
    t = 2 * np.pi * np.arange(n_angle) / n_angle
    with np.errstate(over="ignore", under="ignore"):
        r = np.exp(np.clip(log_modulus, -745, 709))
    e = np.exp(1j * t)[None, :]
    out = np.empty(r.size)
    step = 1 << 16
    for a in range(0, r.size, step):
        z = r[a:a + step, None] * e
        out[a:a + step] = np.asarray(f(z), dtype=float).mean(axis=1)
    return out


def cauchy_limit_integral(theta: float, rho: float, f: Callable, stream, n: int = 1,
                          tol: float = 1e-12) -> np.ndarray:
    """Draws of ``sum_m x_m (1/2pi) int f(e^{rho S_m} e^{i t}) dt`` with PD weights.

    ``S_m`` are i.i.d. standard Cauchy; ``f`` acts on complex arrays.
    """
    _check_theta(theta)
    rng = as_generator(stream)
    w, _ = sample_gem_batch(theta, n, rng, tol)
    rows, cols = np.nonzero(w)
    s = stable_variates(1.0, rows.size, rng)
    vals = _angular_mean(f, rho * s) * w[rows, cols]
    return np.bincount(rows, weights=vals, minlength=n)


def matrix_functional_samples(theta: float, N: int, law: LogStable, f: Callable, n: int,
                              stream) -> np.ndarray:
    """Draws of ``(1/N) int f d mu(M_N)`` for a log-stable law.

    The eigenvalues of a cycle of length ``l`` are the ``l`` roots of ``Z``;
    their average of ``f`` is computed by the periodic trapezoid rule on the
    circle of radius ``|Z|**(1/l)`` (exact for functions of the modulus).
    """
    rng = as_generator(stream)
    lengths, sample = feller_cycle_lengths(theta, N, n, rng)
    s = stable_variates(law.alpha, lengths.size, rng)
    lm = law.rho * lengths.astype(float) ** (1.0 / law.alpha - 1.0) * s
    vals = _angular_mean(f, lm) * lengths / N
    return np.bincount(sample, weights=vals, minlength=n)


def dirac_mass_limit_check(theta: float, alpha: float, rho: float, f: Callable, N: int,
                           n: int, stream, alpha_level: float = 0.01) -> TestReport:
    """Compare ``(1/N) int f d mu(M_N)`` with ``G f(0)``, ``G ~ Beta(theta/2, theta/2)``.

    Two-sample KS between matrix draws and draws of the limit.
    """
    if not 0 < alpha < 1:
        raise ParameterError("the collapse onto 0 needs alpha < 1")
    law = LogStable(alpha, rho)
    a = matrix_functional_samples(theta, N, law, f, n, stream.spawn(0))
    f0 = float(np.real(f(np.zeros(1, dtype=complex))[0]))
    b = f0 * beta_identity_samples(theta, n, stream.spawn(1))
    return ks_two_sample(a, b, alpha_level, name="dirac-mass-limit")
