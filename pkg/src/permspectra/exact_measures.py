"""Closed-form mean measures and correlation functions.

The mean eigenvalue measure of ``M_N`` is a finite mixture of the laws
``L_k`` of a uniform ``k``-th root of a product of ``k`` entries:
``theta * sum_k t(N, k, theta) L_k``.  The ``q``-point correlation measures
have a similar finite expansion, evaluated here for product test functions.

Test functions are described by :class:`Indicator` (radial interval times
angular arc), :class:`AtomFunction` (arbitrary function on the atoms of a
discrete law) and :class:`RadialFunction` (function of the modulus).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import CapabilityError, ParameterError
from .sampling_core import (
    DiracOne, DistributionSpec, LogStable, RootsOfUnity, UniformCircle,
    convolution_power_on_roots, discrete_angles, law_to_text, stable_cdf,
)


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def _check_theta(theta) -> None:
    if not theta > 0 or not math.isfinite(float(theta)):
        raise ParameterError("theta must be a positive finite number")


# ---------------------------------------------------------------- coefficients

def falling_ratio(N: int, s: int, theta):
    """``prod_{j=1}^{s} (N+1-j)/(N+theta-j)``, zero when ``s > N``."""
    if s > N:
        return Fraction(0) if _is_exact(theta) else 0.0
    if _is_exact(theta):
        out = Fraction(1)
        for j in range(1, s + 1):
            out *= Fraction(N + 1 - j) / (N + theta - j)
        return out
    theta = float(theta)
    return math.exp(math.lgamma(N + 1) - math.lgamma(N + 1 - s)
                    - math.lgamma(N + theta) + math.lgamma(N + theta - s))


def falling_ratio_array(N: int, s_max: int, theta: float) -> np.ndarray:
    """``falling_ratio(N, s, theta)`` for ``s = 0..s_max`` as floats."""
    s = np.arange(s_max + 1)
    with np.errstate(invalid="ignore"):
        v = np.exp(special.gammaln(N + 1) - special.gammaln(np.maximum(N + 1 - s, 1))
                   - special.gammaln(N + theta) + special.gammaln(np.maximum(N + theta - s, 1e-300)))
    return np.where(s <= N, v, 0.0)


def coefficient_t(N: int, k: int, theta):
    """``t(N, k, theta) = N(N-1)...(N-k+1) / ((N-1+theta)...(N-k+theta))``."""
    if not 1 <= k <= N:
        raise ParameterError("need 1 <= k <= N")
    _check_theta(theta)
    return falling_ratio(N, k, theta)


def coefficient_v(k: int, theta) -> float:
    """Supremum over ``N >= k`` of ``t(N, k, theta)``, plus one.

    Equal to 2 for ``theta >= 1``; otherwise the supremum is reached at
    ``N = k`` and equals ``k! Gamma(theta) / Gamma(k + theta)``.
    """
    if k < 1:
        raise ParameterError("k must be a positive integer")
    _check_theta(theta)
    if theta >= 1:
        return 2.0
    theta = float(theta)
    return 1.0 + math.exp(math.lgamma(k + 1) + math.lgamma(theta) - math.lgamma(k + theta))


def u_coefficient(N: int | float, theta, lam: dict):
    """Factorial moment ``E[prod_k a_k! / (a_k - lam_k)!]`` of the cycle counts.

    Parameters
    ----------
    N : int or inf
        Permutation size; ``inf`` gives the Poisson limit ``prod (theta/k)**lam_k``.
    lam : dict
        Map from cycle length ``k`` to the order ``lam_k``.
    """
    _check_theta(theta)
    if any(k < 1 or v < 0 for k, v in lam.items()):
        raise ParameterError("lam must map positive lengths to non-negative orders")
    s = sum(k * v for k, v in lam.items())
    exact = _is_exact(theta)
    one = Fraction(1) if exact else 1.0
    weight = one
    for k, v in lam.items():
        weight *= (theta / (Fraction(k) if exact else k)) ** v
    if math.isinf(N):
        return weight
    return falling_ratio(int(N), s, theta) * weight


def gem_moment(theta: float, r: float, s: float) -> float:
    """``E sum_m y_m**r (1 - y_1 - ... - y_m)**s`` for GEM(theta) weights.

    Equal to ``Gamma(r+1) Gamma(s+theta) theta / (Gamma(r+s+theta) (r+s))``.
    """
    _check_theta(theta)
    if r + s == 0:
        raise ParameterError("r + s must be non-zero")
    if r <= -1 or s + theta <= 0:
        raise ParameterError("need r > -1 and s + theta > 0")
    return theta / (r + s) * math.exp(math.lgamma(r + 1) + math.lgamma(s + theta)
                                      - math.lgamma(r + s + theta))


def pd_partition_expectation(theta, N: int, lengths: Sequence[int]):
    """Probability that the cycles of an Ewens permutation are the consecutive blocks
    ``{1..l_1}, {l_1+1..l_1+l_2}, ...``.

    Equal to ``theta**(p-1) prod (l_n - 1)! / ((theta+1)...(theta+N-1))``; at
    ``theta = 0`` it is 1 for a single block and 0 otherwise.
    """
    lengths = list(lengths)
    if any(l < 1 for l in lengths) or sum(lengths) != N:
        raise ParameterError("lengths must be positive and sum to N")
    p = len(lengths)
    if theta == 0:
        return Fraction(int(p == 1))
    if theta < 0:
        raise ParameterError("theta must be non-negative")
    if _is_exact(theta):
        theta = Fraction(theta)
        num = theta ** (p - 1) * math.prod(math.factorial(l - 1) for l in lengths)
        den = math.prod((theta + j for j in range(1, N)), start=Fraction(1))
        return num / den
    theta = float(theta)
    logv = ((p - 1) * math.log(theta) + sum(math.lgamma(l) for l in lengths)
            - sum(math.log(theta + j) for j in range(1, N)))
    return math.exp(logv)


def pair_correlation_phi(theta: float, x: float) -> float:
    """Two-point function of the limiting scaled-angle process for a uniform law.

    ``theta/(theta+1) + theta/x**2 * sum_{1 <= a <= |x|} a (1 - a/|x|)**(theta-1)``.
    """
    _check_theta(theta)
    if x == 0:
        raise ParameterError("the pair correlation is singular at 0")
    ax = abs(x)
    a = np.arange(1, int(math.floor(ax)) + 1, dtype=float)
    with np.errstate(divide="ignore"):
        terms = a * (1.0 - a / ax) ** (theta - 1.0)
    # the a = |x| term is 0 for theta > 1, a * 1 for theta = 1, infinite for theta < 1
    return theta / (theta + 1.0) + theta / ax ** 2 * float(np.sum(terms))


def pair_correlation_bin_average(theta: float, a: float, b: float) -> float:
    """Average of :func:`pair_correlation_phi` over ``[a, b]`` with ``0 < a < b``."""
    if not 0 < a < b:
        raise ParameterError("need 0 < a < b")
    pts = [float(n) for n in range(int(math.ceil(a)), int(math.floor(b)) + 1) if a < n < b]
    edges = [a] + pts + [b]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        v, _ = integrate.quad(lambda x: pair_correlation_phi(theta, x), lo, hi,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
        total += v
    return total / (b - a)


# ---------------------------------------------------------------- descriptors

@dataclass(frozen=True)
class Indicator:
    """``1{r_lo < |z| < r_hi} * 1{arg(z)/2pi mod 1 in [a_lo, a_hi)}``.

    The arc is taken modulo 1 and must have length at most 1; the default
    is the full circle.
    """

    r_lo: float = 0.0
    r_hi: float = math.inf
    a_lo: float = 0
    a_hi: float = 1

    def __post_init__(self):
        if not 0 <= self.r_lo < self.r_hi:
            raise ParameterError("need 0 <= r_lo < r_hi")
        if not 0 <= self.a_hi - self.a_lo <= 1:
            raise ParameterError("arc must have length in [0, 1]")

    @property
    def full_arc(self) -> bool:
        return self.a_hi - self.a_lo == 1

    def radial(self, modulus):
        return (modulus > self.r_lo) & (modulus < self.r_hi)

    def angular(self, angle):
        """Arc indicator; exact for Fraction angles and endpoints."""
        if self.full_arc:
            return np.ones_like(angle, dtype=bool) if isinstance(angle, np.ndarray) else True
        if isinstance(angle, np.ndarray):
            return ((angle - self.a_lo) % 1.0) < (self.a_hi - self.a_lo)
        return ((angle - self.a_lo) % 1) < (self.a_hi - self.a_lo)

    def __call__(self, modulus, angle):
        return self.radial(modulus) & self.angular(angle)


def RadialIndicator(r_lo: float, r_hi: float) -> Indicator:
    return Indicator(r_lo=r_lo, r_hi=r_hi)


def AngularIndicator(a_lo, a_hi) -> Indicator:
    return Indicator(a_lo=a_lo, a_hi=a_hi)


@dataclass(frozen=True)
class AtomFunction:
    """``fn(angle)`` on unit-modulus atoms, ``angle`` a Fraction in ``[0, 1)``."""

    fn: Callable


@dataclass(frozen=True)
class RadialFunction:
    """``fn(modulus)``, integrated by quadrature for continuous laws."""

    fn: Callable


def _discrete_atoms(law: DistributionSpec, k: int):
    """Atoms ``(angle as Fraction, weight)`` of ``L_k`` for a discrete law."""
    r, p = discrete_angles(law)
    pk = convolution_power_on_roots(p, k)
    out = []
    for j, w in enumerate(pk):
        if w == 0:
            continue
        wk = w / k
        for t in range(k):
            out.append((Fraction(j + t * r, r * k) % 1, wk))
    return out


def integral_against_Lk(law: DistributionSpec, k: int, f, full_output: bool = False):
    """``int f dL_k``.

    Exact finite sums for discrete laws; closed forms for indicators under
    continuous laws; adaptive quadrature for radial functions under
    log-stable laws.  With ``full_output`` the pair ``(value, abs_error)``
    is returned.
    """
    if k < 1:
        raise ParameterError("k must be a positive integer")
    err = 0.0
    if isinstance(law, (DiracOne, RootsOfUnity)):
        atoms = _discrete_atoms(law, k)
        if isinstance(f, Indicator):
            if not f.radial(1.0):
                val = atoms[0][1] * 0
            else:
                val = sum((w for a, w in atoms if f.angular(a)), atoms[0][1] * 0)
        elif isinstance(f, AtomFunction):
            val = sum(w * f.fn(a) for a, w in atoms)
        elif isinstance(f, RadialFunction):
            val = f.fn(1.0)
        else:
            raise CapabilityError(f"unsupported test function {f!r}")
    elif isinstance(f, AtomFunction):
        raise CapabilityError("atom evaluation needs a discrete law")
    elif isinstance(law, UniformCircle):
        if isinstance(f, Indicator):
            val = float(f.radial(1.0)) * float(f.a_hi - f.a_lo)
        else:
            val = float(f.fn(1.0))
    elif isinstance(law, LogStable):
        scale = law.rho * k ** (1.0 / law.alpha - 1.0)
        if isinstance(f, Indicator):
            val = _log_stable_radial_prob(law, scale, f.r_lo, f.r_hi) * float(f.a_hi - f.a_lo)
        else:
            val, err = _log_stable_radial_quad(law, scale, f.fn)
    else:
        raise ParameterError(f"unknown law {law!r}")
    return (val, err) if full_output else val


def _log_stable_radial_prob(law: LogStable, scale: float, r_lo: float, r_hi: float) -> float:
    lo = -math.inf if r_lo == 0 else math.log(r_lo)
    hi = math.inf if math.isinf(r_hi) else math.log(r_hi)
    if scale == 0:
        return float(lo < 0 < hi)
    return float(stable_cdf(hi / scale, law.alpha) - stable_cdf(lo / scale, law.alpha))


def _log_stable_radial_quad(law: LogStable, scale: float, fn) -> tuple[float, float]:
    from scipy import stats

    if scale == 0:
        return float(fn(1.0)), 0.0
    if law.alpha == 2.0:
        pdf = lambda s: math.exp(-s * s / 4) / math.sqrt(4 * math.pi)
    elif law.alpha == 1.0:
        pdf = lambda s: 1.0 / (math.pi * (1 + s * s))
    else:
        pdf = lambda s: float(stats.levy_stable.pdf(s, law.alpha, 0.0))

    def integrand(s):
        with np.errstate(over="ignore", under="ignore"):
            return float(fn(math.exp(min(scale * s, 700.0)))) * pdf(s)

    v1, e1 = integrate.quad(integrand, -np.inf, 0, limit=200)
    v2, e2 = integrate.quad(integrand, 0, np.inf, limit=200)
    return v1 + v2, e1 + e2


# ---------------------------------------------------------------- mean measure

@dataclass(frozen=True)
class MixtureMeasure:
    """``sum_k weights[i] * L_{ks[i]}`` for one argument law.

    ``tail_bound`` is the total weight left out when the mixture is truncated.
    """

    ks: np.ndarray
    weights: np.ndarray
    law: DistributionSpec
    tail_bound: float = 0.0

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, f) -> float:
        return sum(w * integral_against_Lk(self.law, int(k), f) for k, w in zip(self.ks, self.weights))

    def atoms(self) -> dict:
        """Atomic form ``{angle (Fraction): weight}`` for a discrete law."""
        out: dict = {}
        for k, w in zip(self.ks, self.weights):
            for a, v in _discrete_atoms(self.law, int(k)):
                out[a] = out.get(a, 0.0) + float(w) * float(v)
        return out

    def to_json(self) -> str:
        tag = law_to_text(self.law)
        rows = [{"k": int(k), "weight": float(w), "law_tag": tag} for k, w in zip(self.ks, self.weights)]
        return json.dumps({"terms": rows, "tail_bound": self.tail_bound}, sort_keys=True)


def mean_measure(N: int | float, theta: float, law: DistributionSpec,
                 k_max: int | None = None) -> MixtureMeasure:
    """Mean eigenvalue measure ``theta * sum_k t(N, k, theta) L_k``.

    For ``N = inf`` the weights are all ``theta`` and the sum is cut at
    ``k_max``; the omitted weight is infinite and reported as such.
    """
    _check_theta(theta)
    if math.isinf(N):
        if k_max is None:
            raise ParameterError("k_max is required for N = inf")
        ks = np.arange(1, k_max + 1)
        return MixtureMeasure(ks, np.full(k_max, float(theta)), law, math.inf)
    N = int(N)
    if N < 1:
        raise ParameterError("N must be positive")
    top = N if k_max is None else min(N, k_max)
    ks = np.arange(1, top + 1)
    t = falling_ratio_array(N, top, float(theta))[1:]
    w = float(theta) * t
    tail = float(theta) * float(np.sum(falling_ratio_array(N, N, float(theta))[top + 1:]))
    return MixtureMeasure(ks, w, law, tail)


# ------------------------------------------------------------ q-correlations

@dataclass(frozen=True)
class LambdaFamily:
    """Multiset of blocks ``(k, r)``: ``r`` marked points on one cycle of length ``k``.

    ``counts[(k, r)]`` is the number of such blocks.
    """

    counts: tuple

    @property
    def as_dict(self) -> dict:
        return dict(self.counts)

    @property
    def size(self) -> int:
        """Total length ``sum k * lam_{k,r}`` of the cycles involved."""
        return sum(k * c for (k, r), c in self.counts)

    @property
    def order(self) -> int:
        return sum(r * c for (k, r), c in self.counts)


def enumerate_lambda_families(q: int, N: int | float, k_max: int | None = None) -> list:
    """All families with ``sum r lam_{k,r} = q`` and ``sum k lam_{k,r} <= N``.

    For ``N = inf`` cycle lengths are limited to ``k_max``.
    """
    if not 1 <= q <= 4:
        raise CapabilityError("families are enumerated for q <= 4 only")
    if math.isinf(N):
        if k_max is None:
            raise ParameterError("k_max is required for N = inf")
        kcap, budget = k_max, math.inf
    else:
        kcap, budget = int(N), int(N)
    out = []

    # blocks (r, k) are listed in non-increasing order so each multiset appears once
    def rec(remaining, budget_left, top, blocks):
        if remaining == 0:
            counts = {}
            for b in blocks:
                counts[b] = counts.get(b, 0) + 1
            out.append(LambdaFamily(tuple(sorted(counts.items()))))
            return
        for r in range(min(remaining, top[0]), 0, -1):
            k_hi = min(kcap, top[1] if r == top[0] else kcap)
            for k in range(1, k_hi + 1):
                if k > budget_left:
                    break
                rec(remaining - r, budget_left - k, (r, k), blocks + [(k, r)])

    rec(q, budget, (q, kcap), [])
    return out


def _set_partitions(items: list):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _distinct_sum(values: list) -> float:
    """``sum over distinct index tuples of prod_i values[i][t_i]`` for up to 3 factors."""
    if len(values) == 1:
        return values[0].sum(axis=-1)
    if len(values) == 2:
        a, b = values
        return a.sum(-1) * b.sum(-1) - (a * b).sum(-1)
    if len(values) == 3:
        a, b, c = values
        S = lambda x: x.sum(-1)
        return (S(a) * S(b) * S(c) - S(a * b) * S(c) - S(a * c) * S(b) - S(b * c) * S(a)
                + 2 * S(a * b * c))
    raise CapabilityError("at most three points per cycle are supported")


def _arc_breakpoints(fs: Sequence[Indicator], k: int) -> np.ndarray:
    """Rotations in ``[0, 1/k)`` where some root crosses an arc endpoint."""
    pts = [0.0, 1.0 / k]
    for f in fs:
        if not f.full_arc:
            for e in (float(f.a_lo), float(f.a_hi)):
                pts.append((e % (1.0 / k)))
    return np.unique(np.array(pts))


def _exact_arc_values(f: Indicator, j: np.ndarray, r: int, k: int) -> np.ndarray:
    """Arc indicator at the angles ``(j/r + t)/k``, ``t = 0..k-1``, in rational arithmetic."""
    if f.full_arc:
        return np.ones((j.size, k))
    lo, width = Fraction(f.a_lo), Fraction(f.a_hi) - Fraction(f.a_lo)
    return np.array([[float((Fraction(int(jj) + t * r, r * k) - lo) % 1 < width)
                      for t in range(k)] for jj in j])


def _block_integral(law: DistributionSpec, k: int, fs: Sequence) -> float:
    """``int sum_{distinct roots} prod f_i(w_i)`` for one cycle of length ``k``."""
    r = len(fs)
    if r > k:
        return 0.0
    if not all(isinstance(f, Indicator) for f in fs):
        raise CapabilityError("q-correlations take Indicator test functions")
    lo = max(f.r_lo for f in fs)
    hi = min(f.r_hi for f in fs)
    if lo >= hi:
        return 0.0
    t = np.arange(k)
    if isinstance(law, (DiracOne, RootsOfUnity)):
        if not lo < 1.0 < hi:
            return 0.0
        rr, p = discrete_angles(law)
        pk = np.asarray(convolution_power_on_roots(p, k), dtype=float)
        j = np.nonzero(pk)[0]
        # atoms are rational; compare with the arc endpoints exactly
        vals = [_exact_arc_values(f, j, rr, k) for f in fs]
        return float(np.dot(pk[j], _distinct_sum(vals)))
    if isinstance(law, UniformCircle):
        radial = float(lo < 1.0 < hi)
    elif isinstance(law, LogStable):
        radial = _log_stable_radial_prob(law, law.rho * k ** (1.0 / law.alpha - 1.0), lo, hi)
    else:
        raise ParameterError(f"unknown law {law!r}")
    if radial == 0.0:
        return 0.0
    if all(f.full_arc for f in fs):
        return radial * math.perm(k, r)
    # uniform rotation phi in [0, 1/k): the integrand is constant between breakpoints
    bp = _arc_breakpoints(fs, k)
    mid = 0.5 * (bp[1:] + bp[:-1])
    ang = (mid[:, None] + t[None, :] / k) % 1.0
    vals = [f.angular(ang).astype(float) for f in fs]
    return radial * k * float(np.dot(np.diff(bp), _distinct_sum(vals)))


def q_correlation(N: int | float, theta: float, law: DistributionSpec, fs: Sequence,
                  k_max: int | None = None) -> float:
    """``q``-point correlation measure of the eigenvalues against ``f_1 x ... x f_q``.

    Counts ordered ``q``-tuples of distinct eigenvalues (with multiplicity)
    ``(w_1, ..., w_q)`` weighted by ``prod f_i(w_i)``, in expectation.  For
    ``N = inf`` the correlation of the limiting process is returned with cycle
    lengths cut at ``k_max``.
    """
    _check_theta(theta)
    q = len(fs)
    if not 1 <= q <= 3:
        raise CapabilityError("q-correlations are implemented for q <= 3")
    infinite = math.isinf(N)
    if infinite and k_max is None:
        raise ParameterError("k_max is required for N = inf")
    K = k_max if infinite else (int(N) if k_max is None else min(int(N), k_max))
    ks = np.arange(1, K + 1)
    total = 0.0
    for part in _set_partitions(list(range(q))):
        conv = None
        for block in part:
            h = np.array([theta / k * _block_integral(law, int(k), [fs[i] for i in block])
                          for k in ks])
            conv = h if conv is None else np.convolve(conv, h)
        # conv[i] collects tuples of block lengths summing to i + len(part)
        s = np.arange(conv.size) + len(part)
        if infinite:
            total += float(conv.sum())
        else:
            total += float(np.dot(falling_ratio_array(int(N), int(s[-1]), float(theta))[s], conv))
    return total


def family_weight(N: int | float, theta, family: LambdaFamily):
    """Coefficient of ``sum_sigma sigma.(tensor of L_k^[r])`` for one family.

    ``falling_ratio(N, size) * prod_{k,r} (theta/(r! k))**lam / lam!``.
    """
    exact = _is_exact(theta)
    w = Fraction(1) if exact else 1.0
    for (k, r), c in family.counts:
        base = (Fraction(theta) / (math.factorial(r) * k)) if exact else theta / (math.factorial(r) * k)
        w *= base ** c / math.factorial(c)
    if math.isinf(N):
        return w
    return w * falling_ratio(int(N), family.size, theta)
