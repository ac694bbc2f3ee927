"""Brute-force enumeration over all permutations of small size.

These routines use their own cycle finder and naive convolutions so that
they stay independent of the closed forms they are compared against.
With a rational ``theta`` and rational probabilities all results are exact
Fractions.
"""

from __future__ import annotations

import io
import itertools
import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import CapabilityError, ParameterError
from .sampling_core import DistributionSpec, discrete_angles

MAX_N = 8


def _cycles_of(perm: Sequence[int]) -> list:
    """Cycles of ``k -> perm[k-1]`` (1-based values), smallest element first."""
    n = len(perm)
    seen = [False] * (n + 1)
    out = []
    for s in range(1, n + 1):
        if seen[s]:
            continue
        c = []
        k = s
        while not seen[k]:
            seen[k] = True
            c.append(k)
            k = perm[k - 1]
        out.append(tuple(c))
    return out


@dataclass(frozen=True)
class WeightedPermutationTable:
    """All permutations of ``{1..N}`` with their Ewens probabilities.

    ``rows[i] = (perm, cycles, probability)`` with ``perm[k-1]`` the image of ``k``.
    """

    N: int
    theta: object
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# ewens-enumeration N={self.N} theta={self.theta}\n")
        buf.write("cycles,probability\n")
        for _, cycles, p in self.rows:
            text = "".join("(" + " ".join(map(str, c)) + ")" for c in cycles)
            buf.write(f"{text},{p}\n")
        return buf.getvalue()


def _to_exact(theta):
    if isinstance(theta, (int, Fraction)):
        return Fraction(theta)
    return float(theta)


def enumerate_ewens(N: int, theta) -> WeightedPermutationTable:
    """Every permutation with probability ``theta**c / (theta (theta+1) ... (theta+N-1))``."""
    if not 1 <= N <= MAX_N:
        raise CapabilityError(f"enumeration is limited to N <= {MAX_N}")
    theta = _to_exact(theta)
    if not theta > 0:
        raise ParameterError("theta must be positive")
    rising = theta
    for j in range(1, N):
        rising = rising * (theta + j)
    rows = []
    for perm in itertools.permutations(range(1, N + 1)):
        cycles = _cycles_of(perm)
        rows.append((perm, tuple(cycles), theta ** len(cycles) / rising))
    return WeightedPermutationTable(N, theta, tuple(rows))


def _naive_power(p: Sequence, l: int) -> list:
    r = len(p)
    cur = [p[0] * 0 + 1] + [p[0] * 0] * (r - 1)
    for _ in range(l):
        nxt = [p[0] * 0] * r
        for i in range(r):
            for j in range(r):
                nxt[(i + j) % r] += cur[i] * p[j]
        cur = nxt
    return cur


def _cycle_root_law(law: DistributionSpec, l: int) -> list:
    """Joint law of the ``l`` eigen-angles of one cycle: list of (prob, angles)."""
    r, p = discrete_angles(law)
    out = []
    for j, w in enumerate(_naive_power(p, l)):
        if w == 0:
            continue
        out.append((w, [Fraction(j + t * r, r * l) % 1 for t in range(l)]))
    return out


def _cycle_type_table(N: int, theta) -> dict:
    # the type tag keeps Fraction(1, 2) and 0.5 apart in the cache
    return dict(_cycle_type_cached(N, theta, type(theta).__name__))


@functools.lru_cache(maxsize=64)
def _cycle_type_cached(N: int, theta, _tag: str) -> dict:
    table = enumerate_ewens(N, theta)
    types: dict = {}
    for _, cycles, p in table.rows:
        key = tuple(sorted(len(c) for c in cycles))
        types[key] = types.get(key, 0) + p
    return types


def exact_mean_measure(N: int, theta, law: DistributionSpec) -> dict:
    """``{angle: expected multiplicity}`` of the eigenvalues of ``M_N``."""
    out: dict = {}
    for lengths, pt in _cycle_type_table(N, theta).items():
        for l in lengths:
            for w, angles in _cycle_root_law(law, l):
                for a in angles:
                    out[a] = out.get(a, 0) + pt * w
    return out


def exact_correlation(N: int, theta, law: DistributionSpec, fs: Sequence) -> object:
    """``E sum_{i != j} f_1(w_i) f_2(w_j)`` (or ``E sum_i f_1(w_i)`` for one function).

    ``fs`` are callables of the exact angle (a Fraction in ``[0, 1)``).
    """
    if N > 6:
        raise CapabilityError("exact correlations are limited to N <= 6")
    fs = [_as_angle_fn(f) for f in fs]
    q = len(fs)
    if q not in (1, 2):
        raise CapabilityError("exact correlations are limited to q <= 2")
    total = 0
    for lengths, pt in _cycle_type_table(N, theta).items():
        laws = [_cycle_root_law(law, l) for l in lengths]
        # per cycle: E sum f, and for q = 2 also E sum_{t != t'} f1 f2 within the cycle
        singles = [[sum(w * sum(f(a) for a in angles) for w, angles in lw) for f in fs]
                   for lw in laws]
        if q == 1:
            total += pt * sum(s[0] for s in singles)
            continue
        f1, f2 = fs
        within = sum(sum(w * sum(f1(a) * f2(b) for i, a in enumerate(angles)
                                 for j, b in enumerate(angles) if i != j)
                         for w, angles in lw) for lw in laws)
        across = sum(singles[m][0] * singles[n][1]
                     for m in range(len(laws)) for n in range(len(laws)) if m != n)
        total += pt * (within + across)
    return total


def _as_angle_fn(f):
    # Indicator descriptors act on (modulus, angle); the atoms here have modulus 1
    if hasattr(f, "angular") and hasattr(f, "radial"):
        on_circle = bool(f.radial(1.0))
        return lambda a: int(on_circle and f.angular(a))
    return f


def exact_factorial_moment(N: int, theta, lam: dict):
    """``E prod_k a_k! / (a_k - lam_k)!`` for the cycle counts ``a_k``."""
    total = 0
    for lengths, pt in _cycle_type_table(N, theta).items():
        term = 1
        for k, v in lam.items():
            a = lengths.count(k)
            term *= math.perm(a, v) if a >= v else 0
        total += pt * term
    return total


def exact_block_probability(N: int, theta, lengths: Sequence[int]):
    """Probability that the cycle supports are the consecutive blocks given by ``lengths``."""
    blocks = []
    start = 1
    for l in lengths:
        blocks.append(frozenset(range(start, start + l)))
        start += l
    target = set(blocks)
    total = 0
    for _, cycles, p in enumerate_ewens(N, theta).rows:
        if {frozenset(c) for c in cycles} == target:
            total += p
    return total


def cycle_type_law(N: int, theta) -> dict:
    """``{sorted cycle lengths: probability}``."""
    return _cycle_type_table(N, theta)
