"""Ewens permutations, their coupling across sizes, and the Feller coupling.

A permutation of ``{1..N}`` is built from a Chinese-restaurant trace
``m_1, ..., m_N``: step ``j`` either opens a new cycle (``m_j = j``) or
inserts ``j`` immediately before ``m_j < j`` in its cycle.  Since every
step only extends the previous one, projecting a trace of length ``N1``
to ``N2`` amounts to truncation, which realises the coupling of all sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .sampling_core import (
    RandomStream, as_generator, sample_gem, sample_poisson_dirichlet, _check_theta,
)


@dataclass(frozen=True)
class CrpTrace:
    """Choices ``m_1..m_N`` (1-based) of the sequential construction."""

    choices: tuple

    @property
    def N(self) -> int:
        return len(self.choices)

    def __post_init__(self):
        for j, m in enumerate(self.choices, start=1):
            if not 1 <= m <= j:
                raise ParameterError(f"choice m_{j}={m} outside 1..{j}")


@dataclass(frozen=True)
class CycleDecomposition:
    """Cycles of a permutation of ``{1..N}``.

    Each cycle starts at its smallest element and lists ``k, s(k), s(s(k)), ...``;
    cycles are ordered by their smallest element.
    """

    N: int
    cycles: tuple

    @classmethod
    def from_successor(cls, succ: Sequence[int]) -> "CycleDecomposition":
        """Build from ``succ[k-1] = s(k)`` (1-based values)."""
        n = len(succ)
        seen = np.zeros(n + 1, dtype=bool)
        cycles = []
        for start in range(1, n + 1):
            if seen[start]:
                continue
            cyc = [start]
            seen[start] = True
            k = int(succ[start - 1])
            while k != start:
                if seen[k]:
                    raise ParameterError("successor map is not a permutation")
                seen[k] = True
                cyc.append(k)
                k = int(succ[k - 1])
            cycles.append(tuple(cyc))
        return cls(n, tuple(cycles))

    @classmethod
    def from_text(cls, text: str) -> "CycleDecomposition":
        """Parse ``"(1 3 7 4 5)(2 8)(6)"``."""
        body = text.strip()
        if not body.startswith("(") or not body.endswith(")"):
            raise ParameterError(f"malformed cycle text {text!r}")
        cycles = [tuple(int(x) for x in c.split()) for c in body[1:-1].split(")(")]
        n = sum(len(c) for c in cycles)
        succ = [0] * n
        for c in cycles:
            for a, b in zip(c, c[1:] + c[:1]):
                if not 1 <= a <= n or succ[a - 1]:
                    raise ParameterError(f"malformed cycle text {text!r}")
                succ[a - 1] = b
        return cls.from_successor(succ)

    def successor(self) -> np.ndarray:
        """``succ[k-1] = s(k)``."""
        succ = np.zeros(self.N, dtype=np.int64)
        for c in self.cycles:
            for a, b in zip(c, c[1:] + c[:1]):
                succ[a - 1] = b
        return succ

    def lengths(self) -> np.ndarray:
        return np.array([len(c) for c in self.cycles], dtype=np.int64)

    def __str__(self) -> str:
        return "".join("(" + " ".join(map(str, c)) + ")" for c in self.cycles)


def sample_crp_prefix(theta: float, N: int, stream: RandomStream) -> CrpTrace:
    """Choices ``m_1..m_N`` with ``P[m_j = j] = theta/(theta+j-1)``.

    The ``j``-th choice is a function of the ``j``-th indexed uniform of the
    stream, so a longer prefix from the same stream extends a shorter one.
    """
    _check_theta(theta)
    if N < 0:
        raise ParameterError("N must be non-negative")
    return CrpTrace(tuple(int(m) for m in _crp_choices(theta, 1, N, stream)))


def _crp_choices(theta: float, first: int, last: int, stream: RandomStream) -> np.ndarray:
    j = np.arange(first, last + 1, dtype=np.int64)
    u = stream.indexed_uniforms(first - 1, last) * (theta + j - 1)
    m = np.floor(u).astype(np.int64) + 1
    return np.where(u < j - 1, np.minimum(m, j - 1), j)


def crp_to_permutation(trace: CrpTrace) -> CycleDecomposition:
    """Apply the insertion rule to every choice of the trace."""
    n = trace.N
    succ = np.zeros(n + 1, dtype=np.int64)
    pred = np.zeros(n + 1, dtype=np.int64)
    for j, m in enumerate(trace.choices, start=1):
        if m == j:
            succ[j] = pred[j] = j
        else:
            p = pred[m]
            succ[p] = j
            pred[j] = p
            succ[j] = m
            pred[m] = j
    return CycleDecomposition.from_successor(succ[1:])


def sample_crp_batch(theta: float, N: int, n: int, stream) -> np.ndarray:
    """Choices of ``n`` independent traces of length ``N``, shape ``(n, N)``."""
    _check_theta(theta)
    rng = as_generator(stream)
    j = np.arange(1, N + 1, dtype=np.int64)
    u = rng.random((n, N)) * (theta + j - 1)
    m = np.floor(u).astype(np.int64) + 1
    return np.where(u < j - 1, np.minimum(m, j - 1), j)


def crp_successors(choices: np.ndarray) -> np.ndarray:
    """Row-wise insertion rule: ``succ[i, k-1]`` is the image of ``k`` for trace ``i``."""
    choices = np.asarray(choices, dtype=np.int64)
    n, N = choices.shape
    succ = np.zeros((n, N + 1), dtype=np.int64)
    pred = np.zeros((n, N + 1), dtype=np.int64)
    rows = np.arange(n)
    for j in range(1, N + 1):
        m = choices[:, j - 1]
        new = m == j
        p = np.where(new, j, pred[rows, m])
        succ[rows, p] = j
        pred[rows, j] = p
        succ[rows, j] = np.where(new, j, m)
        pred[rows, m] = np.where(new, pred[rows, m], j)
        pred[rows[new], j] = j
    return succ[:, 1:]


def project(sigma: CycleDecomposition, N: int) -> CycleDecomposition:
    """Remove ``N+1..N1`` from the cycles of ``sigma``."""
    if N > sigma.N:
        raise ParameterError(f"cannot project a permutation of size {sigma.N} to {N}")
    if N < 0:
        raise ParameterError("N must be non-negative")
    cycles = []
    for c in sigma.cycles:
        kept = tuple(k for k in c if k <= N)
        if kept:
            cycles.append(kept)
    return CycleDecomposition(N, tuple(cycles))


def ewens_probability(sigma: CycleDecomposition, theta):
    """``theta**(c-1) / ((theta+1)...(theta+N-1))``; exact for rational ``theta``."""
    c = len(sigma.cycles)
    if isinstance(theta, (int, Fraction)):
        theta = Fraction(theta)
        if theta <= 0:
            raise ParameterError("theta must be positive")
        den = Fraction(1)
        for j in range(1, sigma.N):
            den *= theta + j
        return theta ** (c - 1) / den
    _check_theta(theta)
    logp = (c - 1) * math.log(theta) - sum(math.log(theta + j) for j in range(1, sigma.N))
    return math.exp(logp)


def cycle_statistics(sigma: CycleDecomposition) -> dict:
    """Summary of the cycle type.

    Returns
    -------
    dict
        ``lengths`` (in cycle order), ``counts`` (``counts[k]`` is the number of
        cycles of length ``k``, index 0 unused) and ``n_cycles``.
    """
    lengths = sigma.lengths()
    counts = np.bincount(lengths, minlength=sigma.N + 1)
    return {"lengths": lengths, "counts": counts, "n_cycles": int(lengths.size)}


def cycle_labels(trace: CrpTrace) -> np.ndarray:
    """``label[j-1]`` is the index of the cycle holding ``j``, in order of opening."""
    labels = np.empty(trace.N, dtype=np.int64)
    nxt = 0
    for j, m in enumerate(trace.choices, start=1):
        if m == j:
            labels[j - 1] = nxt
            nxt += 1
        else:
            labels[j - 1] = labels[m - 1]
    return labels


# ---------------------------------------------------------- Feller coupling

@dataclass(frozen=True)
class FellerSequence:
    """Bernoulli sequence ``xi_1..xi_N`` and its spacing counts.

    ``b[k]`` counts spacings of length ``k`` between consecutive ones of
    ``(xi_1, ..., xi_N, 1)``; ``c[k]`` does the same without the appended 1.
    """

    xi: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def N(self) -> int:
        return int(self.xi.size)

    @property
    def last_spacing(self) -> int:
        """The spacing ``k0`` ending at the appended one."""
        return int(np.nonzero(self.b - self.c)[0][0])


def sample_feller(theta: float, N: int, stream) -> FellerSequence:
    """Independent ``xi_r ~ Bernoulli(theta/(theta+r-1))`` and spacing counts."""
    _check_theta(theta)
    if N < 1:
        raise ParameterError("N must be positive")
    rng = as_generator(stream)
    r = np.arange(1, N + 1)
    xi = (rng.random(N) * (theta + r - 1) < theta).astype(np.int8)
    ones = np.concatenate([np.nonzero(xi)[0] + 1, [N + 1]])
    gaps = np.diff(ones)
    b = np.bincount(gaps, minlength=N + 1)
    c = np.bincount(gaps[:-1], minlength=N + 1)
    return FellerSequence(xi, b, c)


def feller_cycle_lengths(theta: float, N: int, n: int, stream):
    """Cycle lengths of ``n`` independent Ewens(theta) permutations of size ``N``.

    Uses the Feller coupling with the gap to the next one drawn by inversion:
    starting from a one at position ``a``, the next one lies beyond ``b`` with
    probability ``Gamma(b)Gamma(a+theta) / (Gamma(a)Gamma(b+theta))``.

    Returns
    -------
    lengths : ndarray of int
        All cycle lengths, concatenated sample by sample.
    sample : ndarray of int
        Sample index of each entry of ``lengths``.
    """
    from scipy.special import gammaln

    _check_theta(theta)
    rng = as_generator(stream)
    r = np.arange(1, N + 2, dtype=float)
    F = gammaln(r) - gammaln(r + theta)           # decreasing in r
    negF = -F
    pos = np.ones(n, dtype=np.int64)             # xi_1 = 1
    alive = np.arange(n)
    out_len, out_idx = [], []
    while alive.size:
        a = pos[alive]
        u = rng.random(alive.size)
        target = F[a - 1] + np.log(u)
        # smallest b > a with F(b) <= target; positions above N mean no more ones
        b = np.searchsorted(negF, -target, side="left") + 1
        b = np.maximum(b, a + 1)
        nxt = np.minimum(b, N + 1)
        out_len.append(nxt - a)
        out_idx.append(alive)
        pos[alive] = nxt
        alive = alive[nxt <= N]
    lengths = np.concatenate(out_len)
    sample = np.concatenate(out_idx)
    order = np.argsort(sample, kind="stable")
    return lengths[order], sample[order]


# ------------------------------------------------------ virtual permutation

@dataclass(frozen=True)
class CoupledWeights:
    """Normalised cycle lengths along a growing trace.

    Attributes
    ----------
    checkpoints : tuple of int
        Sizes ``N`` at which ``y`` was recorded.
    y : tuple of ndarray
        ``y[i][m] = l_{N,m} / N`` at ``checkpoints[i]``, cycles in order of opening.
    sup_ratio : ndarray
        ``max_N l_{N,m} / N`` over all sizes up to the final one.
    limit_estimate : ndarray
        ``y`` at the final size, the estimate of the limiting weights.
    """

    checkpoints: tuple
    y: tuple
    sup_ratio: np.ndarray
    limit_estimate: np.ndarray


def extend_virtual(trace: CrpTrace, to_N: int, theta: float, stream: RandomStream,
                   checkpoints: Iterable[int] | None = None):
    """Extend ``trace`` to length ``to_N`` and record cycle weights.

    Returns
    -------
    CrpTrace, CoupledWeights
    """
    _check_theta(theta)
    if to_N < trace.N:
        raise ParameterError("to_N must not be smaller than the current length")
    new = _crp_choices(theta, trace.N + 1, to_N, stream) if to_N > trace.N else []
    full = CrpTrace(tuple(trace.choices) + tuple(int(m) for m in new))
    labels = cycle_labels(full)
    cps = sorted(set(checkpoints or [])) + [to_N]
    cps = sorted(set(c for c in cps if 1 <= c <= to_N))
    ys = tuple(np.bincount(labels[:c]) / c for c in cps)
    # l_{N,m}/N is maximal at the sizes where cycle m just grew
    j = np.arange(1, to_N + 1)
    rank = np.zeros(to_N, dtype=np.int64)
    seen = np.zeros(labels.max() + 1 if to_N else 0, dtype=np.int64)
    for i, lab in enumerate(labels):
        seen[lab] += 1
        rank[i] = seen[lab]
    sup = np.zeros(seen.size)
    np.maximum.at(sup, labels, rank / j)
    weights = CoupledWeights(tuple(cps), ys, sup, ys[-1] if ys else np.zeros(0))
    return full, weights


# -------------------------------------------------------- circle construction

def sample_circle_construction(theta: float, N: int, stream, tol: float = 1e-12) -> CycleDecomposition:
    """Ewens(theta) permutation from uniform points on circles of PD(theta) lengths.

    ``N`` points are dropped uniformly on circles whose lengths follow PD(theta)
    (a single circle when ``theta == 0``).  Each point maps to the next point
    counterclockwise on its own circle.  The residual mass left by the
    truncation at ``tol`` is kept as one extra circle.
    """
    if N < 1:
        raise ParameterError("N must be positive")
    if theta == 0:
        lam = np.array([1.0])
    else:
        pd = sample_poisson_dirichlet(theta, stream.spawn(0), tol)
        lam = np.append(pd.weights, pd.tail) if pd.tail > 0 else pd.weights
    rng = stream.spawn(1).generator()
    circle = rng.choice(lam.size, size=N, p=lam / lam.sum())
    where = rng.random(N)
    succ = np.empty(N, dtype=np.int64)
    for c in np.unique(circle):
        pts = np.nonzero(circle == c)[0]
        pts = pts[np.argsort(where[pts])]
        succ[pts] = np.roll(pts, -1) + 1
    return CycleDecomposition.from_successor(succ)
