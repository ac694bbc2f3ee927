"""Spectra of generalised permutation matrices and their point processes.

For a permutation with cycles ``C_m`` of length ``l_m`` and cycle products
``Z_m``, the matrix ``M[j, k] = z_j 1{j = s(k)}`` has the ``l_m``-th roots of
every ``Z_m`` as eigenvalues.  All routines here work from that cycle data.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import CapabilityError, ParameterError, PreconditionError
from .sampling_core import (
    DiracOne, DistributionSpec, LogStable, RootsOfUnity, ShiftLaw, UniformCircle,
    as_generator, cycle_products, discrete_angles, is_discrete, sample_gem_batch,
    stable_cdf, _check_theta,
)
from .virtual_permutation import CycleDecomposition, feller_cycle_lengths

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class CycleData:
    """Cycle lengths with the log-modulus and angle of each cycle product.

    ``angle`` is the argument divided by ``2 pi`` in ``[0, 1)``.  For
    discrete laws ``angle_num / angle_den`` is the exact rational angle.
    """

    lengths: np.ndarray
    log_modulus: np.ndarray
    angle: np.ndarray
    angle_num: np.ndarray | None = None
    angle_den: int | None = None

    @property
    def N(self) -> int:
        return int(np.sum(self.lengths))

    @property
    def exact(self) -> bool:
        return self.angle_num is not None and bool(np.all(self.log_modulus == 0))


@dataclass(frozen=True)
class EigenPointMeasure:
    """Finite point measure with multiplicities.

    ``points`` are complex eigenvalues (``kind="complex"``) or real scaled
    angles (``kind="angle"``).  ``window`` is the region that was generated;
    points outside it are absent by construction.
    """

    points: np.ndarray
    multiplicity: np.ndarray
    kind: str = "complex"
    window: tuple | None = None
    infinite_atom_at_zero: bool = False
    truncation_bound: float = 0.0

    @property
    def total_mass(self) -> float:
        return math.inf if self.infinite_atom_at_zero else int(np.sum(self.multiplicity))

    def count(self, a: float, b: float, closed: str = "both") -> float:
        """Mass in ``[a, b]`` (``closed`` is "both", "left" or "right")."""
        x = self.points.real if self.kind == "angle" else np.abs(self.points)
        lo = x >= a if closed in ("both", "left") else x > a
        hi = x <= b if closed in ("both", "right") else x < b
        n = int(np.sum(self.multiplicity[lo & hi]))
        if self.infinite_atom_at_zero and (a < 0 < b or (a == 0 and closed in ("both", "left"))
                                           or (b == 0 and closed in ("both", "right"))):
            return math.inf
        return n

    def to_csv(self) -> str:
        """CSV text with a ``# kind=...`` header line."""
        buf = io.StringIO()
        buf.write(f"# eigen-point-measure kind={self.kind} window={self.window} "
                  f"infinite_atom_at_zero={str(self.infinite_atom_at_zero).lower()} "
                  f"truncation_bound={float(self.truncation_bound)!r}\n")
        if self.kind == "complex":
            buf.write("re,im,multiplicity\n")
            for z, m in zip(self.points, self.multiplicity):
                buf.write(f"{float(z.real)!r},{float(z.imag)!r},{int(m)}\n")
        else:
            buf.write("x,multiplicity\n")
            for x, m in zip(self.points, self.multiplicity):
                buf.write(f"{float(x)!r},{int(m)}\n")
        return buf.getvalue()


def cycle_data(sigma: CycleDecomposition, z: Sequence[complex]) -> CycleData:
    """Cycle data of ``M = diag(z) P_sigma`` for explicit entries ``z``."""
    z = np.asarray(z, dtype=complex)
    if z.size != sigma.N:
        raise ParameterError("need one entry per element")
    if np.any(z == 0):
        raise ParameterError("entries must be non-zero")
    lm, ang = [], []
    for c in sigma.cycles:
        zc = z[np.asarray(c) - 1]
        lm.append(float(np.sum(np.log(np.abs(zc)))))
        ang.append(float(np.sum(np.angle(zc)) / (2 * np.pi)) % 1.0)
    return CycleData(sigma.lengths(), np.array(lm), np.array(ang) % 1.0)


def cycle_data_exact(sigma: CycleDecomposition, j: Sequence[int], r: int) -> CycleData:
    """Cycle data for entries ``exp(2 pi i j_k / r)`` with exact angles."""
    j = np.asarray(j, dtype=np.int64)
    num = np.array([int(np.sum(j[np.asarray(c) - 1])) % r for c in sigma.cycles], dtype=np.int64)
    n = len(sigma.cycles)
    return CycleData(sigma.lengths(), np.zeros(n), num / r, num, int(r))


def sample_cycle_data(sigma: CycleDecomposition, law: DistributionSpec, stream) -> CycleData:
    """Draw cycle products of ``sigma`` under ``law``."""
    lengths = sigma.lengths()
    lm, ang, idx = cycle_products(law, lengths, stream)
    if idx is not None:
        r, _ = discrete_angles(law)
        return CycleData(lengths, lm, ang, idx, r)
    return CycleData(lengths, lm, ang)


def _merge(keys_real: np.ndarray, keys_imag: np.ndarray, tol: float):
    """Group points whose coordinates agree within ``tol``; returns (first index, counts)."""
    order = np.lexsort((keys_imag, keys_real))
    kr, ki = keys_real[order], keys_imag[order]
    groups = []
    start = 0
    for i in range(1, order.size + 1):
        if i == order.size or abs(kr[i] - kr[start]) > tol or abs(ki[i] - ki[start]) > tol:
            groups.append((start, i))
            start = i
    first = np.array([order[a] for a, _ in groups], dtype=np.int64)
    counts = np.array([b - a for a, b in groups], dtype=np.int64)
    return first, counts


def eigenvalues_from_cycles(data: CycleData, merge: bool = True) -> EigenPointMeasure:
    """All eigenvalues, coinciding atoms merged into multiplicities.

    Exact rational angles are merged exactly; otherwise atoms closer than
    ``1e-12`` in log-modulus and angle are merged.
    """
    l = data.lengths.astype(np.int64)
    cyc = np.repeat(np.arange(l.size), l)
    t = np.arange(l.sum()) - np.repeat(np.cumsum(l) - l, l)
    lm = (data.log_modulus / l)[cyc]
    if data.angle_num is not None:
        den = data.angle_den * l[cyc]
        num = data.angle_num[cyc] + t * data.angle_den
        g = np.gcd(num, den)
        num, den = num // g, den // g
        ang = num / den
    else:
        ang = ((data.angle[cyc] + t) / l[cyc]) % 1.0
    points = np.exp(lm + 2j * np.pi * ang)
    if not merge or points.size == 0:
        return EigenPointMeasure(points, np.ones(points.size, dtype=np.int64))
    if data.angle_num is not None:
        key = np.stack([lm, num, den], axis=1)
        _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        by_first = np.argsort(first)
        first, counts = first[by_first], counts[by_first]
    else:
        first, counts = _merge(lm, ang, MERGE_TOL)
    return EigenPointMeasure(points[first], counts)


def build_matrix(sigma: CycleDecomposition, z: Sequence[complex]) -> np.ndarray:
    """Dense ``M[j, k] = z_j 1{j = s(k)}`` (0-based storage of 1-based labels)."""
    z = np.asarray(z, dtype=complex)
    if z.size != sigma.N:
        raise ParameterError("need one entry per element")
    if np.any(z == 0):
        raise ParameterError("entries must be non-zero")
    succ = sigma.successor() - 1
    M = np.zeros((sigma.N, sigma.N), dtype=complex)
    M[succ, np.arange(sigma.N)] = z[succ]
    return M


def trace_power(data: CycleData, k: int) -> complex:
    """``Tr(M**k) = sum over cycles with l | k of l * Z**(k/l)``."""
    if k < 1:
        raise ParameterError("k must be a positive integer")
    l = data.lengths
    sel = (k % l) == 0
    e = k // l[sel]
    if data.angle_num is not None:
        ang = (data.angle_num[sel] * e % data.angle_den) / data.angle_den
    else:
        ang = (data.angle[sel] * e) % 1.0
    return complex(np.sum(l[sel] * np.exp(data.log_modulus[sel] * e + 2j * np.pi * ang)))


# ---------------------------------------------------------------- scaled angles

def _window_points(shift: np.ndarray, y: np.ndarray, A: float, sample=None):
    """Points ``(shift_m + k) / y_m`` lying in ``[-A, A]``, for integer ``k``.

    Returns positions, owning row, and the integer ``k`` for each point.
    """
    lo = np.ceil(-A * y - shift).astype(np.int64)
    hi = np.floor(A * y - shift).astype(np.int64)
    cnt = np.maximum(hi - lo + 1, 0)
    row = np.repeat(np.arange(y.size), cnt)
    k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt) + lo[row]
    x = (shift[row] + k) / y[row]
    inside = np.abs(x) <= A
    return x[inside], row[inside], k[inside]


def scaled_eigenangles(data: CycleData, N: int, A: float) -> EigenPointMeasure:
    """Scaled angles ``N * arg(lambda) / (2 pi)`` of all eigenvalues in ``[-A, A]``.

    Angles are taken on the whole real line, one point per lift, so a full
    period ``[0, N)`` holds exactly ``N`` points.
    """
    if A <= 0:
        raise ParameterError("A must be positive")
    l = data.lengths.astype(np.int64)
    y = l / N
    x, row, k = _window_points(data.angle, y, A)
    if x.size == 0:
        return EigenPointMeasure(x, np.zeros(0, dtype=np.int64), "angle", (-A, A))
    if data.angle_num is not None:
        # exact rational position N (num + k den) / (den l)
        num = N * (data.angle_num[row] + k * data.angle_den)
        den = data.angle_den * l[row]
        g = np.gcd(num, den)
        key = np.stack([num // g, den // g], axis=1)
        _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    else:
        first, counts = _merge(x, np.zeros_like(x), MERGE_TOL)
    order = np.argsort(x[first], kind="stable")
    return EigenPointMeasure(x[first][order], counts[order], "angle", (-A, A))


def smallest_positive_point(measure: EigenPointMeasure) -> float:
    """Smallest strictly positive atom; ``inf`` if there is none."""
    x = measure.points.real
    pos = x[x > 0]
    return float(pos.min()) if pos.size else math.inf


@dataclass(frozen=True)
class PointBatch:
    """Many samples of a real point process in a common window.

    ``points[offsets[i]:offsets[i+1]]`` are the points of sample ``i``.
    """

    points: np.ndarray
    offsets: np.ndarray
    window: tuple
    zero_atoms: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def sample_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_samples), np.diff(self.offsets))

    def sample(self, i: int) -> np.ndarray:
        return self.points[self.offsets[i]:self.offsets[i + 1]]

    @classmethod
    def from_measures(cls, measures: Sequence[EigenPointMeasure]) -> "PointBatch":
        pts = [np.repeat(m.points.real, m.multiplicity) for m in measures]
        sizes = np.array([p.size for p in pts], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        window = measures[0].window
        zero = np.array([m.infinite_atom_at_zero for m in measures])
        return cls(np.concatenate(pts) if pts else np.zeros(0), offsets, window,
                   zero if zero.any() else None)


def _batch_from_rows(x: np.ndarray, sample_of_point: np.ndarray, n: int, window) -> PointBatch:
    order = np.lexsort((x, sample_of_point))
    x, s = x[order], sample_of_point[order]
    offsets = np.concatenate([[0], np.cumsum(np.bincount(s, minlength=n))])
    return PointBatch(x, offsets, window)


def sample_tau_n_batch(theta: float, N: int, law: DistributionSpec, n: int, A: float,
                       stream) -> PointBatch:
    """``n`` samples of the scaled eigenangles of ``M_N`` in ``[-A, A]``.

    Cycle types come from the Feller coupling, which has the exact Ewens law;
    only cycle products of modulus one are supported.
    """
    if isinstance(law, LogStable):
        raise CapabilityError("scaled angles need a law on the unit circle")
    rng = as_generator(stream)
    lengths, sample = feller_cycle_lengths(theta, N, n, rng)
    _, angle, _ = cycle_products(law, lengths, rng)
    x, row, _ = _window_points(angle, lengths / N, A)
    return _batch_from_rows(x, sample[row], n, (-A, A))


def sample_smallest_angles(theta: float, N: int, law: DistributionSpec, n: int,
                           stream) -> np.ndarray:
    """Smallest positive scaled eigenangle of ``n`` independent ``M_N``.

    A cycle of length ``l`` with angle ``chi`` has points ``N (chi + k) / l``;
    its smallest positive one is ``N chi / l``, or ``N / l`` when ``chi = 0``.
    """
    if isinstance(law, LogStable):
        raise CapabilityError("scaled angles need a law on the unit circle")
    rng = as_generator(stream)
    lengths, sample = feller_cycle_lengths(theta, N, n, rng)
    _, angle, _ = cycle_products(law, lengths, rng)
    first = np.where(angle > 0, angle, 1.0) * N / lengths
    starts = np.concatenate([[0], np.nonzero(np.diff(sample))[0] + 1])
    return np.minimum.reduceat(first, starts)


def sample_tau_infinity(theta: float, shift: ShiftLaw, A: float, stream,
                        tol: float = 1e-12) -> EigenPointMeasure:
    """One sample of the limiting process ``sum_m sum_k delta_{(k + chi_m)/y_m}`` in ``[-A, A]``.

    ``y`` is GEM(theta) truncated at residual mass ``tol``; the expected number
    of missing points is at most ``2 A tol``, reported as ``truncation_bound``.
    When ``shift`` has an atom at zero the process has infinitely many points
    at zero; these are flagged and not listed.
    """
    b = sample_tau_infinity_batch(theta, shift, 1, A, stream, tol)
    x = b.points
    return EigenPointMeasure(x, np.ones(x.size, dtype=np.int64), "angle", (-A, A),
                             shift.is_lattice, 2 * A * tol)


def sample_tau_infinity_batch(theta: float, shift: ShiftLaw, n: int, A: float, stream,
                              tol: float = 1e-12) -> PointBatch:
    """``n`` samples of the limiting scaled-angle process, see :func:`sample_tau_infinity`.

    Atoms at exactly zero (cycles with zero shift, ``k = 0``) are dropped;
    ``PointBatch.zero_atoms`` flags them when the shift law is a lattice.
    """
    _check_theta(theta)
    if A <= 0:
        raise ParameterError("A must be positive")
    rng = as_generator(stream)
    w, _ = sample_gem_batch(theta, n, rng, tol)
    rows, cols = np.nonzero(w)
    y = w[rows, cols]
    chi = shift.sample(y.size, rng)
    x, r, k = _window_points(chi, y, A)
    keep = ~((k == 0) & (chi[r] == 0))
    x, r = x[keep], r[keep]
    b = _batch_from_rows(x, rows[r], n, (-A, A))
    if shift.is_lattice:
        return PointBatch(b.points, b.offsets, b.window, np.ones(n, dtype=bool))
    return b


# ---------------------------------------------------------- bulk of the spectrum

@dataclass(frozen=True)
class RadialRegion:
    """``{r_lo < |z| < r_hi}`` (``inside=True``) or its complement in ``C \\ {0}``."""

    r_lo: float
    r_hi: float
    inside: bool = True

    def __post_init__(self):
        if not 0 <= self.r_lo < self.r_hi:
            raise ParameterError("need 0 <= r_lo < r_hi")

    def contains(self, modulus) -> np.ndarray:
        m = np.asarray(modulus)
        inner = (m > self.r_lo) & (m < self.r_hi)
        return inner if self.inside else ~inner & (m > 0)


def _region_probability(law: DistributionSpec, k: int, region: RadialRegion) -> float:
    """``L_k(region)``, the law of a uniform ``k``-th root of ``k`` entries."""
    if not isinstance(law, LogStable):
        return float(region.contains(1.0))
    # modulus is exp(rho k**(1/alpha - 1) S)
    scale = law.rho * k ** (1.0 / law.alpha - 1.0)
    lo = -np.inf if region.r_lo == 0 else math.log(region.r_lo)
    hi = math.log(region.r_hi) if np.isfinite(region.r_hi) else np.inf
    if scale == 0:
        p = float(lo < 0 < hi)
    else:
        p = float(stable_cdf(hi / scale, law.alpha) - stable_cdf(lo / scale, law.alpha))
    return p if region.inside else 1.0 - p


def mu_infinity_tail_bound(theta: float, law: DistributionSpec, region: RadialRegion,
                           k_max: int) -> float:
    """Expected number of points of cycles longer than ``k_max`` in ``region``.

    ``theta * sum_{k > k_max} L_k(region)``, estimated from the power-law
    decay of ``L_k``; ``k**(1 - 1/alpha)`` for log-stable laws with
    ``alpha < 1`` and a fitted exponent otherwise.
    """
    p1 = _region_probability(law, k_max, region)
    if p1 == 0:
        return 0.0
    if isinstance(law, LogStable) and law.alpha < 1:
        beta = 1.0 / law.alpha - 1.0
    else:
        p2 = _region_probability(law, 2 * k_max, region)
        if p2 <= 0:
            return 0.0
        beta = math.log(p1 / p2) / math.log(2.0)
    if beta <= 1:
        return math.inf
    return theta * p1 * k_max / (beta - 1.0)


def check_mu_infinity_region(law: DistributionSpec, region: RadialRegion) -> None:
    """Raise :class:`PreconditionError` if the region breaks the limit's assumptions."""
    if isinstance(law, LogStable) and law.alpha < 1:
        if region.inside and region.r_lo > 0:
            return
        raise PreconditionError("for alpha < 1 the region must be bounded away from 0")
    if isinstance(law, LogStable) and law.alpha == 1:
        raise PreconditionError("log|Z| is not integrable at alpha = 1")
    R = 1.0        # exp(E log|Z|) for every remaining law
    if region.contains(R) or region.r_lo == R or region.r_hi == R:
        raise PreconditionError(f"the region must stay away from the circle |z| = {R}")
    if region.inside and region.r_lo < R < region.r_hi:
        raise PreconditionError(f"the region must stay away from the circle |z| = {R}")


def sample_mu_infinity(theta: float, law: DistributionSpec, region: RadialRegion,
                       stream, k_max: int = 10_000) -> EigenPointMeasure:
    """Points of the limiting spectral process ``mu_infinity`` inside ``region``.

    Cycle counts ``a_k ~ Poisson(theta/k)`` for ``k <= k_max``; each cycle
    contributes the ``k`` roots of a product of ``k`` entries.
    """
    _check_theta(theta)
    check_mu_infinity_region(law, region)
    rng = as_generator(stream)
    k = np.arange(1, k_max + 1)
    a = rng.poisson(theta / k)
    lengths = np.repeat(k, a)
    if lengths.size == 0:
        pts = np.zeros(0, dtype=complex)
    else:
        lm, ang, _ = cycle_products(law, lengths, rng)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            mod = np.exp(lm / lengths)
        hit = region.contains(mod)
        data = CycleData(lengths[hit], lm[hit], ang[hit])
        pts = eigenvalues_from_cycles(data, merge=False).points if hit.any() else np.zeros(0, complex)
    bound = mu_infinity_tail_bound(theta, law, region, k_max)
    return EigenPointMeasure(pts, np.ones(pts.size, dtype=np.int64), "complex",
                             (region.r_lo, region.r_hi), False, bound)
