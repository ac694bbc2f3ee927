"""Random streams, argument laws and the low level samplers.

Everything random in the package draws from a :class:`RandomStream`, a
``(seed, stream_id)`` pair mapped onto a Philox counter-based generator.
Two streams with different ids never share counter space, and a stream can
serve an indexed sequence of uniforms, so the ``j``-th value does not depend
on how the sequence is chunked.

The argument law of the matrix entries is one of four variants:

* :class:`DiracOne`, every entry equals 1;
* :class:`RootsOfUnity`, entries are ``exp(2 pi i j / r)`` with law ``p``;
* :class:`UniformCircle`, entries are uniform on the unit circle;
* :class:`LogStable`, entries are ``exp(i Theta + rho S)`` where ``Theta`` is
  uniform on ``[0, 2 pi)`` and ``S`` is symmetric stable.

The stable convention is characteristic function ``exp(-|t|**alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Sequence, Union

import numpy as np

from .errors import CapabilityError, ParameterError

_MASK64 = (1 << 64) - 1
# values per block of an indexed uniform sequence
_BLOCK = 1 << 12


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RandomStream:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Parameters
    ----------
    seed : int
        Global seed, ``0 <= seed < 2**64``.
    stream_id : int
        Stream identifier, ``0 <= stream_id < 2**64``.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise ParameterError(f"{name} must be an integer in [0, 2**64)")

    @property
    def key(self) -> int:
        return int(self.seed) | (int(self.stream_id) << 64)

    def generator(self, block: int = 0) -> np.random.Generator:
        """Fresh numpy generator positioned at counter block ``block``."""
        counter = [0, 0, int(block) & _MASK64, 0]
        return np.random.Generator(np.random.Philox(key=self.key, counter=counter))

    def spawn(self, index: int) -> "RandomStream":
        """Child stream with an id derived from this stream and ``index``."""
        child = _splitmix64(int(self.stream_id) ^ _splitmix64(int(index) + 1))
        return RandomStream(self.seed, child)

    def indexed_uniforms(self, start: int, stop: int) -> np.ndarray:
        """Uniforms ``U_start, ..., U_{stop-1}`` of an infinite indexed sequence.

        The values do not depend on how the index range is split across calls.
        """
        if start < 0 or stop < start:
            raise ParameterError("need 0 <= start <= stop")
        out = np.empty(stop - start)
        pos = start
        while pos < stop:
            b, off = divmod(pos, _BLOCK)
            take = min(_BLOCK - off, stop - pos)
            g = np.random.Generator(
                np.random.Philox(key=self.key, counter=[0, 0, b, 1])
            )
            out[pos - start:pos - start + take] = g.random(_BLOCK)[off:off + take]
            pos += take
        return out


def as_generator(stream: Union[RandomStream, np.random.Generator]) -> np.random.Generator:
    """Accept either a stream or an already instantiated generator."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    raise ParameterError("expected a RandomStream or numpy Generator")


# ---------------------------------------------------------------- laws

@dataclass(frozen=True)
class DiracOne:
    """All entries equal to 1."""

    tag = "dirac1"


@dataclass(frozen=True)
class RootsOfUnity:
    """Entries ``exp(2 pi i j / r)`` with probabilities ``p[j]``.

    ``p`` may hold floats or :class:`fractions.Fraction` values.
    """

    r: int
    p: tuple = field(default=())
    tag = "roots"

    def __post_init__(self):
        if not isinstance(self.r, (int, np.integer)) or self.r < 1:
            raise ParameterError("r must be a positive integer")
        p = tuple(self.p) if len(self.p) else tuple([Fraction(1, int(self.r))] * int(self.r))
        if len(p) != self.r:
            raise ParameterError("p must have length r")
        if any(x < 0 for x in p):
            raise ParameterError("p must be non-negative")
        if abs(float(sum(p)) - 1.0) > 1e-12:
            raise ParameterError("p must sum to 1")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class UniformCircle:
    """Entries uniform on the unit circle."""

    tag = "uniform-circle"


@dataclass(frozen=True)
class LogStable:
    """Entries ``exp(i Theta + rho S)`` with ``S`` symmetric ``alpha``-stable."""

    alpha: float
    rho: float = 1.0
    tag = "log-stable"

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ParameterError("alpha must lie in (0, 2]")
        if self.rho < 0:
            raise ParameterError("rho must be non-negative")


DistributionSpec = Union[DiracOne, RootsOfUnity, UniformCircle, LogStable]


def is_discrete(law: DistributionSpec) -> bool:
    return isinstance(law, (DiracOne, RootsOfUnity))


def discrete_angles(law: DistributionSpec) -> tuple[int, tuple]:
    """``(r, p)`` for a discrete law, with ``DiracOne`` as ``(1, (1,))``."""
    if isinstance(law, DiracOne):
        return 1, (Fraction(1),)
    if isinstance(law, RootsOfUnity):
        return int(law.r), law.p
    raise CapabilityError(f"{type(law).__name__} is not a discrete law")


def law_to_text(law: DistributionSpec) -> str:
    """Canonical text form, the inverse of :func:`parse_law`."""
    if isinstance(law, DiracOne):
        return "dirac1"
    if isinstance(law, UniformCircle):
        return "uniform-circle"
    if isinstance(law, RootsOfUnity):
        if all(x == law.p[0] for x in law.p):
            return f"roots:r={law.r}"
        return f"roots:r={law.r},p=" + "/".join(_num_text(x) for x in law.p)
    return f"log-stable:alpha={_num_text(law.alpha)},rho={_num_text(law.rho)}"


def _num_text(x) -> str:
    if isinstance(x, Fraction):
        return str(x) if x.denominator == 1 else repr(float(x))
    return repr(float(x))


def parse_law(text: str) -> DistributionSpec:
    """Parse ``dirac1``, ``uniform-circle``, ``roots:r=3[,p=a/b/c]`` or
    ``log-stable:alpha=0.5,rho=1``."""
    text = text.strip()
    name, _, rest = text.partition(":")
    args = {}
    if rest:
        for item in rest.split(","):
            k, eq, v = item.partition("=")
            if not eq:
                raise ParameterError(f"malformed law argument {item!r}")
            args[k.strip()] = v.strip()
    try:
        if name == "dirac1" and not args:
            return DiracOne()
        if name == "uniform-circle" and not args:
            return UniformCircle()
        if name == "roots":
            unknown = set(args) - {"r", "p"}
            if unknown or "r" not in args:
                raise ParameterError(f"roots law needs r and optional p, got {sorted(args)}")
            r = int(args["r"])
            p = tuple(float(x) for x in args["p"].split("/")) if "p" in args else ()
            return RootsOfUnity(r, p)
        if name == "log-stable":
            unknown = set(args) - {"alpha", "rho"}
            if unknown or "alpha" not in args:
                raise ParameterError(f"log-stable law needs alpha and optional rho, got {sorted(args)}")
            return LogStable(float(args["alpha"]), float(args.get("rho", 1.0)))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed law {text!r}: {exc}") from exc
    raise ParameterError(f"unknown law {text!r}")


# ------------------------------------------------------- GEM and PD

@dataclass(frozen=True)
class GemWeights:
    """Stick-breaking weights truncated once the residual mass is below ``tol``.

    Attributes
    ----------
    weights : ndarray
        ``y_1, y_2, ...`` in size-biased order.
    tail : float
        Residual mass ``1 - sum(weights)``, below the requested tolerance.
    """

    weights: np.ndarray
    tail: float


def _check_theta(theta: float) -> None:
    if not isinstance(theta, Real) or not theta > 0 or not math.isfinite(theta):
        raise ParameterError("theta must be a positive finite number")


def sample_gem(theta: float, stream, tol: float = 1e-12) -> GemWeights:
    """One GEM(theta) sequence via Beta(1, theta) stick breaking."""
    w, tail = sample_gem_batch(theta, 1, stream, tol)
    k = int(np.count_nonzero(w[0]))
    return GemWeights(w[0, :k].copy(), float(tail[0]))


def sample_gem_batch(theta: float, n: int, stream, tol: float = 1e-12):
    """``n`` independent truncated GEM(theta) sequences.

    Returns
    -------
    weights : ndarray, shape (n, K)
        Row ``i`` holds the sticks of sample ``i`` followed by zero padding.
    tail : ndarray, shape (n,)
        Residual mass of each sample; every entry is below ``tol``.
    """
    _check_theta(theta)
    if not 0 < tol < 1:
        raise ParameterError("tol must lie in (0, 1)")
    rng = as_generator(stream)
    # expected number of sticks is about theta * log(1/tol)
    ncol = max(8, int(1.5 * theta * math.log(1.0 / tol)) + 8)
    blocks = []
    residual = np.ones(n)
    active = np.ones(n, dtype=bool)
    while True:
        # Beta(1, theta) by inversion: 1 - V = U**(1/theta)
        log_keep = np.log(rng.random((n, ncol))) / theta
        keep = np.exp(np.cumsum(log_keep, axis=1)) * residual[:, None]
        prev = np.concatenate([residual[:, None], keep[:, :-1]], axis=1)
        w = prev - keep
        # a stick is kept while the residual before it is still >= tol
        w[(prev < tol) | ~active[:, None]] = 0.0
        blocks.append(w)
        stopped = keep[:, -1] < tol
        residual = np.where(active, keep[:, -1], residual)
        active &= ~stopped
        if not active.any():
            break
    weights = np.concatenate(blocks, axis=1)
    last = np.max(np.nonzero(weights.any(axis=0))[0]) + 1
    weights = weights[:, :last]
    tail = 1.0 - weights.sum(axis=1)
    tail = np.clip(tail, 0.0, None)
    return weights, tail


def sample_poisson_dirichlet(theta: float, stream, tol: float = 1e-12) -> GemWeights:
    """PD(theta) as the decreasing rearrangement of a GEM(theta) draw."""
    g = sample_gem(theta, stream, tol)
    return GemWeights(np.sort(g.weights)[::-1].copy(), g.tail)


# ----------------------------------------------------------- stable

def stable_variates(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Symmetric stable variates with characteristic function ``exp(-|t|**alpha)``.

    Chambers-Mallows-Stuck, with the Cauchy branch at ``alpha == 1``.
    At ``alpha == 2`` the output is Gaussian with variance 2.
    """
    if not 0 < alpha <= 2:
        raise ParameterError("alpha must lie in (0, 2]")
    phi = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    if alpha == 1.0:
        return np.tan(phi)
    w = rng.standard_exponential(size)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        x = (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
             * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))
    return x


def sample_stable(alpha: float, stream, size=None):
    """Symmetric stable draw(s), see :func:`stable_variates`."""
    x = stable_variates(alpha, 1 if size is None else size, as_generator(stream))
    return float(x[0]) if size is None else x


def stable_cdf(x, alpha: float) -> np.ndarray:
    """CDF of the symmetric stable law with characteristic function ``exp(-|t|**alpha)``.

    Closed forms at ``alpha`` 1 and 2; otherwise scipy's ``levy_stable`` in
    its S1 parametrization with ``beta = 0`` (the same law).
    """
    from scipy import special, stats

    x = np.asarray(x, dtype=float)
    if alpha == 2.0:
        return special.ndtr(x / math.sqrt(2.0))
    if alpha == 1.0:
        return 0.5 + np.arctan(x) / np.pi
    out = np.where(x == 0, 0.5, 0.0)
    finite = np.isfinite(x) & (x != 0)
    out = np.where(np.isposinf(x), 1.0, out)
    # levy_stable flattens to 0.5 near the origin; integrate there instead
    near = finite & (np.abs(x) < CENTRAL_CUTOFF)
    far = finite & ~near
    if far.any():
        out[far] = stats.levy_stable.cdf(x[far], alpha, 0.0)
    if near.any():
        flat_x, flat_out = np.atleast_1d(x).ravel(), np.atleast_1d(out).ravel()
        for i in np.nonzero(np.atleast_1d(near).ravel())[0]:
            xi = float(flat_x[i])
            flat_out[i] = 0.5 + math.copysign(0.5 * _central_mass(abs(xi), alpha), xi)
        out = flat_out.reshape(x.shape)
    return out


CENTRAL_CUTOFF = 1e-2


def _central_mass(x: float, alpha: float) -> float:
    """``P(|S| < x)`` from the inversion integral.

    With ``v = t**alpha`` the sine transform becomes
    ``2/(alpha pi) int_0^inf sin(x v**(1/alpha)) exp(-v) / v dv``.
    """
    from scipy import integrate

    a = 1.0 / alpha
    fn = lambda v: math.sin(x * v ** a) * math.exp(-v) / v
    val, _ = integrate.quad(fn, 0.0, 60.0, limit=2000, epsabs=1e-17, epsrel=1e-12)
    return 2.0 / (alpha * math.pi) * val


def stable_density_at_zero(alpha: float) -> float:
    """``f(0) = Gamma(1 + 1/alpha) / pi`` for the symmetric stable density."""
    return math.gamma(1.0 + 1.0 / alpha) / math.pi


# ------------------------------------------------ entries and cycles

def sample_z(law: DistributionSpec, stream, size: int = 1) -> np.ndarray:
    """``size`` independent entries of the given law, as complex numbers."""
    rng = as_generator(stream)
    if isinstance(law, DiracOne):
        return np.ones(size, dtype=complex)
    if isinstance(law, RootsOfUnity):
        j = rng.choice(law.r, size=size, p=np.asarray(law.p, dtype=float))
        return np.exp(2j * np.pi * j / law.r)
    if isinstance(law, UniformCircle):
        return np.exp(2j * np.pi * rng.random(size))
    if isinstance(law, LogStable):
        theta = rng.random(size)
        s = stable_variates(law.alpha, size, rng)
        return np.exp(law.rho * s + 2j * np.pi * theta)
    raise ParameterError(f"unknown law {law!r}")


def cycle_products(law: DistributionSpec, lengths, stream):
    """Product of ``l`` i.i.d. entries for each ``l`` in ``lengths``.

    Returns
    -------
    log_modulus : ndarray
    angle : ndarray
        Argument divided by ``2 pi``, in ``[0, 1)``.
    index : ndarray of int or None
        For discrete laws the exact angle is ``index / r``.
    """
    rng = as_generator(stream)
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise ParameterError("cycle lengths must be positive")
    n = lengths.size
    if isinstance(law, (DiracOne, RootsOfUnity)):
        r, p = discrete_angles(law)
        idx = np.zeros(n, dtype=np.int64)
        if r > 1:
            u = rng.random(n)
            for l in np.unique(lengths):
                sel = lengths == l
                cdf = np.cumsum(np.asarray(convolution_power_on_roots(p, int(l)), dtype=float))
                cdf /= cdf[-1]
                idx[sel] = np.minimum(np.searchsorted(cdf, u[sel], side="right"), r - 1)
        return np.zeros(n), idx / r, idx
    if isinstance(law, UniformCircle):
        return np.zeros(n), rng.random(n), None
    if isinstance(law, LogStable):
        angle = rng.random(n)
        s = stable_variates(law.alpha, n, rng)
        return law.rho * lengths.astype(float) ** (1.0 / law.alpha) * s, angle, None
    raise ParameterError(f"unknown law {law!r}")


def sample_cycle_product(law: DistributionSpec, l: int, stream) -> tuple[float, float]:
    """``(log|T|, arg(T) / 2 pi)`` for ``T`` a product of ``l`` i.i.d. entries."""
    if l < 1:
        raise ParameterError("l must be a positive integer")
    lm, ang, _ = cycle_products(law, [l], stream)
    return float(lm[0]), float(ang[0])


# ---------------------------------------------- laws on roots of unity

def _cyclic_convolve(a: Sequence, b: Sequence) -> list:
    r = len(a)
    out = [a[0] * 0] * r
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[(i + j) % r] += ai * bj
    return out


def convolution_power_on_roots(p: Sequence, l: int) -> list:
    """``l``-fold cyclic self-convolution of a law on ``Z/rZ``.

    Exponentiation by squaring; exact when ``p`` holds Fractions.
    """
    if l < 0:
        raise ParameterError("l must be non-negative")
    p = list(p)
    result = [p[0] * 0 + 1] + [p[0] * 0] * (len(p) - 1)
    base = p
    while l:
        if l & 1:
            result = _cyclic_convolve(result, base)
        l >>= 1
        if l:
            base = _cyclic_convolve(base, base)
    return result


@dataclass(frozen=True)
class ShiftLaw:
    """Limit law of the fractional shift of a long cycle.

    Uniform on ``{0, 1/r, ..., (r-1)/r}`` when ``r`` is finite, uniform on
    ``[0, 1)`` when ``r`` is infinite.
    """

    r: float

    @property
    def is_lattice(self) -> bool:
        return math.isfinite(self.r)

    @property
    def atom_at_zero(self) -> float:
        return 1.0 / self.r if self.is_lattice else 0.0

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        if self.is_lattice:
            return rng.integers(0, int(self.r), size) / self.r
        return rng.random(size)

    def cdf(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.is_lattice:
            return np.minimum(np.floor(x * self.r) + 1.0, self.r) / self.r
        return x


def limit_shift_law(law: DistributionSpec) -> ShiftLaw:
    """Smallest group of roots of unity carrying the law, as a shift law."""
    if isinstance(law, DiracOne):
        return ShiftLaw(1)
    if isinstance(law, RootsOfUnity):
        support = [j for j, x in enumerate(law.p) if x > 0]
        for d in range(1, law.r + 1):
            if law.r % d == 0 and all((j * d) % law.r == 0 for j in support):
                return ShiftLaw(d)
    if isinstance(law, (UniformCircle, LogStable)):
        return ShiftLaw(math.inf)
    raise ParameterError(f"unknown law {law!r}")


def cesaro_convolution(p: Sequence, k: int, d: int) -> list:
    """Average of the convolution powers ``p^{*k}, ..., p^{*(k+d-1)}``."""
    if k < 0 or d < 1:
        raise ParameterError("need k >= 0 and d >= 1")
    cur = convolution_power_on_roots(p, k)
    acc = list(cur)
    for _ in range(d - 1):
        cur = _cyclic_convolve(cur, p)
        acc = [a + c for a, c in zip(acc, cur)]
    return [a / d for a in acc]
