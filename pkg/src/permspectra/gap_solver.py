"""Law of the smallest positive point of the limiting scaled-angle process.

For the uniform argument law the limit process is
``sum_m sum_k delta_{(k + chi_m)/y_m}`` with GEM(theta) weights ``y`` and
independent uniform shifts ``chi``.  Its smallest positive point is
``inf_m chi_m / y_m`` and ``G(x) = P[inf_m chi_m / y_m >= x]`` solves

    x**theta G(x) = theta * int_{max(0, x-1)}^{x} u**(theta-1) (1 - x + u) G(u) du,

with ``G(0) = 1``.  Equivalently ``H(x) = x**(theta-1) G(x)`` satisfies
``x H(x) = theta int_0^1 (1-y) H(x-y) dy``.  Three independent routes are
provided: a product-integration march, Fourier inversion of the closed form
of ``H``'s transform, and Monte Carlo.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, special

from .errors import NumericalFailure, ParameterError
from .sampling_core import as_generator, sample_gem_batch, _check_theta


@dataclass(frozen=True)
class GridFunction:
    """Values on the uniform grid ``x0 + h * i``."""

    x0: float
    h: float
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.values.size)

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k in sorted(self.meta):
            buf.write(f"# {k}={self.meta[k]}\n")
        buf.write("x,G\n")
        for xi, vi in zip(self.x, self.values):
            buf.write(f"{float(xi)!r},{float(vi)!r}\n")
        return buf.getvalue()


def gap_series(theta: float, x) -> np.ndarray:
    """``G`` on ``[0, 1]`` as the entire series ``0F1(; theta; -theta x)``.

    On ``[0, 1]`` the lower limit of the integral is 0 and the equation
    reduces to ``x**theta G' = -theta int_0^x u**(theta-1) G(u) du``, whose
    power series solution has ``c_{n+1} = -theta c_n / ((n+1)(n+theta))``.
    """
    _check_theta(theta)
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ParameterError("the series form holds on [0, 1]")
    return special.hyp0f1(theta, -theta * x)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cell_weights(u: np.ndarray, a: float, h: float):
    """``int_cell u**a (1-s) du`` and ``int_cell u**a s du`` on each grid cell.

    ``s`` is the local coordinate in ``[0, 1]``.  The first cell is done in
    closed form to absorb the singular weight; the others by Gauss-Legendre.
    """
    n = u.size - 1
    left = np.empty(n)
    right = np.empty(n)
    # first cell [0, h]: int_0^h u^a (1 - u/h) du and int_0^h u^a u/h du
    left[0] = h ** (a + 1) / (a + 1) - h ** (a + 1) / (a + 2)
    right[0] = h ** (a + 1) / (a + 2)
    s = 0.5 * (_GL_NODES + 1.0)
    wq = 0.5 * _GL_WEIGHTS
    uu = u[1:-1, None] + h * s[None, :]
    f = uu ** a
    left[1:] = h * (f * (1 - s) * wq).sum(axis=1)
    right[1:] = h * (f * s * wq).sum(axis=1)
    return left, right


def solve_volterra(theta: float, h: float = 1e-3, x_max: float = 10.0) -> GridFunction:
    """March the integral equation for ``G`` on ``[0, x_max]``.

    Product trapezoidal rule: ``G`` is piecewise linear on the grid and the
    weight ``u**(theta-1) (1 - x + u)`` is integrated exactly against each
    hat function, so the singular weight at 0 needs no special treatment
    beyond ``G(0) = 1``.  Each node then solves one linear equation.
    """
    _check_theta(theta)
    if not 0 < h <= 1e-2:
        raise ParameterError("h must lie in (0, 1e-2]")
    if x_max < 1:
        raise ParameterError("x_max must be at least 1")
    M = int(round(1.0 / h))
    if abs(M * h - 1.0) > 1e-9:
        raise ParameterError("1/h must be an integer so that x - 1 is a grid node")
    n = int(math.ceil(x_max / h - 1e-9))
    u = h * np.arange(n + 1)
    # weight (1 - x + u) u^(theta-1) = (1 - x) u^(theta-1) + u^theta
    L0, R0 = _cell_weights(u, theta - 1.0, h)
    L1, R1 = _cell_weights(u, theta, h)
    G = np.empty(n + 1)
    G[0] = 1.0
    # completed-cell contributions, summed over each window directly: prefix
    # sums would cancel catastrophically once G is far below 1
    C0 = np.zeros(n)
    C1 = np.zeros(n)
    for i in range(1, n + 1):
        x = u[i]
        lo = max(i - M, 0)
        # cells lo .. i-2 are complete; cell i-1 involves the unknown G[i]
        S0 = math.fsum(C0[lo:i - 1]) + L0[i - 1] * G[i - 1]
        S1 = math.fsum(C1[lo:i - 1]) + L1[i - 1] * G[i - 1]
        rhs = theta * ((1 - x) * S0 + S1)
        diag = x ** theta - theta * ((1 - x) * R0[i - 1] + R1[i - 1])
        G[i] = rhs / diag
        C0[i - 1] = L0[i - 1] * G[i - 1] + R0[i - 1] * G[i]
        C1[i - 1] = L1[i - 1] * G[i - 1] + R1[i - 1] * G[i]
    if not np.all(np.isfinite(G)) or G.max() > 1 + 1e-9 or G.min() < -1e-9:
        raise NumericalFailure("march left [0, 1]; decrease h",
                               residual=float(np.nanmax(np.abs(G - np.clip(G, 0, 1)))))
    meta = {"method": "volterra", "theta": repr(float(theta)), "h": repr(float(h)),
            "x_max": repr(float(x_max))}
    return GridFunction(0.0, h, G, meta)


def volterra_residual(theta: float, sol: GridFunction, x_points=None, x_min: float | None = None) -> float:
    """Relative residual of ``sol`` in the integral equation.

    The right-hand side is evaluated by adaptive quadrature of a cubic-spline
    interpolant of ``sol``, independently of the discretisation used to march.
    The residual is ``max |lhs - rhs| / max |lhs|`` over ``x_points``.
    """
    spline = interpolate.CubicSpline(sol.x, sol.values)
    if x_min is None:
        x_min = 10 * sol.h
    if x_points is None:
        x_points = np.linspace(x_min, sol.x[-1], 64)
    res, scale = [], []
    for x in x_points:
        lhs = x ** theta * float(spline(x))
        if x <= 1:
            v, _ = integrate.quad(lambda t: (1 - x + t) * float(spline(t)), 0, x,
                                  weight="alg", wvar=(theta - 1.0, 0.0),
                                  epsabs=1e-14, epsrel=1e-12, limit=400)
        else:
            knots = [x - 1.0] + [float(k) for k in range(int(math.ceil(x - 1)), int(x) + 1)
                                 if x - 1 < k < x] + [x]
            v = 0.0
            for a, b in zip(knots, knots[1:]):
                vi, _ = integrate.quad(lambda t: t ** (theta - 1) * (1 - x + t) * float(spline(t)),
                                       a, b, epsabs=1e-14, epsrel=1e-12, limit=400)
                v += vi
        res.append(abs(lhs - theta * v))
        scale.append(abs(lhs))
    return float(max(res) / max(scale))


# -------------------------------------------------------------- Fourier route

def _kernel_hat(mu: np.ndarray) -> np.ndarray:
    """``(1 - exp(-i mu) - i mu) / mu**2``, the transform of ``(1-y) 1_[0,1](y)``."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape, dtype=complex)
    small = np.abs(mu) < 1e-2
    m = mu[small]
    # series 1/2 - i mu/6 - mu^2/24 + i mu^3/120 + mu^4/720
    out[small] = 0.5 - 1j * m / 6 - m ** 2 / 24 + 1j * m ** 3 / 120 + m ** 4 / 720
    m = mu[~small]
    out[~small] = (1 - np.exp(-1j * m) - 1j * m) / m ** 2
    return out


def kernel_hat_integral(lam: np.ndarray) -> np.ndarray:
    """``int_0^lambda K_hat(mu) d mu`` at the (increasing, uniform) grid ``lam``.

    Gauss-Legendre on each grid interval followed by a cumulative sum.
    """
    lam = np.asarray(lam, dtype=float)
    a, b = lam[:-1], lam[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    pieces = half * (_kernel_hat(nodes) * _GL_WEIGHTS).sum(axis=1)
    return np.concatenate([[0.0], np.cumsum(pieces)]) + _first(lam[0])


def _first(lam0: float) -> complex:
    if lam0 == 0:
        return 0.0
    nodes = 0.5 * lam0 * (_GL_NODES + 1)
    return 0.5 * lam0 * complex((_kernel_hat(nodes) * _GL_WEIGHTS).sum())


def fourier_gap(theta: float, lambda_max: float | None = None, n_freq: int = 1 << 19,
                x_max: float = 10.0, h: float = 1e-3, tol: float = 1e-4) -> GridFunction:
    """``G`` by Fourier inversion of ``H_hat = H_hat(0) exp(-i theta int_0^lambda K_hat)``.

    ``H_hat(0)`` is fixed by the small-``x`` law ``H(x) ~ x**(theta-1)``,
    i.e. ``H_hat(lambda) ~ Gamma(theta) (i lambda)**(-theta)`` at large
    ``lambda``.  The singular part ``x**(theta-1) exp(-x)``, whose transform
    is ``Gamma(theta) (1 + i lambda)**(-theta)``, is subtracted before the
    inverse FFT and added back afterwards.

    Raises
    ------
    NumericalFailure
        If the estimated truncation or aliasing error exceeds ``tol``.
    """
    _check_theta(theta)
    if lambda_max is None:
        lambda_max = 2 * np.pi * n_freq / 64.0
    dlam = lambda_max / n_freq
    period = 2 * np.pi / dlam
    if period < x_max + 40:
        raise NumericalFailure("frequency step too coarse for the requested x_max",
                               residual=period)
    lam = dlam * np.arange(n_freq + 1)
    A = kernel_hat_integral(lam)
    # A(lambda) + i log(lambda) -> A_inf; tail of int (1 - e^{-i mu})/mu^2 added analytically
    lm = lam[-1]
    A_inf = A[-1] + 1j * math.log(lm) + 1.0 / lm + 1j * np.exp(-1j * lm) / lm ** 2
    c_phi = np.exp(1j * np.pi * theta / 2 - 1j * theta * A_inf)
    H0 = special.gamma(theta) / c_phi
    Hhat = H0 * np.exp(-1j * theta * A)
    reg = Hhat - special.gamma(theta) * (1 + 1j * lam) ** (-theta)
    trunc = float(np.abs(reg[-1]) * lm / (theta + 1) / np.pi)
    if trunc > tol:
        raise NumericalFailure(f"lambda_max={lambda_max} too small: truncation estimate {trunc:.3g}",
                               residual=trunc)
    # H_reg(x) = (1/pi) Re int_0^inf reg(lambda) e^{i lambda x} d lambda, trapezoid in lambda
    n_fft = 2 * n_freq
    spec = np.zeros(n_fft, dtype=complex)
    spec[:n_freq + 1] = reg
    spec[0] *= 0.5
    spec[n_freq] *= 0.5
    vals = np.fft.ifft(spec) * n_fft
    xg = np.arange(n_fft) * (period / n_fft)
    keep = xg <= x_max + 2 * h
    xg = xg[keep]
    Hreg = (dlam / np.pi) * vals[keep].real
    G = np.empty_like(xg)
    G[0] = 1.0
    pos = xg > 0
    G[pos] = np.exp(-xg[pos]) + Hreg[pos] * xg[pos] ** (1.0 - theta)
    n = int(math.ceil(x_max / h - 1e-9))
    xs = h * np.arange(n + 1)
    Gs = interpolate.CubicSpline(xg, G)(xs)
    meta = {"method": "fourier", "theta": repr(float(theta)), "h": repr(float(h)),
            "x_max": repr(float(x_max)), "lambda_max": repr(float(lambda_max)),
            "n_freq": str(n_freq), "H_hat_0": repr(float(H0.real)),
            "truncation_estimate": repr(trunc)}
    return GridFunction(0.0, h, Gs, meta)


def fourier_transform_modulus(theta: float, lam: np.ndarray) -> np.ndarray:
    """``|H_hat(lambda)| / H_hat(0)`` on a grid starting at 0."""
    A = kernel_hat_integral(np.asarray(lam, dtype=float))
    return np.abs(np.exp(-1j * theta * A))


# ---------------------------------------------------------------- Monte Carlo

def gap_samples(theta: float, n_samples: int, stream, tol: float = 1e-12,
                batch: int = 100_000) -> np.ndarray:
    """``n_samples`` draws of ``inf_m chi_m / y_m`` with uniform ``chi``.

    Cycles beyond the truncation have weight below ``tol``; each could only
    matter through ``chi_m < x y_m``, so the bias at ``x`` is below ``x tol``.
    """
    _check_theta(theta)
    rng = as_generator(stream)
    out = np.empty(n_samples)
    for start in range(0, n_samples, batch):
        m = min(batch, n_samples - start)
        w, _ = sample_gem_batch(theta, m, rng, tol)
        chi = rng.random(w.shape)
        with np.errstate(divide="ignore"):
            ratio = np.where(w > 0, chi / w, np.inf)
        out[start:start + m] = ratio.min(axis=1)
    return out


def mc_gap(theta: float, n_samples: int, stream, tol: float = 1e-12, grid=None) -> GridFunction:
    """Empirical ``G(x) = P[inf_m chi_m / y_m >= x]`` on ``grid``.

    ``meta["n"]`` holds the sample size, so the binomial standard error at
    ``x`` is ``sqrt(G (1 - G) / n)``.
    """
    if grid is None:
        grid = np.linspace(0.0, 10.0, 1001)
    grid = np.asarray(grid, dtype=float)
    s = np.sort(gap_samples(theta, n_samples, stream, tol))
    G = 1.0 - np.searchsorted(s, grid, side="left") / n_samples
    h = float(grid[1] - grid[0]) if grid.size > 1 else 0.0
    meta = {"method": "mc", "theta": repr(float(theta)), "n": str(n_samples), "tol": repr(tol)}
    return GridFunction(float(grid[0]), h, G, meta)
