"""Semicircle quantities, limiting covariance kernels and rate predictions.

Fourier convention: ``fhat(xi) = (2 pi)^{-1/2} int f(x) exp(-i xi x) dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma, kv

from .errors import ConfigurationError, DomainError, NumericalError
from .quadrature import adaptive_quad, quad_half_line, quad_mapped_batch, quad_real_line

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunction:
    """A real C^{1,r,s} test function with its derivatives.

    ``fourier_transform`` (optional) may return complex values; odd functions
    have purely imaginary transforms.
    """

    __test__ = False  # keep pytest from collecting this class

    label: str
    evaluate: Fn
    derivative: Fn
    hoelder_r: float = 1.0
    decay_s: float = 1.0
    fourier_transform: Optional[Fn] = None
    second_derivative: Optional[Fn] = None

    def __post_init__(self):
        if not 0 < self.hoelder_r <= 1:
            raise ConfigurationError("hoelder_r must lie in (0, 1]")
        if not self.decay_s > 0:
            raise ConfigurationError("decay_s must be positive")

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=np.float64))

    @property
    def is_c2(self) -> bool:
        return self.second_derivative is not None

    def dilate(self, lam: float) -> "TestFunction":
        """x -> f(lam x), lam > 0."""
        if not lam > 0:
            raise ConfigurationError("dilation factor must be positive")
        f, df, d2f, ft = self.evaluate, self.derivative, self.second_derivative, self.fourier_transform
        return TestFunction(
            f"{self.label}@{lam:g}",
            lambda x: f(lam * x),
            lambda x: lam * df(lam * x),
            self.hoelder_r, self.decay_s,
            None if ft is None else (lambda xi: ft(np.asarray(xi) / lam) / lam),
            None if d2f is None else (lambda x: lam * lam * d2f(lam * x)),
        )

    def rescale(self, E: float, eta: float) -> "TestFunction":
        """x -> f((x - E) / eta); derivatives carry the 1/eta factors."""
        f, df, d2f = self.evaluate, self.derivative, self.second_derivative
        return TestFunction(
            f"{self.label}[E={E:g},eta={eta:g}]",
            lambda x: f((x - E) / eta),
            lambda x: df((x - E) / eta) / eta,
            self.hoelder_r, self.decay_s, None,
            None if d2f is None else (lambda x: d2f((x - E) / eta) / eta**2),
        )

    def scaled(self, c: float) -> "TestFunction":
        f, df, d2f, ft = self.evaluate, self.derivative, self.second_derivative, self.fourier_transform
        return TestFunction(
            f"{c:g}*{self.label}",
            lambda x: c * f(x), lambda x: c * df(x), self.hoelder_r, self.decay_s,
            None if ft is None else (lambda xi: c * ft(xi)),
            None if d2f is None else (lambda x: c * d2f(x)),
        )

    def __neg__(self) -> "TestFunction":
        return self.scaled(-1.0)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        a, b = self, other
        ft = None
        if a.fourier_transform is not None and b.fourier_transform is not None:
            ft = lambda xi: a.fourier_transform(xi) + b.fourier_transform(xi)  # noqa: E731
        d2 = None
        if a.is_c2 and b.is_c2:
            d2 = lambda x: a.second_derivative(x) + b.second_derivative(x)  # noqa: E731
        return TestFunction(
            f"{a.label}+{b.label}",
            lambda x: a.evaluate(x) + b.evaluate(x),
            lambda x: a.derivative(x) + b.derivative(x),
            min(a.hoelder_r, b.hoelder_r), min(a.decay_s, b.decay_s), ft, d2,
        )


def _cauchy() -> TestFunction:
    return TestFunction(
        "cauchy",
        lambda x: 1.0 / (1.0 + x * x),
        lambda x: -2.0 * x / (1.0 + x * x) ** 2,
        1.0, 1.0,
        lambda xi: math.sqrt(math.pi / 2) * np.exp(-np.abs(xi)) + 0j,
        lambda x: (6.0 * x * x - 2.0) / (1.0 + x * x) ** 3,
    )


def _gauss() -> TestFunction:
    return TestFunction(
        "gauss",
        lambda x: np.exp(-0.5 * x * x),
        lambda x: -x * np.exp(-0.5 * x * x),
        1.0, 1.0,
        lambda xi: np.exp(-0.5 * np.asarray(xi) ** 2) + 0j,
        lambda x: (x * x - 1.0) * np.exp(-0.5 * x * x),
    )


def _poly_decay_ft(xi):
    # transform of (1 + x^2)^(-nu): sqrt(2)/Gamma(nu) (|xi|/2)^(nu-1/2) K_{nu-1/2}(|xi|)
    nu = 0.75
    a = np.abs(np.asarray(xi, dtype=np.float64))
    out = np.empty_like(a)
    zero = a == 0
    out[zero] = gamma(nu - 0.5) / (math.sqrt(2.0) * gamma(nu))
    t = a[~zero]
    out[~zero] = math.sqrt(2.0) / gamma(nu) * (t / 2) ** (nu - 0.5) * kv(nu - 0.5, t)
    return out + 0j


def _poly_decay() -> TestFunction:
    return TestFunction(
        "poly_decay",
        lambda x: (1.0 + x * x) ** -0.75,
        lambda x: -1.5 * x * (1.0 + x * x) ** -1.75,
        1.0, 0.5,
        _poly_decay_ft,
        lambda x: -1.5 * (1.0 + x * x) ** -1.75 + 5.25 * x * x * (1.0 + x * x) ** -2.75,
    )


def _wiggle() -> TestFunction:
    c = math.sqrt(math.pi / 2) / 2j
    return TestFunction(
        "wiggle",
        lambda x: np.sin(x) / (1.0 + x * x),
        lambda x: np.cos(x) / (1.0 + x * x) - 2.0 * x * np.sin(x) / (1.0 + x * x) ** 2,
        1.0, 1.0,
        lambda xi: c * (np.exp(-np.abs(np.asarray(xi) - 1.0)) - np.exp(-np.abs(np.asarray(xi) + 1.0))),
        lambda x: (-np.sin(x) / (1.0 + x * x) - 4.0 * x * np.cos(x) / (1.0 + x * x) ** 2
                   + np.sin(x) * (6.0 * x * x - 2.0) / (1.0 + x * x) ** 3),
    )


def zero_function() -> TestFunction:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=np.float64))  # noqa: E731
    return TestFunction("zero", z, z, 1.0, 1.0, lambda xi: np.zeros_like(np.asarray(xi, dtype=np.float64)) + 0j, z)


CATALOG: dict[str, Callable[[], TestFunction]] = {
    "cauchy": _cauchy,
    "gauss": _gauss,
    "poly_decay": _poly_decay,
    "wiggle": _wiggle,
    "zero": zero_function,
}


def get_test_function(label: str) -> TestFunction:
    """Catalog lookup; ``name@lam`` gives the dilation x -> f(lam x)."""
    name, _, lam = label.partition("@")
    if name not in CATALOG:
        raise ConfigurationError(f"unknown test function {label!r}; choose from {sorted(CATALOG)}")
    f = CATALOG[name]()
    return f.dilate(float(lam)) if lam else f


def decay_constant(f: TestFunction, half_width: float = 1e3, points: int = 200_001) -> float:
    """sup (|f| + |f'|)(1 + |x|)^(1+s) over a grid on [-half_width, half_width]."""
    x = np.linspace(-half_width, half_width, points)
    return float(np.max((np.abs(f(x)) + np.abs(f.derivative(x))) * (1.0 + np.abs(x)) ** (1.0 + f.decay_s)))


def plancherel_gap(f: TestFunction, tol: float = 1e-10) -> float:
    """int f^2 dx - int |fhat|^2 dxi (zero up to quadrature error)."""
    if f.fourier_transform is None:
        raise ConfigurationError(f"{f.label} has no closed-form Fourier transform")
    a = quad_real_line(lambda x: f(x) ** 2, abs_tol=tol, rel_tol=tol).value
    b = quad_real_line(lambda xi: np.abs(f.fourier_transform(xi)) ** 2, abs_tol=tol, rel_tol=tol).value
    return float(a - b)


@dataclass(frozen=True)
class MesoscopicScale:
    alpha: float = 0.5
    energy: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not abs(self.energy) < 2:
            raise ConfigurationError("energy must lie in the bulk (-2, 2)")

    def eta(self, n: int) -> float:
        return float(n) ** (-self.alpha)

    @property
    def kappa(self) -> float:
        return 2.0 - abs(self.energy)


# semicircle -----------------------------------------------------------------

def semicircle_density(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def semicircle_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    xc = np.clip(x, -2.0, 2.0)
    out = 0.5 + xc * np.sqrt(4.0 - xc * xc) / (4.0 * np.pi) + np.arcsin(xc / 2.0) / np.pi
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def semicircle_quantile(p: float) -> float:
    if not 0 <= p <= 1:
        raise DomainError("quantile level must lie in [0, 1]")
    if p == 0:
        return -2.0
    if p == 1:
        return 2.0
    return brentq(lambda x: semicircle_cdf(x) - p, -2.0, 2.0, xtol=1e-15, rtol=1e-15)


def stieltjes_m(z):
    """Stieltjes transform of the semicircle law.

    Both roots of m^2 + z m + 1 = 0 are formed without cancellation (the small
    one as the reciprocal of the large one) and the root with
    Im m * Im z > 0 is returned.
    """
    z_arr = np.asarray(z, dtype=np.complex128)
    if np.any(z_arr.imag == 0):
        raise DomainError("stieltjes_m needs Im z != 0")
    s = np.sqrt(z_arr * z_arr - 4.0)
    r1 = (-z_arr + s) / 2.0
    r2 = (-z_arr - s) / 2.0
    big = np.where(np.abs(r1) >= np.abs(r2), r1, r2)
    small = 1.0 / big
    ok_small = small.imag * z_arr.imag > 0
    ok_big = big.imag * z_arr.imag > 0
    # exactly one root qualifies off the real axis; prefer |m| < 1 on ties
    m = np.where(ok_small | ~ok_big, small, big)
    return complex(m) if m.ndim == 0 else m


# covariance kernels ---------------------------------------------------------

def _check_upper(b):
    if complex(b).imag <= 0:
        raise DomainError(f"{b!r} is not in the upper half-plane")


def resolvent_covariance(b1: complex, b2: complex) -> tuple[complex, complex]:
    """Limiting (E Y(b1) conj Y(b2), E Y(b1) Y(b2)) = (-2/(b1 - conj b2)^2, 0)."""
    _check_upper(b1)
    _check_upper(b2)
    b1, b2 = complex(b1), complex(b2)
    return -2.0 / (b1 - b2.conjugate()) ** 2, 0j


def finite_eta_resolvent_covariance(b1: complex, b2: complex, E: float, eta: float, beta: int = 1) -> complex:
    """Fixed-z Gaussian-ensemble kernel (2/beta) eta^2 m'(z1) m'(conj z2) / (1 - m(z1) m(conj z2))^2.

    Diagnostic only: it tends to ``resolvent_covariance`` as eta -> 0 and
    measures how far a finite eta is from the limit.
    """
    z1 = E + complex(b1) * eta
    z2 = (E + complex(b2) * eta).conjugate()
    m1, m2 = stieltjes_m(z1), stieltjes_m(z2)
    d1 = m1 * m1 / (1 - m1 * m1)
    d2 = m2 * m2 / (1 - m2 * m2)
    return (2.0 / beta) * eta**2 * d1 * d2 / (1 - m1 * m2) ** 2


def _difference_quotient(f: TestFunction, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(f(x) - f(x-u)) / u, switching to f'(x - u/2) where u is tiny."""
    u = np.broadcast_to(u, np.shape(x))
    small = u <= 1e-6 * (1.0 + np.abs(x))
    safe_u = np.where(small, 1.0, u)
    q = (f(x) - f(x - u)) / safe_u
    if np.any(small):
        q[small] = f.derivative(x[small] - 0.5 * u[small])
    return q


def h_half_covariance(f1: TestFunction, f2: TestFunction, tol: float = 1e-8) -> float:
    """(1/(2 pi^2)) iint (f1(x)-f1(y))(f2(x)-f2(y))/(x-y)^2 dx dy.

    Written in (x, u = x - y) with u > 0 (the integrand is symmetric), both
    axes mapped to finite intervals by tangent substitutions.
    """
    def outer(us: np.ndarray) -> np.ndarray:
        n = us.size
        uu = np.concatenate([us, us])
        # f(x) and f(x - u) are bumps at 0 and u; give each half-line its own centre
        a = np.concatenate([np.full(n, -np.inf), 0.5 * us])
        b = np.concatenate([0.5 * us, np.full(n, np.inf)])
        centers = np.concatenate([np.zeros(n), us])
        # the outer map multiplies inner errors by (1 + u^2); pre-divide so they stay integrable
        inner_tol = 0.05 * tol / (1.0 + uu * uu)

        def g(x, k):
            q1 = _difference_quotient(f1, x, uu[k])
            return q1 * q1 if f2 is f1 else q1 * _difference_quotient(f2, x, uu[k])

        res = quad_mapped_batch(g, a, b, centers, 1.0, breakpoints=[(c,) for c in centers],
                                abs_tol=inner_tol, rel_tol=1e-13)
        vals = np.array([r.value for r in res])
        return vals[:n] + vals[n:]

    res = quad_half_line(outer, 0.0, 1.0, abs_tol=0.5 * tol, rel_tol=1e-13)
    return float(2.0 * res.value / (2.0 * np.pi**2))


def h_half_variance_fourier(f: TestFunction, tol: float = 1e-10, *, grid_half_width: float = 2e3,
                            grid_points: int = 2**20) -> float:
    """(1/pi) int |xi| |fhat(xi)|^2 dxi.

    Uses the closed-form transform when present, else a trapezoidal FFT on
    [-L, L]; the FFT value is recomputed with L doubled and a discrepancy above
    ``max(tol, 1e-6)`` raises NumericalError.
    """
    if f.fourier_transform is not None:
        # |fhat| is even for real f
        res = quad_half_line(lambda xi: xi * np.abs(f.fourier_transform(xi)) ** 2, 0.0, 1.0,
                             abs_tol=tol, rel_tol=1e-13)
        return float(2.0 * res.value / np.pi)
    v1 = _fft_h_half(f, grid_half_width, grid_points)
    v2 = _fft_h_half(f, 2 * grid_half_width, 2 * grid_points)
    gap = abs(v1 - v2)
    if gap > max(tol, 1e-6):
        raise NumericalError("discrete Fourier transform not converged", aliasing=gap, value=v2)
    return float(v2)


def _fft_h_half(f: TestFunction, half_width: float, points: int) -> float:
    dx = 2.0 * half_width / points
    x = -half_width + dx * np.arange(points)
    fx = f(x)
    fhat = np.fft.fft(fx) * dx / np.sqrt(2.0 * np.pi)
    xi = 2.0 * np.pi * np.fft.fftfreq(points, d=dx)
    dxi = 2.0 * np.pi / (points * dx)
    return float(np.sum(np.abs(xi) * np.abs(fhat) ** 2) * dxi / np.pi)


def centering_integral(f: TestFunction, E: float, eta: float, N: int, tol: float = 1e-13) -> float:
    """N int_{-2}^{2} rho(x) f((x - E)/eta) dx.

    With x = 2 cos(theta) the density becomes (2/pi) sin^2(theta) on (0, pi),
    which removes the square-root edges; the rescaled peak of f around
    theta_0 = arccos(E/2) gets explicit breakpoints.
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    if not abs(E) < 2:
        raise DomainError("E must lie in (-2, 2)")
    theta0 = math.acos(E / 2.0)
    w = eta / (2.0 * math.sin(theta0))
    bps = [theta0 + k * w for k in (-64, -16, -4, -1, 0, 1, 4, 16, 64)]

    def g(theta):
        x = 2.0 * np.cos(theta)
        return (2.0 / np.pi) * np.sin(theta) ** 2 * f((x - E) / eta)

    # the integral is of order eta, which sets the absolute scale
    res = adaptive_quad(g, 0.0, math.pi, breakpoints=bps, abs_tol=tol * eta, rel_tol=tol, max_intervals=20000)
    return float(N * res.value)


# rates and moment predictions ---------------------------------------------

def rate_c0(alpha: float) -> float:
    """c0(alpha) = min(alpha, 1 - alpha) / 3."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    return min(alpha, 1.0 - alpha) / 3.0


def predicted_mixed_moment(n: int, m: int, alpha: float, N: int) -> float:
    """Leading term of E <conj G>^n <G>^m: n!/2^n N^{2n(alpha-1)} if m == n, else 0."""
    if n < 0 or m < 0 or n + m < 2:
        raise DomainError("need n, m >= 0 with n + m >= 2")
    if m != n:
        return 0.0
    return math.factorial(n) / 2.0**n * float(N) ** (2 * n * (alpha - 1.0))
