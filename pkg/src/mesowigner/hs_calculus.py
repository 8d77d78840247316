"""Helffer-Sjostrand functional calculus by direct 2D quadrature.

For a real test function f, an almost analytic extension f~ and a cutoff
chi(y / s),

    f(lam) = (1/pi) int d-bar(f~ chi)(z) / (lam - z) d^2 z,

and summing over eigenvalues gives Tr f(H).  The integrand is bounded near
z = lam (the weight vanishes linearly in y), so no excluded disc is needed:
the y-axis is split at 0 and at the cutoff transition and each horizontal
line is integrated adaptively with breakpoints at the eigenvalues.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DomainError
from .quadrature import adaptive_quad, quad_mapped_batch
from .spectral import Spectrum, eigenvalues
from .ensemble import MatrixSample
from .theory import TestFunction


class CutoffFunction:
    """C^infinity cutoff: 1 on |y| <= 1, 0 on |y| >= 2.

    On 1 < |y| < 2, with t = |y| - 1, chi = expit(1/t - 1/(1 - t)), the
    standard smooth step whose derivatives of every order vanish at both ends.
    """

    @staticmethod
    def _g(t):
        return 1.0 / t - 1.0 / (1.0 - t)

    def __call__(self, y):
        t = np.abs(np.asarray(y, dtype=np.float64)) - 1.0
        out = np.where(t <= 0.0, 1.0, 0.0)
        mid = (t > 0.0) & (t < 1.0)
        if np.any(mid):
            out[mid] = expit(self._g(t[mid]))
        return out

    def derivative(self, y):
        y = np.asarray(y, dtype=np.float64)
        t = np.abs(y) - 1.0
        out = np.zeros_like(t)
        mid = (t > 0.0) & (t < 1.0)
        if np.any(mid):
            tm = t[mid]
            g = self._g(tm)
            # chi(1 - chi) underflows to 0 before 1/t^2 overflows
            dg = -(1.0 / tm**2 + 1.0 / (1.0 - tm) ** 2)
            out[mid] = expit(g) * expit(-g) * dg * np.sign(y[mid])
        return out


CHI = CutoffFunction()


class ExtensionVariant(str, enum.Enum):
    FIRST_ORDER = "first_order"          # f(x) + i (f(x + y) - f(x)); needs only C^1
    DERIVATIVE_FORM = "derivative_form"  # f(x) + i y f'(x); needs C^2


@dataclass(frozen=True)
class AlmostAnalyticExtension:
    variant: ExtensionVariant
    source: TestFunction
    cutoff_scale: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "variant", ExtensionVariant(self.variant))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if not self.cutoff_scale > 0:
            raise ConfigurationError("cutoff_scale must be positive")
        if self.variant is ExtensionVariant.DERIVATIVE_FORM and not self.source.is_c2:
            raise ConfigurationError(f"derivative_form needs a C^2 test function; {self.source.label} has no "
                                     "second derivative")

    def __call__(self, z):
        """f~(z) without the cutoff."""
        z = np.asarray(z, dtype=np.complex128)
        x, y = z.real, z.imag
        f = self.source
        if self.variant is ExtensionVariant.FIRST_ORDER:
            return f(x) + 1j * (f(x + y) - f(x))
        return f(x) + 1j * y * f.derivative(x)

    def dbar(self, z):
        """d/dz-bar of f~(z) chi(Im z / cutoff_scale), with d/dz-bar = (d/dx + i d/dy) / 2."""
        z = np.asarray(z, dtype=np.complex128)
        x, y = z.real, z.imag
        s = self.cutoff_scale
        f = self.source
        chi = CHI(y / s)
        dchi = CHI.derivative(y / s) / s
        if self.variant is ExtensionVariant.FIRST_ORDER:
            fx = f(x)
            out = (1j - 1.0) * (f.derivative(x + y) - f.derivative(x)) * chi
            out = out + np.where(dchi != 0, (1j * fx - (f(x + y) - fx)) * dchi, 0.0)
        else:
            out = 1j * y * f.second_derivative(x) * chi
            out = out + np.where(dchi != 0, (1j * f(x) - y * f.derivative(x)) * dchi, 0.0)
        return 0.5 * out

    def weight(self, z):
        """(1/pi) d-bar(f~ chi): integrate against 1/(lam - z) to recover f(lam)."""
        return self.dbar(z) / np.pi


def varphi_f(z, f: TestFunction, E: float, eta: float, sigma: float):
    """First-order weight for f_eta(x) = f((x - E)/eta) with cutoff chi(y / sigma)."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if not eta > 0:
        raise DomainError("eta must be positive")
    ext = AlmostAnalyticExtension(ExtensionVariant.FIRST_ORDER, f.rescale(E, eta), sigma)
    return ext.weight(z)


def _hs_integral(ext: AlmostAnalyticExtension, eigs: np.ndarray, center: float, width: float,
                 quad_tol: float) -> complex:
    """sum_i int weight(z) / (lam_i - z) d^2 z over the strip |y| < 2 s."""
    s = ext.cutoff_scale
    eigs = np.asarray(eigs, dtype=np.float64)
    # the outer integrand is the inner x-integral; inner errors integrate over a y-range of length 4 s
    inner_tol = 0.25 * quad_tol / (4.0 * s)
    bps = tuple(float(v) for v in np.unique(eigs))

    def outer(ys):
        n = ys.size

        def g(x, k):
            z = x + 1j * ys[k]
            res = np.zeros(z.shape, dtype=np.complex128)
            for lam in eigs:
                res += 1.0 / (lam - z)
            return ext.weight(z) * res

        res = quad_mapped_batch(g, np.full(n, -np.inf), np.full(n, np.inf), center, width,
                                breakpoints=[bps] * n, abs_tol=inner_tol, rel_tol=1e-14)
        return np.array([r.value for r in res], dtype=np.complex128)

    res = adaptive_quad(outer, -2.0 * s, 2.0 * s, breakpoints=(-s, 0.0, s),
                        abs_tol=0.5 * quad_tol, rel_tol=1e-14)
    return complex(res.value)


def hs_reconstruct_scalar(ext: AlmostAnalyticExtension, lam: float, quad_tol: float = 1e-8) -> float:
    """f(lam) recovered from the extension by 2D quadrature."""
    if not quad_tol > 0:
        raise ConfigurationError("quad_tol must be positive")
    val = _hs_integral(ext, np.array([float(lam)]), float(lam), 1.0, quad_tol)
    return float(val.real)


def hs_trace(sample, f: TestFunction, E: float, eta: float, sigma: float | None = None,
             quad_tol: float = 1e-8, variant: ExtensionVariant | str = ExtensionVariant.FIRST_ORDER) -> float:
    """Tr f((H - E)/eta) from the Helffer-Sjostrand representation.

    ``sigma`` defaults to eta/4 and must satisfy 0 < sigma <= eta.
    """
    if not eta > 0:
        raise DomainError("eta must be positive")
    if sigma is None:
        sigma = eta / 4.0
    if not 0 < sigma <= eta:
        raise DomainError("need 0 < sigma <= eta")
    if not quad_tol > 0:
        raise ConfigurationError("quad_tol must be positive")
    if isinstance(sample, MatrixSample):
        sample = eigenvalues(sample)
    eigs = sample.eigenvalues if isinstance(sample, Spectrum) else np.asarray(sample, dtype=np.float64)
    ext = AlmostAnalyticExtension(variant, f.rescale(E, eta), sigma)
    return float(_hs_integral(ext, eigs, E, eta, quad_tol).real)
