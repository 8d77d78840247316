"""Dense Hermitian eigenvalues and the raw spectral statistics built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from ._tridiag import EPS, householder_tridiagonal, implicit_ql
from .ensemble import MatrixSample
from .errors import ContractViolation, DomainError, NumericalError

MAX_SWEEPS = 30


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    dimension: int
    provenance: tuple[int, int] | None = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if ev.ndim != 1 or ev.size != self.dimension:
            raise ContractViolation("eigenvalue array must have length N")
        if ev.size > 1 and np.any(np.diff(ev) < 0):
            raise ContractViolation("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", ev)

    @classmethod
    def from_values(cls, values, provenance=None) -> "Spectrum":
        ev = np.sort(np.asarray(values, dtype=np.float64))
        return cls(ev, ev.size, provenance)


def _as_matrix(sample):
    if isinstance(sample, MatrixSample):
        return sample.entries, sample.provenance
    return np.asarray(sample), None


def tridiagonalize(h: np.ndarray, method: str = "lapack"):
    """Real symmetric tridiagonal (d, e) unitarily similar to Hermitian ``h``.

    ``method="lapack"`` calls the blocked Householder reduction (sytrd/hetrd);
    ``method="householder"`` runs the compiled unblocked reduction in this
    package.  Both return real ``d`` (length N) and ``e`` (length N, last entry 0).
    """
    n = h.shape[0]
    if method == "lapack":
        if np.iscomplexobj(h):
            _, d, e, _, info = lapack.zhetrd(h, lower=1)
        else:
            _, d, e, _, info = lapack.dsytrd(h, lower=1)
        if info != 0:
            raise NumericalError(f"Householder reduction failed (info={info})")
        ee = np.zeros(n)
        # complex hetrd already returns a real tridiagonal; moduli are a no-op there
        ee[: n - 1] = np.abs(e)
        return np.array(d, dtype=np.float64), ee
    if method == "householder":
        a = np.array(h, dtype=np.complex128 if np.iscomplexobj(h) else np.float64, order="F")
        return householder_tridiagonal(a)
    raise ValueError(f"unknown tridiagonalization method {method!r}")


def eigenvalues(sample, tol: float = EPS, method: str = "lapack") -> Spectrum:
    """All eigenvalues of a Hermitian matrix, ascending.

    Householder reduction to a real tridiagonal followed by Wilkinson-shifted
    implicit QL.  Off-diagonal entries are deflated once
    ``|e_i| <= max(tol, eps) * (|d_i| + |d_{i+1}|)``, so the absolute error is
    of order ``max(tol, eps) * ||H||``.
    """
    h, provenance = _as_matrix(sample)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ContractViolation("matrix must be square")
    if not np.array_equal(h, np.conj(h.T)):
        raise ContractViolation("matrix is not Hermitian")
    n = h.shape[0]
    if n == 1:
        return Spectrum(np.array([float(np.real(h[0, 0]))]), 1, provenance)
    if np.iscomplexobj(h) and not np.any(h.imag):
        h = np.ascontiguousarray(h.real)
    d, e = tridiagonalize(h, method)
    status = implicit_ql(d, e, max(tol, EPS), MAX_SWEEPS)
    if status < 0:
        raise NumericalError(
            f"implicit QL did not converge for eigenvalue {-status - 1} after {MAX_SWEEPS} sweeps",
            provenance=provenance, dimension=n)
    d.sort()
    trace = math.fsum(np.real(np.diag(h)))
    gap = abs(math.fsum(d) - trace)
    scale = max(1.0, float(np.max(np.abs(d))))
    if gap > n * 1e-10 * scale:
        raise NumericalError("eigenvalue sum disagrees with the trace", gap=gap, provenance=provenance)
    return Spectrum(d, n, provenance)


def _fsum_complex(values: np.ndarray) -> complex:
    return complex(math.fsum(values.real), math.fsum(values.imag))


def _eigs(spec) -> np.ndarray:
    return spec.eigenvalues if isinstance(spec, Spectrum) else np.asarray(spec, dtype=np.float64)


def trace_resolvent(spec, z: complex) -> complex:
    """(1/N) sum_i 1/(lambda_i - z)."""
    z = complex(z)
    if z.imag == 0:
        raise DomainError("trace_resolvent needs Im z != 0")
    ev = _eigs(spec)
    return _fsum_complex(1.0 / (ev - z)) / ev.size


def linear_statistic(spec, f, E: float, eta: float) -> float:
    """sum_i f((lambda_i - E) / eta)."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    ev = _eigs(spec)
    return math.fsum(np.asarray(f((ev - E) / eta), dtype=np.float64))


def resolvent_matrix(sample, z: complex, check: bool = True) -> np.ndarray:
    """G(z) = (H - z)^{-1} from one LU factorization."""
    z = complex(z)
    if z.imag == 0:
        raise DomainError("resolvent_matrix needs Im z != 0")
    h, provenance = _as_matrix(sample)
    n = h.shape[0]
    a = h.astype(np.complex128) - z * np.eye(n)
    lu = lu_factor(a, check_finite=False)
    g = lu_solve(lu, np.eye(n, dtype=np.complex128), check_finite=False)
    if check:
        # residual on a few columns keeps the check O(N^2)
        cols = np.unique(np.linspace(0, n - 1, min(n, 4)).astype(int))
        resid = np.max(np.abs(a @ g[:, cols] - np.eye(n)[:, cols]))
        bound = 1e-8 * (1.0 + 1.0 / abs(z.imag))
        if resid > bound:
            raise NumericalError("resolvent residual too large", residual=float(resid),
                                 bound=bound, provenance=provenance)
    return g


def empirical_cdf_distance(spec) -> float:
    """Kolmogorov distance between the empirical spectral CDF and the semicircle CDF."""
    from .theory import semicircle_cdf

    ev = np.sort(_eigs(spec))
    n = ev.size
    if n < 1:
        raise ContractViolation("empty spectrum")
    F = semicircle_cdf(ev)
    k = np.arange(1, n + 1)
    return float(max(np.max(k / n - F), np.max(F - (k - 1) / n)))
