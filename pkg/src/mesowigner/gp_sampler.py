"""Samplers for the limiting Gaussian processes Y(b) and Z(f).

Y(b) = (1/sqrt 2) (2/(b+i))^2 sum_k sqrt(k+1) q(b)^k theta_k with
q(b) = (b-i)/(b+i) and i.i.d. standard complex Gaussians theta_k.  Z(f) is
drawn from its Gram matrix under the H^{1/2} covariance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .errors import ConfigurationError, DomainError, NumericalError
from .theory import TestFunction, h_half_covariance

DEFAULT_TAIL_VARIANCE = 1e-6


@dataclass(frozen=True)
class GPConfig:
    """``truncation_K=None`` picks the smallest K meeting ``target_tail_variance``."""

    truncation_K: Optional[int] = None
    seed: int = 0
    target_tail_variance: float = DEFAULT_TAIL_VARIANCE

    def __post_init__(self):
        if self.truncation_K is not None and (int(self.truncation_K) != self.truncation_K
                                              or self.truncation_K < 1):
            raise ConfigurationError("truncation_K must be a positive integer")
        if not self.target_tail_variance > 0:
            raise ConfigurationError("target_tail_variance must be positive")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")


def _check_b(b_points) -> np.ndarray:
    b = np.atleast_1d(np.asarray(b_points, dtype=np.complex128))
    if b.ndim != 1 or b.size == 0:
        raise ConfigurationError("need a nonempty list of b points")
    if np.any(b.imag <= 0):
        raise DomainError("b points must lie in the open upper half-plane")
    return b


def series_tail_variance(b, K: int) -> float:
    """E|omitted part of the series|^2 for terms k > K at a single b."""
    b = complex(b)
    rho = abs((b - 1j) / (b + 1j)) ** 2
    pref = abs((2.0 / (b + 1j)) ** 2) ** 2 / 2.0
    tail = ((K + 2) * rho ** (K + 1) - (K + 1) * rho ** (K + 2)) / (1.0 - rho) ** 2
    return pref * tail


def choose_truncation(b_points, eps: float = DEFAULT_TAIL_VARIANCE) -> int:
    """Smallest K >= 1 whose omitted tail variance is <= eps at every b."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    K = 1
    for b in _check_b(b_points):
        while series_tail_variance(b, K) > eps:
            K += 1
    return K


def series_coefficients(b_points, K: int) -> np.ndarray:
    """(|b| x (K+1)) matrix A with Y(b) = A @ theta."""
    b = _check_b(b_points)
    q = (b - 1j) / (b + 1j)
    k = np.arange(K + 1)
    pref = (2.0 / (b + 1j)) ** 2 / np.sqrt(2.0)
    return pref[:, None] * np.sqrt(k + 1.0)[None, :] * q[:, None] ** k[None, :]


def complex_gaussians(seed: int, start_row: int, num_rows: int, width: int, stream: int) -> np.ndarray:
    """Rows of standard complex Gaussians (g1 + i g2)/sqrt 2; row r uses positions r*2*width onward."""
    g = rng.normals(seed, 0, 2 * width * start_row, 2 * width * num_rows, stream)
    g = g.reshape(num_rows, width, 2)
    return (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)


def sample_Y(b_points, config: GPConfig, num_samples: int, start_row: int = 0) -> np.ndarray:
    """(num_samples x |b|) draws of (Y(b))_b, one series draw per row."""
    b = _check_b(b_points)
    if num_samples < 0:
        raise ConfigurationError("num_samples must be nonnegative")
    K = config.truncation_K or choose_truncation(b, config.target_tail_variance)
    A = series_coefficients(b, K)
    theta = complex_gaussians(config.seed, start_row, num_samples, K + 1, rng.GP_THETA)
    return theta @ A.T


def gram_matrix(f_list, tol: float = 1e-8) -> np.ndarray:
    """H^{1/2} Gram matrix; identical objects reuse the diagonal value."""
    n = len(f_list)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            if j > i and f_list[j] is f_list[i]:
                G[i, j] = G[i, i]
            else:
                G[i, j] = h_half_covariance(f_list[i], f_list[j], tol=tol)
            G[j, i] = G[i, j]
    return G


def gram_factor(G: np.ndarray) -> np.ndarray:
    """L with L @ L.T = G (PSD part) via eigendecomposition.

    Eigenvalues at round-off level are zeroed so that degenerate Gram matrices
    (duplicates, negations) give exactly dependent coordinates.  A genuinely
    negative eigenvalue in (-1e-8, 0) triggers a diagonal jitter of
    1e-10 * trace; anything below -1e-8 is an error.
    """
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    scale = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    roundoff = 64 * np.finfo(float).eps * scale * G.shape[0]
    w = np.where(np.abs(w) <= roundoff, 0.0, w)
    if w.min() < -1e-8:
        raise NumericalError("Gram matrix is indefinite", min_eigenvalue=float(w.min()))
    if w.min() < 0:
        G = G + 1e-10 * np.trace(G) * np.eye(G.shape[0])
        w, V = np.linalg.eigh(G)
    # whatever the jitter did not lift is above -1e-8 and is clipped
    return V * np.sqrt(np.maximum(w, 0.0))[None, :]


def sample_Z(f_list, num_samples: int, seed: int = 0, *, gram: np.ndarray | None = None,
             tol: float = 1e-8, start_row: int = 0) -> np.ndarray:
    """(num_samples x |f_list|) mean-zero Gaussian draws with the H^{1/2} Gram covariance."""
    f_list = list(f_list)
    if not f_list:
        raise ConfigurationError("f_list is empty")
    if not all(isinstance(f, TestFunction) for f in f_list):
        raise ConfigurationError("f_list must contain TestFunction objects")
    G = gram_matrix(f_list, tol) if gram is None else np.asarray(gram, dtype=np.float64)
    L = gram_factor(G)
    d = len(f_list)
    g = rng.normals(seed, 0, d * start_row, d * num_samples, rng.GP_Z).reshape(num_samples, d)
    return g @ L.T


def jsonl_rows(samples: np.ndarray, start_row: int = 0):
    """One JSON line per sample: {"sample_index", "values"}; complex values as [re, im]."""
    samples = np.asarray(samples)
    for r, row in enumerate(samples):
        if np.iscomplexobj(row):
            values = [[float(v.real), float(v.imag)] for v in row]
        else:
            values = [float(v) for v in row]
        yield json.dumps({"sample_index": start_row + r, "values": values})
