"""Kolmogorov-Smirnov test against a centred Gaussian."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from ..errors import ConfigurationError

MIN_SAMPLES = 200


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """P(K > lam) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lam^2) for the Kolmogorov law."""
    if lam <= 0:
        return 1.0
    k = np.arange(1, terms + 1)
    if lam < 1.0:
        # the alternating series cancels badly for small lam; use the Jacobi-theta dual
        cdf = math.sqrt(2.0 * math.pi) / lam * np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * lam * lam)))
        return float(min(max(1.0 - cdf, 0.0), 1.0))
    s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    return float(min(max(s, 0.0), 1.0))


def ks_statistic(samples, cdf) -> float:
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_normality_test(samples, target_sd: float) -> tuple[float, float]:
    """(D, p) for samples against N(0, target_sd^2).

    The p-value uses the asymptotic Kolmogorov law with Stephens' finite-n
    correction lam = (sqrt n + 0.12 + 0.11/sqrt n) D.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise ConfigurationError(f"KS test needs at least {MIN_SAMPLES} samples, got {x.size}")
    if not target_sd > 0:
        raise ConfigurationError("target_sd must be positive")
    d = ks_statistic(x, lambda v: ndtr(v / target_sd))
    rn = math.sqrt(x.size)
    return d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)
