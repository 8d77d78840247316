"""Moment/cumulant recursions, sample cumulants and the cumulant expansion."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from scipy.special import binom

from ..batches import DEFAULT_NUM_BATCHES, batch_bounds
from ..errors import ConfigurationError

MAX_ORDER = 8


class CumulantSource(str, enum.Enum):
    FROM_MOMENTS = "from_moments"
    FROM_SAMPLES = "from_samples"


@dataclass(frozen=True)
class CumulantVector:
    cumulants: tuple
    source: CumulantSource = CumulantSource.FROM_MOMENTS

    def __getitem__(self, k: int) -> float:
        """C_k, 1-based."""
        return self.cumulants[k - 1]

    def __len__(self):
        return len(self.cumulants)


def cumulants_from_moments(moments) -> CumulantVector:
    """Raw moments (m_1, ..., m_k) -> cumulants (C_1, ..., C_k)."""
    m = [float(v) for v in moments]
    if len(m) > MAX_ORDER:
        raise ConfigurationError(f"at most {MAX_ORDER} moments supported")
    mom = [1.0] + m
    c = []
    for k in range(1, len(m) + 1):
        c.append(mom[k] - sum(binom(k - 1, j - 1) * c[j - 1] * mom[k - j] for j in range(1, k)))
    return CumulantVector(tuple(c), CumulantSource.FROM_MOMENTS)


def moments_from_cumulants(cumulants) -> list[float]:
    """Inverse recursion m_k = sum_j binom(k-1, j-1) C_j m_{k-j}."""
    c = [float(v) for v in cumulants]
    if len(c) > MAX_ORDER:
        raise ConfigurationError(f"at most {MAX_ORDER} cumulants supported")
    mom = [1.0]
    for k in range(1, len(c) + 1):
        mom.append(sum(binom(k - 1, j - 1) * c[j - 1] * mom[k - j] for j in range(1, k + 1)))
    return mom[1:]


def sample_cumulants(x, orders=(1, 2, 3, 4), num_batches: int = DEFAULT_NUM_BATCHES):
    """Unbiased k-statistics of real samples with batch-means standard errors.

    Returns (values, errors) arrays aligned with ``orders``.  Batches hold at
    least 8 samples so every k-statistic is defined within a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 16:
        raise ConfigurationError("sample cumulants need at least 16 samples")
    vals = np.array([sps.kstat(x, k) for k in orders])
    bounds = batch_bounds(x.size, min(num_batches, x.size // 8))
    per_batch = np.array([[sps.kstat(x[a:b], k) for k in orders] for a, b in bounds])
    se = per_batch.std(axis=0, ddof=1) / np.sqrt(len(bounds))
    return vals, se


class HLaw(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    CENTERED_POISSON = "centered_poisson"


def _law_nodes(law: HLaw, num_nodes: int, variance: float, rate: float):
    """Quadrature/enumeration nodes and weights for E g(h)."""
    if law is HLaw.GAUSSIAN:
        x, w = np.polynomial.hermite_e.hermegauss(num_nodes)
        return math.sqrt(variance) * x, w / math.sqrt(2.0 * math.pi)
    if law is HLaw.RADEMACHER:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    if law is HLaw.CENTERED_POISSON:
        if not rate > 0:
            raise ConfigurationError("poisson rate must be positive")
        # the mass beyond rate + 40 sqrt(rate) + 40 is far below double precision
        kmax = int(rate + 40.0 * math.sqrt(rate) + 40.0)
        k = np.arange(kmax + 1)
        return k - rate, sps.poisson.pmf(k, rate)
    raise ConfigurationError(f"unknown law {law!r}")


def law_cumulants(law: HLaw, order: int, variance: float = 1.0, rate: float = 1.0) -> list[float]:
    """C_1 .. C_order of h."""
    if law is HLaw.GAUSSIAN:
        return [0.0, variance] + [0.0] * max(0, order - 2)
    if law is HLaw.RADEMACHER:
        moments = [1.0 if k % 2 == 0 else 0.0 for k in range(1, order + 1)]
        return list(cumulants_from_moments(moments).cumulants)
    if law is HLaw.CENTERED_POISSON:
        return [0.0] + [float(rate)] * (order - 1)
    raise ConfigurationError(f"unknown law {law!r}")


@dataclass(frozen=True)
class ExpansionCheck:
    lhs: float
    rhs: float
    residual: float


def cumulant_expansion_check(h_law, f_derivatives, order: int, num_quadrature_nodes: int = 80, *,
                             variance: float = 1.0, rate: float = 1.0) -> ExpansionCheck:
    """E f(h) h against sum_{k=0}^{order} C_{k+1}/k! E f^{(k)}(h).

    ``f_derivatives`` lists f, f', f'', ... as vectorized callables; ``order``
    may not exceed the highest supplied derivative.
    """
    try:
        law = HLaw(h_law)
    except ValueError:
        raise ConfigurationError(f"unknown law {h_law!r}; choose from {[v.value for v in HLaw]}") from None
    if order < 0:
        raise ConfigurationError("order must be nonnegative")
    if order >= len(f_derivatives):
        raise ConfigurationError(f"order {order} needs derivative {order}, only {len(f_derivatives) - 1} supplied")
    if order + 1 > MAX_ORDER:
        raise ConfigurationError(f"order limited to {MAX_ORDER - 1}")
    x, w = _law_nodes(law, num_quadrature_nodes, variance, rate)
    lhs = math.fsum(w * np.asarray(f_derivatives[0](x)) * x)
    c = law_cumulants(law, order + 1, variance, rate)
    terms = [c[k] / math.factorial(k) * math.fsum(w * np.asarray(f_derivatives[k](x))) for k in range(order + 1)]
    rhs = math.fsum(terms)
    return ExpansionCheck(lhs, rhs, lhs - rhs)
