"""Monte Carlo accumulator with batch-means error bars.

Samples are kept per batch (batch of sample i is ``i * B // n``), so merging
accumulators from different workers is a disjoint union and every reduction
runs over the samples in ascending index order.  Results are therefore
bit-identical whatever the worker count or merge order.
"""
from __future__ import annotations

import numpy as np

from ..batches import DEFAULT_NUM_BATCHES, batch_mean_se, batch_of
from ..errors import ConfigurationError, ContractViolation


class MCAccumulator:
    """Observations of ``num_observables`` complex (or real) quantities per sample."""

    def __init__(self, num_samples: int, num_observables: int, num_batches: int = DEFAULT_NUM_BATCHES,
                 max_degree: int = 4, dtype=np.complex128):
        if num_samples < 1 or num_observables < 1:
            raise ConfigurationError("need at least one sample and one observable")
        if not 1 <= max_degree <= 4:
            raise ConfigurationError("max_degree must lie in 1..4")
        self.num_samples = int(num_samples)
        self.num_observables = int(num_observables)
        self.num_batches = int(num_batches)
        self.max_degree = int(max_degree)
        self.dtype = np.dtype(dtype)
        self._rows: dict[int, np.ndarray] = {}
        self.aborted: set[int] = set()

    def add(self, sample_index: int, values) -> None:
        if not 0 <= sample_index < self.num_samples:
            raise ConfigurationError("sample_index out of range")
        if sample_index in self._rows or sample_index in self.aborted:
            raise ContractViolation(f"sample {sample_index} recorded twice")
        v = np.asarray(values, dtype=self.dtype).reshape(self.num_observables)
        self._rows[int(sample_index)] = v

    def abort(self, sample_index: int) -> None:
        if sample_index in self._rows:
            raise ContractViolation(f"sample {sample_index} already recorded")
        self.aborted.add(int(sample_index))

    def _compatible(self, other: "MCAccumulator") -> None:
        same = (self.num_samples, self.num_observables, self.num_batches, self.max_degree, self.dtype) == \
               (other.num_samples, other.num_observables, other.num_batches, other.max_degree, other.dtype)
        if not same:
            raise ContractViolation("accumulators have different layouts")

    def merge(self, other: "MCAccumulator") -> "MCAccumulator":
        """Disjoint union; associative and commutative."""
        self._compatible(other)
        mine = set(self._rows) | self.aborted
        theirs = set(other._rows) | other.aborted
        if mine & theirs:
            raise ContractViolation("accumulators overlap")
        out = MCAccumulator(self.num_samples, self.num_observables, self.num_batches, self.max_degree, self.dtype)
        out._rows = {**self._rows, **other._rows}
        out.aborted = self.aborted | other.aborted
        return out

    @classmethod
    def from_samples(cls, samples, num_batches: int = DEFAULT_NUM_BATCHES, max_degree: int = 4):
        samples = np.asarray(samples)
        if samples.ndim == 1:
            samples = samples[:, None]
        acc = cls(samples.shape[0], samples.shape[1], num_batches, max_degree,
                  np.complex128 if np.iscomplexobj(samples) else np.float64)
        for i, row in enumerate(samples):
            acc.add(i, row)
        return acc

    # -- reductions -----------------------------------------------------

    @property
    def count(self) -> int:
        return len(self._rows)

    @property
    def complete(self) -> bool:
        return self.count + len(self.aborted) == self.num_samples

    def indices(self) -> np.ndarray:
        return np.array(sorted(self._rows), dtype=np.int64)

    def batch_ids(self) -> np.ndarray:
        return np.array([batch_of(i, self.num_samples, self.num_batches) for i in self.indices()])

    def samples(self) -> np.ndarray:
        """(count x num_observables) in ascending sample index."""
        idx = self.indices()
        if idx.size == 0:
            return np.empty((0, self.num_observables), dtype=self.dtype)
        return np.stack([self._rows[i] for i in idx])

    def _batched_mean(self, values):
        """Mean and batch-means SE; batches follow the sample-index partition."""
        values = np.asarray(values)
        ids = self.batch_ids()
        groups = [values[ids == b] for b in np.unique(ids)]
        means = np.stack([g.mean(axis=0) for g in groups])
        mean = values.mean(axis=0)
        nb = len(groups)
        if nb < 2:
            return mean, np.full(np.shape(mean), np.nan)
        if np.iscomplexobj(values):
            se = (means.real.std(axis=0, ddof=1) + 1j * means.imag.std(axis=0, ddof=1)) / np.sqrt(nb)
        else:
            se = means.std(axis=0, ddof=1) / np.sqrt(nb)
        return mean, se

    def mean(self):
        return self._batched_mean(self.samples())

    def centred(self) -> np.ndarray:
        """Two-pass centring: subtract the empirical mean, then the mean of the residuals."""
        x = self.samples()
        c = x - x.mean(axis=0)
        return c - c.mean(axis=0)

    def mixed_moment(self, n: int, m: int, j: int = 0, k: int | None = None, centred: bool = True):
        """E conj(X_j)^n X_k^m with batch-means SE (k defaults to j)."""
        if n < 0 or m < 0 or n + m > self.max_degree:
            raise ConfigurationError(f"degree n + m must lie in 0..{self.max_degree}")
        k = j if k is None else k
        x = self.centred() if centred else self.samples()
        vals = np.conj(x[:, j]) ** n * x[:, k] ** m
        return self._batched_mean(vals)

    def covariance(self, centred: bool = True):
        """E X_i conj(X_j) over all pairs, with SE matrices."""
        x = self.centred() if centred else self.samples()
        prod = x[:, :, None] * np.conj(x[:, None, :])
        cov, se = self._batched_mean(prod)
        if np.iscomplexobj(cov):
            # fused multiply-add leaves round-off in Im |x|^2; mirror the upper triangle so the
            # matrix is Hermitian exactly
            lo = np.tril_indices(cov.shape[0], -1)
            cov[lo] = np.conj(cov.T[lo])
            se[lo] = se.T[lo]
            d = np.diag_indices(cov.shape[0])
            cov[d] = cov[d].real
            se[d] = se[d].real
        return cov, se

    def pseudo_covariance(self, centred: bool = True):
        """E X_i X_j over all pairs, with SE matrices."""
        x = self.centred() if centred else self.samples()
        prod = x[:, :, None] * x[:, None, :]
        return self._batched_mean(prod)


__all__ = ["MCAccumulator", "batch_mean_se"]
