"""Batch-means error bars.

Sample ``i`` of ``n`` belongs to batch ``i * B // n`` (contiguous, sizes differ
by at most one).  Batches are also the unit of parallel work, so a batch is
always produced by exactly one worker.
"""
from __future__ import annotations

import numpy as np

DEFAULT_NUM_BATCHES = 32


def batch_of(sample_index: int, num_samples: int, num_batches: int = DEFAULT_NUM_BATCHES) -> int:
    return sample_index * num_batches // num_samples


def batch_bounds(num_samples: int, num_batches: int = DEFAULT_NUM_BATCHES) -> list[tuple[int, int]]:
    """Half-open sample ranges of each nonempty batch, ascending batch id."""
    ids = np.arange(num_samples) * num_batches // num_samples
    bounds = []
    for b in range(num_batches):
        members = np.flatnonzero(ids == b)
        if members.size:
            bounds.append((int(members[0]), int(members[-1]) + 1))
    return bounds


def batch_mean_se(values, num_batches: int = DEFAULT_NUM_BATCHES, axis: int = 0):
    """Overall mean and batch-means standard error along ``axis``.

    Complex input gets independent error bars for the real and imaginary
    parts, returned as a complex number ``se_re + 1j * se_im``.
    """
    values = np.moveaxis(np.asarray(values), axis, 0)
    n = values.shape[0]
    bounds = batch_bounds(n, num_batches)
    means = np.stack([values[a:b].mean(axis=0) for a, b in bounds])
    mean = values.mean(axis=0)
    nb = len(bounds)
    if nb < 2:
        nan = np.full(np.shape(mean), np.nan)
        return mean, (nan + 1j * nan if np.iscomplexobj(values) else nan)
    if np.iscomplexobj(values):
        se = (means.real.std(axis=0, ddof=1) + 1j * means.imag.std(axis=0, ddof=1)) / np.sqrt(nb)
    else:
        se = means.std(axis=0, ddof=1) / np.sqrt(nb)
    return mean, se
