"""Wigner matrix sampling with position-addressable randomness.

The upper triangle (diagonal included) is enumerated row by row; entry
``(i, j)`` with ``i <= j`` sits at position ``i*N - i*(i-1)/2 + (j-i)`` of the
real-part stream and, for the complex class, the same position of the
imaginary-part stream.  A matrix is therefore a pure function of
``(master_seed, sample_index)`` and single entries can be regenerated without
building the matrix.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

from . import rng
from .batches import batch_mean_se
from .errors import ConfigurationError


class SymmetryClass(str, enum.Enum):
    REAL_SYMMETRIC = "real_symmetric"
    COMPLEX_HERMITIAN = "complex_hermitian"


class EntryLaw(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"
    HEAVY_TAIL = "heavy_tail"


DEFAULT_HEAVY_TAIL_EXPONENT = 4.5


@dataclass(frozen=True)
class EnsembleSpec:
    """How a Wigner matrix is drawn.

    ``diagonal_variance`` is the variance of ``sqrt(N) H_ii``; ``None``
    selects 2 for the real class and 1 for the complex class.
    """

    symmetry_class: SymmetryClass = SymmetryClass.REAL_SYMMETRIC
    entry_law: EntryLaw = EntryLaw.GAUSSIAN
    dimension: int = 64
    diagonal_variance: float | None = None
    heavy_tail_exponent: float = DEFAULT_HEAVY_TAIL_EXPONENT
    master_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "symmetry_class", SymmetryClass(self.symmetry_class))
            object.__setattr__(self, "entry_law", EntryLaw(self.entry_law))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if isinstance(self.dimension, bool) or int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "dimension", int(self.dimension))
        if self.diagonal_variance is None:
            zeta = 2.0 if self.symmetry_class is SymmetryClass.REAL_SYMMETRIC else 1.0
            object.__setattr__(self, "diagonal_variance", zeta)
        if not self.diagonal_variance >= 0:
            raise ConfigurationError(f"diagonal_variance must be >= 0, got {self.diagonal_variance!r}")
        object.__setattr__(self, "diagonal_variance", float(self.diagonal_variance))
        if self.entry_law is EntryLaw.HEAVY_TAIL and not self.heavy_tail_exponent > 4:
            raise ConfigurationError("heavy_tail_exponent must exceed 4")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    @property
    def is_complex(self) -> bool:
        return self.symmetry_class is SymmetryClass.COMPLEX_HERMITIAN

    def to_dict(self) -> dict:
        d = asdict(self)
        d["symmetry_class"] = self.symmetry_class.value
        d["entry_law"] = self.entry_law.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigurationError(f"unknown ensemble fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "EnsembleSpec":
        d = self.to_dict()
        d.update(changes)
        return EnsembleSpec.from_dict(d)


@dataclass(frozen=True)
class MatrixSample:
    """A drawn matrix.  Real-class matrices are stored as float64."""

    entries: np.ndarray
    dimension: int
    provenance: tuple[int, int] = (0, 0)
    symmetry_class: SymmetryClass = field(default=SymmetryClass.REAL_SYMMETRIC)


def standardize(u: np.ndarray, law: EntryLaw, exponent: float = DEFAULT_HEAVY_TAIL_EXPONENT) -> np.ndarray:
    """Map open-interval uniforms to the mean-zero, unit-variance entry law."""
    if law is EntryLaw.GAUSSIAN:
        return ndtri(u)
    if law is EntryLaw.RADEMACHER:
        return np.where(u < 0.5, -1.0, 1.0)
    if law is EntryLaw.UNIFORM:
        return np.sqrt(3.0) * (2.0 * u - 1.0)
    if law is EntryLaw.HEAVY_TAIL:
        # symmetric Pareto: P(|X| > t) = t^-a for t >= 1, E X^2 = a/(a-2)
        v = 2.0 * u - 1.0
        a = exponent
        return np.sign(v) * np.abs(v) ** (-1.0 / a) / np.sqrt(a / (a - 2.0))
    raise ConfigurationError(f"unknown entry law {law!r}")


@functools.lru_cache(maxsize=8)
def _triu(n: int):
    iu = np.triu_indices(n)
    iu[0].flags.writeable = False
    iu[1].flags.writeable = False
    return iu


def triangle_position(i, j, n: int):
    """Stream position of entry (i, j), i <= j."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - i * (i - 1) // 2 + (j - i)


def sample_matrix(spec: EnsembleSpec, sample_index: int) -> MatrixSample:
    if sample_index < 0:
        raise ConfigurationError("sample_index must be nonnegative")
    n = spec.dimension
    count = n * (n + 1) // 2
    rows, cols = _triu(n)
    diag = rows == cols
    x = standardize(rng.uniforms(spec.master_seed, sample_index, 0, count, rng.MATRIX_REAL),
                    spec.entry_law, spec.heavy_tail_exponent)
    if spec.is_complex:
        y = standardize(rng.uniforms(spec.master_seed, sample_index, 0, count, rng.MATRIX_IMAG),
                        spec.entry_law, spec.heavy_tail_exponent)
        vals = (x + 1j * y) / np.sqrt(2.0 * n)
        vals[diag] = x[diag] * np.sqrt(spec.diagonal_variance / n)
        h = np.zeros((n, n), dtype=np.complex128)
    else:
        vals = x / np.sqrt(n)
        vals[diag] = x[diag] * np.sqrt(spec.diagonal_variance / n)
        h = np.zeros((n, n), dtype=np.float64)
    h[rows, cols] = vals
    h[cols, rows] = np.conj(vals)
    return MatrixSample(h, n, (spec.master_seed, int(sample_index)), spec.symmetry_class)


def sample_entries(spec: EnsembleSpec, sample_index: int, pairs) -> np.ndarray:
    """Entries ``H[i, j]`` for the given index pairs without building the matrix."""
    n = spec.dimension
    pairs = np.atleast_2d(np.asarray(pairs, dtype=np.int64))
    i, j = pairs[:, 0], pairs[:, 1]
    if np.any((i < 0) | (j < 0) | (i >= n) | (j >= n)):
        raise ConfigurationError("entry index out of range")
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    pos = triangle_position(lo, hi, n)
    out = np.empty(len(pos), dtype=np.complex128 if spec.is_complex else np.float64)
    for k, p in enumerate(pos):
        x = standardize(rng.uniforms(spec.master_seed, sample_index, int(p), 1, rng.MATRIX_REAL),
                        spec.entry_law, spec.heavy_tail_exponent)[0]
        if lo[k] == hi[k]:
            out[k] = x * np.sqrt(spec.diagonal_variance / n)
        elif spec.is_complex:
            y = standardize(rng.uniforms(spec.master_seed, sample_index, int(p), 1, rng.MATRIX_IMAG),
                            spec.entry_law, spec.heavy_tail_exponent)[0]
            v = (x + 1j * y) / np.sqrt(2.0 * n)
            out[k] = v if i[k] <= j[k] else np.conj(v)
        else:
            out[k] = x / np.sqrt(n)
    return out


@dataclass(frozen=True)
class MomentRow:
    pair: tuple[int, int]
    mean: complex
    mean_se: complex
    variance: float
    variance_se: float
    pseudo_variance: complex
    pseudo_variance_se: complex
    fourth_moment: float
    fourth_moment_se: float
    sixth_moment: float
    sixth_moment_se: float


def entry_moment_report(spec: EnsembleSpec, num_samples: int, pairs=((0, 1), (0, 0))) -> list[MomentRow]:
    """Empirical moments of ``sqrt(N) H_ij`` over independent samples.

    ``variance`` is E|x|^2 (uncentred, the law has mean zero), ``pseudo_variance``
    is E x^2.  Error bars are batch-means standard errors.
    """
    if num_samples < 100:
        raise ConfigurationError("entry_moment_report needs num_samples >= 100")
    pairs = [tuple(int(v) for v in p) for p in pairs]
    x = np.stack([sample_entries(spec, s, pairs) for s in range(num_samples)]) * np.sqrt(spec.dimension)
    absx2 = np.abs(x) ** 2
    rows = []
    for k, p in enumerate(pairs):
        mean, mean_se = batch_mean_se(x[:, k].astype(np.complex128))
        var, var_se = batch_mean_se(absx2[:, k])
        pv, pv_se = batch_mean_se((x[:, k] ** 2).astype(np.complex128))
        m4, m4_se = batch_mean_se(absx2[:, k] ** 2)
        m6, m6_se = batch_mean_se(absx2[:, k] ** 3)
        rows.append(MomentRow(p, complex(mean), complex(mean_se), float(var), float(var_se),
                              complex(pv), complex(pv_se), float(m4), float(m4_se), float(m6), float(m6_se)))
    return rows
