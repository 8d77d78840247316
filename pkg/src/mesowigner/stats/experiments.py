"""Monte Carlo experiments on Wigner spectra.

Every experiment draws matrices by sample index, so the set of samples is a
pure function of the ensemble seed.  Work is split into contiguous batches
(the same batches that define the error bars); a batch is always computed by
one worker and the results are reassembled in index order.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats as sps
from threadpoolctl import threadpool_limits

from ..batches import DEFAULT_NUM_BATCHES, batch_bounds
from ..ensemble import EnsembleSpec, sample_matrix
from ..errors import ConfigurationError, ContractViolation, DomainError, ExperimentError, NumericalError
from ..spectral import eigenvalues, linear_statistic, resolvent_matrix
from ..theory import (MesoscopicScale, TestFunction, centering_integral, get_test_function,
                      predicted_mixed_moment, resolvent_covariance, stieltjes_m)
from .accumulator import MCAccumulator
from .cumulants import sample_cumulants

MIN_SAMPLES = 64
MAX_ABORT_FRACTION = 0.01


# -- parallel batch execution -------------------------------------------------

_JOB: Optional[Callable] = None


def _run_job(bounds):
    with threadpool_limits(1):
        return [_JOB(i) for i in range(*bounds)]


def map_batches(job: Callable[[int], object], num_samples: int, num_workers: int = 1,
                num_batches: int = DEFAULT_NUM_BATCHES) -> list:
    """[job(i) for i in range(num_samples)], computed batch-wise on a process pool.

    ``job`` must be deterministic in ``i``; the output order never depends on
    ``num_workers``.  BLAS is pinned to one thread so per-sample arithmetic is
    identical in every configuration.
    """
    global _JOB
    if num_workers < 1:
        raise ConfigurationError("num_workers must be >= 1")
    bounds = batch_bounds(num_samples, num_batches)
    _JOB = job
    try:
        if num_workers == 1 or len(bounds) == 1:
            chunks = [_run_job(b) for b in bounds]
        else:
            # fork inherits the job closure; nothing needs pickling on the way in
            ctx = mp.get_context("fork")
            with ctx.Pool(min(num_workers, len(bounds))) as pool:
                chunks = pool.map(_run_job, bounds, chunksize=1)
    finally:
        _JOB = None
    return [r for chunk in chunks for r in chunk]


# -- observables from one spectrum --------------------------------------------

@dataclass
class Observables:
    """Per-sample Y-hat(b) and Z-hat(f) computed from a shared set of spectra."""

    spec: EnsembleSpec
    scale: MesoscopicScale
    num_samples: int
    b_points: tuple
    f_labels: tuple
    Y: Optional[MCAccumulator]
    Z: Optional[MCAccumulator]
    centering: np.ndarray
    aborted: list = field(default_factory=list)
    spectra: Optional[dict] = None

    @property
    def eta(self) -> float:
        return self.scale.eta(self.spec.dimension)


def _resolve_functions(f_list) -> list[TestFunction]:
    return [get_test_function(f) if isinstance(f, str) else f for f in f_list]


def collect_observables(spec: EnsembleSpec, scale: MesoscopicScale, num_samples: int, b_points=(),
                        f_list=(), *, num_workers: int = 1, num_batches: int = DEFAULT_NUM_BATCHES,
                        keep_spectra: bool = False) -> Observables:
    """Sample, diagonalize and evaluate every requested observable once per matrix.

    Y-hat(b) = N eta (G(E + b eta) - m(E + b eta)) and
    Z-hat(f) = sum_i f((lambda_i - E)/eta) - N int rho(x) f((x - E)/eta) dx.
    Samples whose solver raises are counted as aborted; more than 1% aborted
    raises ExperimentError.
    """
    if num_samples < MIN_SAMPLES:
        raise ConfigurationError(f"num_samples must be >= {MIN_SAMPLES}")
    b = np.asarray(b_points, dtype=np.complex128).ravel()
    if np.any(b.imag <= 0):
        raise DomainError("b points must lie in the upper half-plane")
    fs = _resolve_functions(f_list)
    N = spec.dimension
    E, eta = scale.energy, scale.eta(N)
    z = E + b * eta
    m = stieltjes_m(z) if b.size else np.empty(0, dtype=np.complex128)
    centering = np.array([centering_integral(f, E, eta, N) for f in fs])

    def job(i):
        try:
            spectrum = eigenvalues(sample_matrix(spec, i))
        except (NumericalError, ContractViolation):
            return i, None, None, None
        ev = spectrum.eigenvalues
        y = np.array([complex(math.fsum(v.real), math.fsum(v.imag)) for v in (1.0 / (ev[None, :] - z[:, None]))])
        y = N * eta * (y / N - m)
        zz = np.array([linear_statistic(spectrum, f, E, eta) for f in fs]) - centering
        return i, y, zz, (ev if keep_spectra else None)

    results = map_batches(job, num_samples, num_workers, num_batches)
    Y = MCAccumulator(num_samples, b.size, num_batches) if b.size else None
    Z = MCAccumulator(num_samples, len(fs), num_batches, dtype=np.float64) if fs else None
    aborted, spectra = [], ({} if keep_spectra else None)
    for i, y, zz, ev in results:
        if y is None:
            aborted.append(i)
            for acc in (Y, Z):
                if acc is not None:
                    acc.abort(i)
            continue
        if Y is not None:
            Y.add(i, y)
        if Z is not None:
            Z.add(i, zz)
        if keep_spectra:
            spectra[i] = ev
    if len(aborted) > MAX_ABORT_FRACTION * num_samples:
        raise ExperimentError(f"{len(aborted)} of {num_samples} samples aborted", aborted=aborted)
    return Observables(spec, scale, num_samples, tuple(complex(v) for v in b),
                       tuple(f.label for f in fs), Y, Z, centering, aborted, spectra)


def _check_observables(obs: Observables, spec, scale, num_samples):
    if obs.spec != spec or obs.scale != scale or obs.num_samples != num_samples:
        raise ConfigurationError("precomputed observables do not match the requested experiment")


# -- resolvent CLT ----------------------------------------------------------------

@dataclass(frozen=True)
class ResolventResult:
    b_points: tuple
    dimension: int
    eta: float
    num_samples: int
    aborted: int
    mean: np.ndarray
    mean_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    pseudo_cov: np.ndarray
    pseudo_cov_se: np.ndarray
    cov_theory: np.ndarray
    mixed_moments: dict
    samples: np.ndarray


def run_resolvent_experiment(spec: EnsembleSpec, scale: MesoscopicScale, b_points, num_samples: int, *,
                             num_workers: int = 1, observables: Observables | None = None,
                             max_degree: int = 4) -> ResolventResult:
    """Empirical second and mixed moments of Y-hat(b) with batch-means errors.

    ``cov[j, k]`` is E <Y(b_j)> conj <Y(b_k)> and ``pseudo_cov[j, k]`` is
    E <Y(b_j)> <Y(b_k)>, both with two-pass empirical centring.
    ``mixed_moments[(j, n, m)]`` is E conj<Y(b_j)>^n <Y(b_j)>^m for 2 <= n+m <= max_degree.
    """
    b = tuple(complex(v) for v in b_points)
    if observables is None:
        observables = collect_observables(spec, scale, num_samples, b, num_workers=num_workers)
    else:
        _check_observables(observables, spec, scale, num_samples)
    acc = observables.Y
    idx = [observables.b_points.index(v) for v in b]
    mean, mean_se = acc.mean()
    cov, cov_se = acc.covariance()
    pcov, pcov_se = acc.pseudo_covariance()
    sel = np.ix_(idx, idx)
    theory = np.array([[resolvent_covariance(p, q)[0] for q in b] for p in b])
    mixed = {}
    for jj, j in enumerate(idx):
        for n in range(max_degree + 1):
            for m in range(max_degree + 1 - n):
                if n + m >= 2:
                    mixed[(jj, n, m)] = acc.mixed_moment(n, m, j)
    return ResolventResult(b, spec.dimension, observables.eta, num_samples, len(observables.aborted),
                           mean[idx], mean_se[idx], cov[sel], cov_se[sel], pcov[sel], pcov_se[sel], theory,
                           mixed, acc.samples()[:, idx])


# -- linear statistics ------------------------------------------------------------

@dataclass(frozen=True)
class LinstatResult:
    labels: tuple
    dimension: int
    eta: float
    num_samples: int
    aborted: int
    mean: np.ndarray
    mean_se: np.ndarray
    variance: np.ndarray
    variance_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    cumulant3: np.ndarray
    cumulant3_se: np.ndarray
    cumulant4: np.ndarray
    cumulant4_se: np.ndarray
    samples: np.ndarray


def run_linstat_experiment(spec: EnsembleSpec, scale: MesoscopicScale, f_list, num_samples: int, *,
                           num_workers: int = 1, observables: Observables | None = None) -> LinstatResult:
    """Mean, covariance and 3rd/4th cumulants of Z-hat(f).

    The variance is the diagonal of the (two-pass centred) covariance matrix,
    so duplicated functions reproduce it exactly; cumulants are unbiased
    k-statistics.
    """
    fs = _resolve_functions(f_list)
    labels = tuple(f.label for f in fs)
    if observables is None:
        observables = collect_observables(spec, scale, num_samples, (), fs, num_workers=num_workers)
    else:
        _check_observables(observables, spec, scale, num_samples)
    acc = observables.Z
    idx = [observables.f_labels.index(lbl) for lbl in labels]
    x = acc.samples()[:, idx]
    mean, mean_se = acc.mean()
    cov, cov_se = acc.covariance()
    sel = np.ix_(idx, idx)
    cov, cov_se = cov[sel].real, cov_se[sel].real
    k3, k3se, k4, k4se = [], [], [], []
    for col in x.T:
        vals, se = sample_cumulants(col, (3, 4), acc.num_batches)
        k3.append(vals[0])
        k3se.append(se[0])
        k4.append(vals[1])
        k4se.append(se[1])
    return LinstatResult(labels, spec.dimension, observables.eta, num_samples, len(observables.aborted),
                         mean[idx], mean_se[idx], np.diag(cov).copy(), np.diag(cov_se).copy(), cov, cov_se,
                         np.array(k3), np.array(k3se), np.array(k4), np.array(k4se), x)


# -- complex versus real class ------------------------------------------------------

@dataclass(frozen=True)
class RatioResult:
    observable: str
    ratio: float
    ratio_se: float
    complex_value: float
    complex_se: float
    real_value: float
    real_se: float


def _same_but_class(a: EnsembleSpec, b: EnsembleSpec) -> bool:
    da, db = a.to_dict(), b.to_dict()
    for d, s in ((da, a), (db, b)):
        d.pop("symmetry_class")
        # a class-default diagonal variance follows the class
        if s.diagonal_variance == (1.0 if s.is_complex else 2.0):
            d.pop("diagonal_variance")
    da.pop("master_seed")
    db.pop("master_seed")
    return da == db


def _observable_value(obs: Observables, observable: str, b: complex, f_label: str):
    if observable == "abs_Y_squared":
        j = obs.b_points.index(complex(b))
        v, se = obs.Y.mixed_moment(1, 1, j)
        return float(v.real), float(se.real)
    if observable == "var_Z":
        j = obs.f_labels.index(f_label)
        cov, se = obs.Z.covariance()
        return float(cov[j, j].real), float(se[j, j].real)
    raise ConfigurationError(f"unknown observable {observable!r}; use 'abs_Y_squared' or 'var_Z'")


def complex_vs_real_ratio(spec_pair, scale: MesoscopicScale, observable: str, num_samples: int, *,
                          b: complex = 1j, f: str = "cauchy", num_workers: int = 1,
                          observables_pair=None) -> RatioResult:
    """Complex-class over real-class value of E|<Y(b)>|^2 or Var Z-hat(f).

    ``spec_pair`` is (real_spec, complex_spec) in either order; the master
    seeds may differ (independent runs make the error propagation exact).
    The error is the first-order delta-method combination of the two
    relative errors.
    """
    s1, s2 = spec_pair
    if not _same_but_class(s1, s2):
        raise ConfigurationError("spec_pair must differ only in symmetry class (and seed)")
    if observables_pair is None:
        bs = (b,) if observable == "abs_Y_squared" else ()
        fs = (f,) if observable == "var_Z" else ()
        observables_pair = [collect_observables(s, scale, num_samples, bs, fs, num_workers=num_workers)
                            for s in (s1, s2)]
    v1, e1 = _observable_value(observables_pair[0], observable, b, f)
    v2, e2 = _observable_value(observables_pair[1], observable, b, f)
    if s1.is_complex and not s2.is_complex:
        (v1, e1), (v2, e2) = (v2, e2), (v1, e1)
    # v1, e1: real class; v2, e2: complex class (identical classes keep the given order)
    ratio = v2 / v1
    se = abs(ratio) * math.hypot(e1 / v1, e2 / v2)
    return RatioResult(observable, ratio, se, v2, e2, v1, e1)


# -- bias rate ------------------------------------------------------------------

@dataclass(frozen=True)
class BiasFit:
    alpha: float
    N_list: tuple
    bias: np.ndarray
    bias_abs: np.ndarray
    bias_se: np.ndarray
    coarse_bound: np.ndarray
    coarse_bound_ok: np.ndarray
    slope: float
    slope_se: float
    slope_ci: tuple
    intercept: float
    noise_dominated: bool


def bias_of_mean_trace(obs: Observables):
    """E G-bar - m at z = E + i eta with its standard error (modulus and complex)."""
    j = obs.b_points.index(1j)
    mean, se = obs.Y.mean()
    scale = obs.spec.dimension * obs.eta
    bias = mean[j] / scale
    se_c = se[j] / scale
    absb = abs(bias)
    se_abs = math.hypot(bias.real * se_c.real, bias.imag * se_c.imag) / absb if absb > 0 else abs(se_c)
    return bias, se_c, absb, se_abs


def bias_rate_fit(spec: EnsembleSpec, alpha: float, E: float, N_list, num_samples, *, num_workers: int = 1,
                  observables_by_N: dict | None = None, confidence: float = 0.95) -> BiasFit:
    """Least-squares slope of log|E G-bar - m(E + i eta)| against log N.

    ``num_samples`` may be one count or one count per N.  The fit is flagged
    noise-dominated when any |bias| is within 3 standard errors of zero; the
    slope is still reported but carries no information about the rate then.
    """
    N_list = tuple(int(n) for n in N_list)
    if len(N_list) < 3:
        raise ConfigurationError("bias_rate_fit needs at least three values of N")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigurationError("N_list must be strictly increasing")
    counts = [int(num_samples)] * len(N_list) if np.isscalar(num_samples) else [int(c) for c in num_samples]
    if len(counts) != len(N_list):
        raise ConfigurationError("num_samples must be a count or one count per N")
    scale = MesoscopicScale(alpha, E)
    bias, se_c, absb, se_abs = [], [], [], []
    for N, n_s in zip(N_list, counts):
        s = spec.replace(dimension=N)
        obs = (observables_by_N or {}).get(N)
        if obs is None:
            obs = collect_observables(s, scale, n_s, (1j,), num_workers=num_workers)
        else:
            _check_observables(obs, s, scale, n_s)
        b, sc, a, sa = bias_of_mean_trace(obs)
        bias.append(b)
        se_c.append(sc)
        absb.append(a)
        se_abs.append(sa)
    absb, se_abs = np.array(absb), np.array(se_abs)
    logN = np.log(np.array(N_list, dtype=float))
    fit = sps.linregress(logN, np.log(absb))
    t = sps.t.ppf(0.5 + confidence / 2, len(N_list) - 2)
    bound = np.array(N_list, dtype=float) ** (alpha - 1.0)
    return BiasFit(alpha, N_list, np.array(bias), absb, se_abs, bound, absb <= bound, float(fit.slope),
                   float(fit.stderr), (float(fit.slope - t * fit.stderr), float(fit.slope + t * fit.stderr)),
                   float(fit.intercept), bool(np.any(absb <= 3.0 * se_abs)))


# -- local law -----------------------------------------------------------------

@dataclass(frozen=True)
class LocalLawRow:
    z: complex
    averaged_bound: float
    entrywise_bound: float
    averaged_violation_fraction: float
    entrywise_violation_fraction: float
    max_averaged_error: float
    max_entrywise_error: float

    @property
    def passed(self) -> bool:
        return self.averaged_violation_fraction <= 0.01 and self.entrywise_violation_fraction <= 0.01


@dataclass(frozen=True)
class LocalLawResult:
    dimension: int
    epsilon: float
    num_samples: int
    aborted: int
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def local_law_check(spec: EnsembleSpec, z_grid, num_samples: int, epsilon: float, *,
                    num_workers: int = 1) -> LocalLawResult:
    """Violation fractions of the averaged and entrywise local-law bounds.

    averaged: |G-bar - m| <= N^eps / (N eta);
    entrywise: max_ij |G_ij - delta_ij m| <= N^eps (sqrt(Im m / (N eta)) + 1/(N eta)).
    The check reports; it does not assert.
    """
    if not epsilon >= 0:
        raise ConfigurationError("epsilon must be >= 0")
    z = np.asarray(z_grid, dtype=np.complex128).ravel()
    if z.size == 0:
        raise ConfigurationError("empty z grid")
    if np.any(z.imag <= 0):
        raise DomainError("z grid must lie in the upper half-plane")
    N = spec.dimension
    m = stieltjes_m(z)
    eta = z.imag
    avg_bound = N**epsilon / (N * eta)
    ent_bound = N**epsilon * (np.sqrt(m.imag / (N * eta)) + 1.0 / (N * eta))

    def job(i):
        try:
            h = sample_matrix(spec, i)
            errs = []
            for zk, mk in zip(z, m):
                G = resolvent_matrix(h, zk)
                d = np.diag(G)
                errs.append((abs(d.mean() - mk), max(np.max(np.abs(d - mk)),
                                                      np.max(np.abs(G - np.diag(d))))))
            return np.array(errs)
        except (NumericalError, ContractViolation):
            return None

    results = map_batches(job, num_samples, num_workers)
    good = [r for r in results if r is not None]
    aborted = num_samples - len(good)
    if aborted > MAX_ABORT_FRACTION * num_samples:
        raise ExperimentError(f"{aborted} of {num_samples} samples aborted")
    errs = np.stack(good)
    rows = tuple(
        LocalLawRow(complex(z[k]), float(avg_bound[k]), float(ent_bound[k]),
                    float(np.mean(errs[:, k, 0] > avg_bound[k])), float(np.mean(errs[:, k, 1] > ent_bound[k])),
                    float(errs[:, k, 0].max()), float(errs[:, k, 1].max()))
        for k in range(z.size))
    return LocalLawResult(N, float(epsilon), num_samples, aborted, rows)


# -- mixed moments -----------------------------------------------------------------

@dataclass(frozen=True)
class MomentCell:
    n: int
    m: int
    empirical: complex
    se: complex
    predicted: float
    ratio: Optional[float]
    ratio_se: Optional[float]

    @property
    def consistent_with_zero(self) -> bool:
        return abs(self.empirical.real) <= 3 * self.se.real and abs(self.empirical.imag) <= 3 * self.se.imag


def mixed_moment_table(spec: EnsembleSpec, scale: MesoscopicScale, max_degree: int, num_samples: int, *,
                       num_workers: int = 1, observables: Observables | None = None) -> list[MomentCell]:
    """E <conj G-bar>^n <G-bar>^m at z = E + i eta against the leading prediction, 2 <= n+m <= max_degree."""
    if not 2 <= max_degree <= 4:
        raise ConfigurationError("max_degree must lie in 2..4")
    if observables is None:
        observables = collect_observables(spec, scale, num_samples, (1j,), num_workers=num_workers)
    else:
        _check_observables(observables, spec, scale, num_samples)
    j = observables.b_points.index(1j)
    N = spec.dimension
    s = N * observables.eta
    cells = []
    for n in range(max_degree + 1):
        for m in range(max_degree + 1 - n):
            if n + m < 2:
                continue
            v, se = observables.Y.mixed_moment(n, m, j)
            v, se = complex(v) / s ** (n + m), complex(se) / s ** (n + m)
            pred = predicted_mixed_moment(n, m, scale.alpha, N)
            ratio = ratio_se = None
            if pred != 0:
                ratio, ratio_se = v.real / pred, se.real / pred
            cells.append(MomentCell(n, m, v, se, pred, ratio, ratio_se))
    return cells
