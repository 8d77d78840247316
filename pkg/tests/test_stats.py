import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from mesowigner import ConfigurationError, ContractViolation, DomainError, EnsembleSpec, NumericalError
from mesowigner.errors import ExperimentError
from mesowigner.stats import (MCAccumulator, collect_observables, complex_vs_real_ratio, cumulant_expansion_check,
                              cumulants_from_moments, ks_normality_test, local_law_check, map_batches,
                              mixed_moment_table, moments_from_cumulants, run_linstat_experiment,
                              run_resolvent_experiment, bias_rate_fit)
from mesowigner.stats import experiments
from mesowigner.stats.cumulants import law_cumulants, sample_cumulants, HLaw
from mesowigner.stats.normality import kolmogorov_sf, ks_statistic
from mesowigner.batches import batch_mean_se
from mesowigner.theory import MesoscopicScale, stieltjes_m

SCALE = MesoscopicScale(0.5, 0.0)


# -- accumulator ---------------------------------------------------------------

def complex_samples(n, d, seed=0):
    g = np.random.default_rng(seed)
    return g.normal(size=(n, d)) + 1j * g.normal(size=(n, d))


@given(n=st.integers(64, 300), parts=st.integers(1, 6), seed=st.integers(0, 1000), data=st.data())
def test_merge_order_does_not_matter(n, parts, seed, data):
    x = complex_samples(n, 2, seed)
    perm = data.draw(st.permutations(range(n)))
    cuts = sorted(data.draw(st.lists(st.integers(0, n), min_size=parts - 1, max_size=parts - 1)))
    chunks = np.split(np.array(perm), cuts)
    accs = []
    for chunk in chunks:
        acc = MCAccumulator(n, 2)
        for i in chunk:
            acc.add(int(i), x[i])
        accs.append(acc)
    order = data.draw(st.permutations(range(len(accs))))
    merged = accs[order[0]]
    for k in order[1:]:
        merged = merged.merge(accs[k])
    ref = MCAccumulator.from_samples(x)
    for name in ("mean", "covariance", "pseudo_covariance"):
        a, b = getattr(merged, name)(), getattr(ref, name)()
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.array_equal(merged.mixed_moment(2, 2, 1)[0], ref.mixed_moment(2, 2, 1)[0])


@given(n=st.integers(64, 500), seed=st.integers(0, 1000), shift=st.floats(-1e3, 1e3))
def test_two_pass_centring_sums_to_zero(n, seed, shift):
    x = complex_samples(n, 3, seed) + shift
    c = MCAccumulator.from_samples(x).centred()
    assert np.all(np.abs(c.sum(axis=0)) <= n * np.finfo(float).eps * np.abs(x).max())


@given(n=st.integers(64, 300), seed=st.integers(0, 1000))
def test_conjugation_consistency_is_exact(n, seed):
    acc = MCAccumulator.from_samples(complex_samples(n, 3, seed))
    cov, se = acc.covariance()
    assert np.array_equal(cov, np.conj(cov.T))
    assert np.array_equal(se, se.T)


def test_standard_errors_are_batch_means():
    x = complex_samples(640, 1, 3)[:, 0]
    acc = MCAccumulator.from_samples(x)
    mean, se = acc.mean()
    batches = x.reshape(32, 20).mean(axis=1)
    assert se[0].real == pytest.approx(batches.real.std(ddof=1) / math.sqrt(32), rel=1e-12)
    assert se[0].imag == pytest.approx(batches.imag.std(ddof=1) / math.sqrt(32), rel=1e-12)
    m, s = batch_mean_se(x)
    assert m == pytest.approx(mean[0]) and s == pytest.approx(se[0])


def test_mixed_moment_hand_value():
    x = np.array([1 + 1j, -1 - 1j] * 40)
    acc = MCAccumulator.from_samples(x)
    # conj(x) x = 2 and conj(x)^2 x^2 = 4 on every sample
    assert acc.mixed_moment(1, 1)[0] == pytest.approx(2.0)
    assert acc.mixed_moment(2, 2)[0] == pytest.approx(4.0)
    assert acc.mixed_moment(0, 2)[0] == pytest.approx(2j)


def test_accumulator_contracts():
    acc = MCAccumulator(10, 1)
    acc.add(0, [1.0])
    with pytest.raises(ContractViolation):
        acc.add(0, [1.0])
    with pytest.raises(ContractViolation):
        acc.abort(0)
    other = MCAccumulator(10, 1)
    other.add(0, [2.0])
    with pytest.raises(ContractViolation):
        acc.merge(other)
    with pytest.raises(ContractViolation):
        acc.merge(MCAccumulator(10, 2))
    with pytest.raises(ConfigurationError):
        acc.mixed_moment(3, 2)


# -- cumulants -----------------------------------------------------------------

def test_cumulant_examples():
    assert cumulants_from_moments([0, 1, 0, 3]).cumulants == pytest.approx((0, 1, 0, 0))
    assert cumulants_from_moments([0, 1, 0, 1])[4] == -2
    assert cumulants_from_moments([0, 0, 0, 0]).cumulants == (0, 0, 0, 0)
    with pytest.raises(ConfigurationError):
        cumulants_from_moments([0] * 9)


@given(c=st.lists(st.floats(-3, 3), min_size=1, max_size=8))
def test_cumulant_moment_round_trip(c):
    back = cumulants_from_moments(moments_from_cumulants(c)).cumulants
    assert back == pytest.approx(c, abs=1e-9 * (1 + max(abs(v) for v in c)) ** 8)


def test_gaussian_moments_have_vanishing_higher_cumulants():
    # Gaussian mean mu, variance s2: raw moments from the Hermite recursion
    mu, s2 = 0.7, 1.3
    m = [1.0, mu]
    for k in range(2, 9):
        m.append(mu * m[k - 1] + (k - 1) * s2 * m[k - 2])
    c = cumulants_from_moments(m[1:]).cumulants
    assert c[:2] == pytest.approx((mu, s2))
    assert np.allclose(c[2:], 0, atol=1e-9)


def test_law_cumulants():
    assert law_cumulants(HLaw.RADEMACHER, 6) == pytest.approx([0, 1, 0, -2, 0, 16])
    assert law_cumulants(HLaw.CENTERED_POISSON, 5, rate=2.5) == [0, 2.5, 2.5, 2.5, 2.5]
    assert law_cumulants(HLaw.GAUSSIAN, 4, variance=2.0) == [0, 2.0, 0, 0]


def test_sample_cumulants_against_scipy_kstat():
    x = np.random.default_rng(4).normal(size=6400)
    vals, se = sample_cumulants(x, (2, 3, 4))
    assert vals == pytest.approx([sps.kstat(x, k) for k in (2, 3, 4)])
    assert abs(vals[0] - 1) <= 4 * se[0]
    assert abs(vals[1]) <= 4 * se[1] and abs(vals[2]) <= 4 * se[2]
    with pytest.raises(ConfigurationError):
        sample_cumulants(x[:15])


def test_expansion_examples():
    r = cumulant_expansion_check("gaussian", [np.sin, np.cos], 1)
    assert r.lhs == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert abs(r.residual) <= 1e-8
    cube = [lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x, lambda x: 6 + 0 * x]
    r = cumulant_expansion_check("rademacher", cube, 3)
    assert (r.lhs, r.rhs, r.residual) == (1.0, 1.0, 0.0)
    lin = [lambda x: 3 * x - 2, lambda x: 3 + 0 * x]
    for law in HLaw:
        assert abs(cumulant_expansion_check(law, lin, 1).residual) <= 1e-14


def test_stein_identity_with_variance():
    s2 = 2.0
    r = cumulant_expansion_check("gaussian", [np.sin, np.cos], 1, variance=s2)
    assert r.lhs == pytest.approx(s2 * math.exp(-s2 / 2), abs=1e-12)
    assert abs(r.residual) <= 1e-8


def test_expansion_residual_shrinks_with_order():
    fs = [lambda x, k=k: 0.5**k * np.exp(0.5 * x) for k in range(8)]
    res = [abs(cumulant_expansion_check("centered_poisson", fs, order).residual) for order in range(1, 7)]
    assert all(b < a for a, b in zip(res, res[1:]))
    # odd Rademacher cumulants vanish, so only every second order improves
    res = [abs(cumulant_expansion_check("rademacher", fs, order).residual) for order in range(1, 7)]
    assert all(b <= a for a, b in zip(res, res[1:])) and res[-1] < 0.05 * res[0]


def test_expansion_errors():
    with pytest.raises(ConfigurationError):
        cumulant_expansion_check("gaussian", [np.sin, np.cos], 2)
    with pytest.raises(ConfigurationError):
        cumulant_expansion_check("laplace", [np.sin, np.cos], 1)


# -- Kolmogorov-Smirnov --------------------------------------------------------

@given(lam=st.floats(0.05, 4))
def test_kolmogorov_sf_against_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(sps.kstwobign.sf(lam), abs=1e-12)


@given(seed=st.integers(0, 10**6), n=st.integers(200, 2000), sd=st.floats(0.1, 10))
def test_ks_statistic_properties(seed, n, sd):
    x = np.random.default_rng(seed).standard_t(5, size=n)
    d, p = ks_normality_test(x, 1.0)
    assert 0 <= d <= 1 and 0 <= p <= 1
    assert d == pytest.approx(sps.kstest(x, "norm").statistic, abs=1e-14)
    assert ks_normality_test(sd * x, sd)[0] == pytest.approx(d, abs=1e-12)


def test_ks_constant_samples_and_minimum_size():
    d, p = ks_normality_test(np.zeros(500), 1.0)
    assert d >= 0.5 and p < 1e-12
    with pytest.raises(ConfigurationError):
        ks_normality_test(np.zeros(199), 1.0)


def test_ks_self_calibration():
    g = np.random.default_rng(77)
    p = [ks_normality_test(g.normal(0, 0.5, 10_000), 0.5)[1] for _ in range(100)]
    # the count of p < 0.01 is Binomial(100, 0.01); five or more has probability 0.3%
    assert sum(v < 0.01 for v in p) < 5
    assert ks_statistic([0.0], lambda v: 0.5 + 0 * v) == 0.5


# -- experiments ----------------------------------------------------------------

def test_map_batches_is_worker_independent():
    job = lambda i: (i, i * i)  # noqa: E731
    one = map_batches(job, 100, 1)
    assert one == [(i, i * i) for i in range(100)]
    assert map_batches(job, 100, 3) == one
    with pytest.raises(ConfigurationError):
        map_batches(job, 10, 0)


def test_observables_shapes_and_errors():
    spec = EnsembleSpec(dimension=24, master_seed=1)
    obs = collect_observables(spec, SCALE, 64, (1j, 2j), ("cauchy", "gauss"))
    assert obs.Y.samples().shape == (64, 2) and obs.Z.samples().shape == (64, 2)
    assert obs.aborted == []
    with pytest.raises(ConfigurationError):
        collect_observables(spec, SCALE, 63, (1j,))
    with pytest.raises(DomainError):
        collect_observables(spec, SCALE, 64, (-1j,))


def test_observable_values_by_hand():
    spec = EnsembleSpec(dimension=16, master_seed=2)
    obs = collect_observables(spec, SCALE, 64, (1j,), (), keep_spectra=True)
    ev = obs.spectra[5]
    eta = 16**-0.5
    z = 1j * eta
    expected = 16 * eta * (np.mean(1 / (ev - z)) - stieltjes_m(z))
    assert obs.Y.samples()[5, 0] == pytest.approx(expected, rel=1e-12)


def test_resolvent_and_linstat_results():
    spec = EnsembleSpec(dimension=32, master_seed=3)
    b = (1j, 1 + 1j)
    obs = collect_observables(spec, SCALE, 96, b, ("cauchy", "cauchy"))
    r = run_resolvent_experiment(spec, SCALE, b, 96, observables=obs)
    assert np.array_equal(r.cov, np.conj(r.cov.T))
    assert r.cov_theory[0, 1] == pytest.approx(0.24 - 0.32j)
    assert (0, 1, 1) in r.mixed_moments and (1, 4, 0) in r.mixed_moments
    ls = run_linstat_experiment(spec, SCALE, ("cauchy", "cauchy"), 96, observables=obs)
    assert ls.cov[0, 1] == ls.variance[0] == ls.cov[0, 0]
    with pytest.raises(ConfigurationError):
        run_resolvent_experiment(spec, SCALE, b, 128, observables=obs)


def test_ratio_of_identical_runs_is_one():
    spec = EnsembleSpec(dimension=32, master_seed=4)
    obs = collect_observables(spec, SCALE, 64, (1j,), ("cauchy",))
    for observable in ("abs_Y_squared", "var_Z"):
        r = complex_vs_real_ratio((spec, spec), SCALE, observable, 64, observables_pair=(obs, obs))
        assert r.ratio == 1.0
    with pytest.raises(ConfigurationError):
        complex_vs_real_ratio((spec, spec.replace(dimension=16)), SCALE, "var_Z", 64)
    with pytest.raises(ConfigurationError):
        complex_vs_real_ratio((spec, spec), SCALE, "kurtosis", 64, observables_pair=(obs, obs))


def test_small_ratio_run_is_near_one_half():
    real = EnsembleSpec(dimension=64, master_seed=5)
    cplx = EnsembleSpec(symmetry_class="complex_hermitian", dimension=64, master_seed=6)
    r = complex_vs_real_ratio((real, cplx), MesoscopicScale(0.3, 0.0), "abs_Y_squared", 256)
    assert abs(r.ratio - 0.5) <= 4 * r.ratio_se


def test_bias_rate_fit_contract():
    with pytest.raises(ConfigurationError):
        bias_rate_fit(EnsembleSpec(), 0.5, 0.0, (64, 128), 64)
    with pytest.raises(ConfigurationError):
        bias_rate_fit(EnsembleSpec(), 0.5, 0.0, (64, 32, 128), 64)
    fit = bias_rate_fit(EnsembleSpec(master_seed=7), 0.5, 0.0, (16, 32, 64), 64)
    assert len(fit.bias_abs) == 3 and fit.slope_ci[0] <= fit.slope <= fit.slope_ci[1]
    assert np.allclose(fit.coarse_bound, np.array([16, 32, 64.0]) ** -0.5)


def test_local_law_far_from_spectrum():
    N, eps = 128, 0.2
    r = local_law_check(EnsembleSpec(dimension=N, master_seed=8), [0.5 + 10j], 64, eps)
    row = r.rows[0]
    assert row.averaged_bound == pytest.approx(N**eps / (N * 10))
    assert row.max_averaged_error <= row.averaged_bound
    assert r.passed


def test_local_law_without_slack_reports():
    r = local_law_check(EnsembleSpec(dimension=128, master_seed=8), [0.1 + 128**-0.5 * 1j], 64, 0.0)
    row = r.rows[0]
    assert 0 <= row.averaged_violation_fraction <= 1 and 0 <= row.entrywise_violation_fraction <= 1
    assert r.passed == row.passed
    with pytest.raises(ConfigurationError):
        local_law_check(EnsembleSpec(dimension=16), [1j], 64, -0.1)


def test_local_law_averaged_bound_at_bulk_scale():
    N = 512
    r = local_law_check(EnsembleSpec(dimension=N, master_seed=9), [0.1 + 1j * N**-0.5], 24, 0.2)
    assert r.rows[0].averaged_violation_fraction == 0.0


@pytest.mark.xfail(strict=True, reason="the entrywise bound with N^0.2 slack is exceeded at N=512")
def test_local_law_full_check_at_bulk_scale():
    N = 512
    r = local_law_check(EnsembleSpec(dimension=N, master_seed=9), [0.1 + 1j * N**-0.5], 24, 0.2)
    assert r.passed


def test_mixed_moment_table_layout():
    spec = EnsembleSpec(dimension=32, master_seed=10)
    cells = mixed_moment_table(spec, SCALE, 4, 64)
    assert sorted((c.n, c.m) for c in cells) == sorted(
        (n, m) for n in range(5) for m in range(5) if 2 <= n + m <= 4)
    for c in cells:
        assert (c.ratio is None) == (c.n != c.m)
    with pytest.raises(ConfigurationError):
        mixed_moment_table(spec, SCALE, 5, 64)


def test_aborted_samples(monkeypatch):
    real = experiments.eigenvalues

    def flaky(sample, *a, **k):
        if sample.provenance[1] in bad:
            raise NumericalError("forced failure")
        return real(sample, *a, **k)

    monkeypatch.setattr(experiments, "eigenvalues", flaky)
    spec = EnsembleSpec(dimension=8, master_seed=11)
    bad = {3}
    obs = collect_observables(spec, SCALE, 128, (1j,))
    assert obs.aborted == [3] and obs.Y.count == 127
    bad = {3, 4}
    with pytest.raises(ExperimentError):
        collect_observables(spec, SCALE, 128, (1j,))
