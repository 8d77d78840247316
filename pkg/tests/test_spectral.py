import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mesowigner import (ContractViolation, DomainError, EnsembleSpec, Spectrum, eigenvalues, linear_statistic,
                        resolvent_matrix, sample_matrix, trace_resolvent)
from mesowigner.spectral import empirical_cdf_distance
from mesowigner.theory import get_test_function, semicircle_quantile

classes = st.sampled_from(["real_symmetric", "complex_hermitian"])
seeds = st.integers(0, 2**32)


def char_poly(a):
    """Faddeev-LeVerrier coefficients, independent of any eigenvalue routine."""
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.array(coeffs)


def test_two_by_two_swap():
    assert np.allclose(eigenvalues(np.array([[0.0, 1.0], [1.0, 0.0]])).eigenvalues, [-1, 1], atol=1e-15)


def test_rank_one_all_ones():
    assert np.allclose(eigenvalues(np.ones((3, 3))).eigenvalues, [0, 0, 3], atol=1e-14)


@given(cls=classes, n=st.integers(2, 4), seed=seeds)
def test_eigenvalues_match_companion_roots(cls, n, seed):
    h = sample_matrix(EnsembleSpec(cls, dimension=n, master_seed=seed), 0).entries
    roots = np.sort(np.roots(char_poly(h)).real)
    assert np.max(np.abs(eigenvalues(h).eigenvalues - roots)) <= 1e-8


@given(cls=classes, n=st.integers(1, 16), seed=seeds)
def test_eigenvalue_residuals(cls, n, seed):
    h = sample_matrix(EnsembleSpec(cls, dimension=n, master_seed=seed), 1).entries
    sp = eigenvalues(h)
    norm = np.linalg.norm(h, 2)
    for lam in sp.eigenvalues:
        # min over unit v of ||(H - lam) v|| is the smallest singular value
        smin = np.linalg.svd(h - lam * np.eye(n), compute_uv=False)[-1]
        assert smin <= 1e-8 * max(norm, 1.0)


@given(cls=classes, n=st.integers(1, 40), seed=seeds, shift=st.floats(-3, 3))
def test_weyl_shift_and_trace(cls, n, seed, shift):
    h = sample_matrix(EnsembleSpec(cls, dimension=n, master_seed=seed), 2).entries
    sp = eigenvalues(h)
    shifted = eigenvalues(h + shift * np.eye(n))
    assert np.allclose(shifted.eigenvalues, sp.eigenvalues + shift, atol=1e-12 * (1 + abs(shift)))
    assert np.all(np.diff(sp.eigenvalues) >= 0)
    assert abs(math.fsum(sp.eigenvalues) - np.trace(h).real) <= n * 1e-10 * max(1.0, np.abs(sp.eigenvalues).max())


@given(cls=classes, n=st.integers(2, 60), seed=seeds)
def test_own_reduction_agrees_with_lapack_reduction(cls, n, seed):
    h = sample_matrix(EnsembleSpec(cls, dimension=n, master_seed=seed), 0).entries
    a = eigenvalues(h).eigenvalues
    b = eigenvalues(h, method="householder").eigenvalues
    assert np.allclose(a, b, atol=1e-12)


def test_non_hermitian_input_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        eigenvalues(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ContractViolation):
        eigenvalues(np.zeros((2, 3)))


def test_trace_resolvent_examples():
    assert trace_resolvent(Spectrum.from_values([0.0]), 1j) == pytest.approx(1j, abs=1e-15)
    assert trace_resolvent(Spectrum.from_values([-1.0, 1.0]), 1j) == pytest.approx(0.5j, abs=1e-15)
    with pytest.raises(DomainError):
        trace_resolvent(Spectrum.from_values([0.0]), 1.0)


@given(seed=seeds, x=st.floats(-3, 3), y=st.floats(1e-4, 5))
def test_trace_resolvent_herglotz_and_conjugation(seed, x, y):
    sp = eigenvalues(sample_matrix(EnsembleSpec(dimension=12, master_seed=seed), 0))
    z = complex(x, y)
    g = trace_resolvent(sp, z)
    assert g.imag > 0
    assert trace_resolvent(sp, z.conjugate()) == pytest.approx(g.conjugate(), rel=1e-14, abs=1e-300)
    direct = np.mean(y / ((sp.eigenvalues - x) ** 2 + y * y))
    assert g.imag == pytest.approx(direct, rel=1e-12)


def test_linear_statistic_examples():
    f = get_test_function("cauchy")
    assert linear_statistic(Spectrum.from_values([0.0]), f, 0.0, 1.0) == 1.0
    assert linear_statistic(Spectrum.from_values([-1.0, 1.0]), f, 0.0, 1.0) == 1.0
    zero = get_test_function("zero")
    assert linear_statistic(Spectrum.from_values([-1.0, 0.3, 2.0]), zero, 0.1, 0.5) == 0.0
    with pytest.raises(DomainError):
        linear_statistic(Spectrum.from_values([0.0]), f, 0.0, 0.0)


def test_resolvent_matrix_examples():
    g = resolvent_matrix(np.zeros((2, 2)), 1j)
    assert np.allclose(g, 1j * np.eye(2), atol=1e-15)
    with pytest.raises(DomainError):
        resolvent_matrix(np.zeros((2, 2)), 0.5)


@pytest.mark.parametrize("cls", ["real_symmetric", "complex_hermitian"])
def test_resolvent_matrix_trace_and_symmetry(cls):
    s = sample_matrix(EnsembleSpec(cls, dimension=48, master_seed=8), 0)
    sp = eigenvalues(s)
    for z in (0.2 + 0.01j, -1.5 + 0.3j, 3.0 + 2.0j):
        g = resolvent_matrix(s, z)
        assert abs(np.trace(g) / 48 - trace_resolvent(sp, z)) <= 1e-6
        h = s.entries
        assert np.max(np.abs((h - z * np.eye(48)) @ g - np.eye(48))) <= 1e-8 * (1 + 1 / abs(z.imag))
        if cls == "real_symmetric":
            assert np.allclose(g, g.T, atol=1e-12)


def test_empirical_cdf_distance_examples():
    q = [semicircle_quantile(p) for p in (0.125, 0.375, 0.625, 0.875)]
    assert empirical_cdf_distance(Spectrum.from_values(q)) <= 0.25
    assert empirical_cdf_distance(Spectrum.from_values([5.0])) == 1.0
    sp = eigenvalues(sample_matrix(EnsembleSpec(dimension=1024, master_seed=3), 0))
    assert empirical_cdf_distance(sp) <= 0.05


def test_spectrum_contract():
    with pytest.raises(ContractViolation):
        Spectrum(np.array([1.0, 0.0]), 2)
    with pytest.raises(ContractViolation):
        Spectrum(np.array([0.0, 1.0]), 3)
