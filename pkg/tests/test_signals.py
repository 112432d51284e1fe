import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncdoa.geometry import SubarrayGeometry, steering_vector
from ncdoa.signals import (CovarianceSet, NoiseModel, SourceModel, generate_snapshots,
                           psd_factor, sample_covariance, sample_covariances,
                           snr_to_noise_variance, stack_vectorize, true_covariance,
                           true_covariances)


def test_snr_convention():
    assert snr_to_noise_variance(10.0) == pytest.approx(0.1)
    assert snr_to_noise_variance(0.0, power=2.0) == pytest.approx(2.0)
    assert NoiseModel.from_snr(-20).variance == pytest.approx(100.0)


def test_true_covariance_example():
    g = SubarrayGeometry([[0, 0], [1, 0]], displacement=[0, 0])
    r = true_covariance(g, SourceModel([np.pi / 2], [2.0]), NoiseModel(0.5))
    np.testing.assert_allclose(r, [[2.5, -2], [-2, 2.5]], atol=1e-14)


def test_displacement_cancels_for_uncorrelated_sources(small_array):
    m = SourceModel(np.deg2rad([10, -40]), [1.0, 3.0])
    n = NoiseModel(0.2)
    for sub in small_array.subarrays:
        at_origin = SubarrayGeometry(sub.relative_positions)
        np.testing.assert_allclose(true_covariance(sub, m, n), true_covariance(at_origin, m, n),
                                   atol=1e-13)


def test_displacement_matters_for_correlated_sources(small_array):
    m = SourceModel.correlated_pair(np.deg2rad([10, -40]), 1.0, 0.8)
    sub = small_array.subarrays[1]
    r0 = true_covariance(SubarrayGeometry(sub.relative_positions), m, NoiseModel(0.1))
    assert np.abs(true_covariance(sub, m, NoiseModel(0.1)) - r0).max() > 1e-2


def test_rejects_non_psd_source_covariance():
    with pytest.raises(ValueError):
        SourceModel.correlated_pair([0.1, 0.2], 1.0, 1.5)


def test_psd_factor_rank_one():
    p = np.array([[1, 1], [1, 1]], complex)
    c = psd_factor(p)
    np.testing.assert_allclose(c @ c.conj().T, p, atol=1e-14)


def test_covariance_set_rejects_non_hermitian():
    with pytest.raises(ValueError):
        CovarianceSet([np.array([[1, 1j], [1j, 1]])])


def test_sample_covariance_converges(small_array):
    # E[Rhat] = R and the entrywise std is about |R| / sqrt(N)
    m = SourceModel.correlated_pair(np.deg2rad([5, 30]), 1.0, 0.5j)
    n = NoiseModel(0.3)
    N = 40000
    est = sample_covariances(generate_snapshots(small_array, m, n, N, rng=3))
    ref = true_covariances(small_array, m, n)
    for a, b in zip(est.matrices, ref.matrices):
        assert np.abs(a - b).max() < 6 * np.abs(b).max() / np.sqrt(N)
    assert est.n_snapshots == N and est.kind == "sample"


def test_independent_subarray_draws_vs_shared(small_array):
    m = SourceModel([0.2], [1.0])
    n = NoiseModel(1e-3)
    ind = generate_snapshots(small_array, m, n, 2000, rng=1)
    sh = generate_snapshots(small_array, m, n, 2000, rng=1, shared_sources=True)
    # first-sensor signals of different subarrays: uncorrelated vs fully coherent
    c_ind = abs(np.vdot(ind[0][:, 0], ind[1][:, 0])) / 2000
    c_sh = abs(np.vdot(sh[0][:, 0], sh[1][:, 0])) / 2000
    assert c_ind < 0.1 and c_sh > 0.9


def test_generation_is_seed_deterministic(small_array):
    m = SourceModel([0.2, -0.5], [1.0, 2.0])
    a = generate_snapshots(small_array, m, NoiseModel(1.0), 7, rng=np.random.SeedSequence(9))
    b = generate_snapshots(small_array, m, NoiseModel(1.0), 7, rng=np.random.SeedSequence(9))
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_sample_covariance_hermitian_psd(n, m, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    r = sample_covariance(x)
    assert np.array_equal(r, r.conj().T)
    assert np.linalg.eigvalsh(r).min() > -1e-12 * max(1.0, np.abs(r).max())
    np.testing.assert_allclose(r, sum(np.outer(v, v.conj()) for v in x) / n, atol=1e-12)


def test_stack_vectorize_order():
    r1 = np.array([[1, 2j], [-2j, 3]])
    r2 = np.array([[5.0]])
    np.testing.assert_array_equal(stack_vectorize([r1, r2]), [1, -2j, 2j, 3, 5])
