import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncdoa.geometry import ArrayGeometry, benchmark_array, steering_vector, vec
from ncdoa.estimators import Grid, SpiceOptions, SpiceProblem, pick_peaks, spice_solve, spice_weights
from ncdoa.estimators.grid import local_maxima
from ncdoa.signals import (CovarianceSet, NoiseModel, SourceModel, generate_snapshots,
                           sample_covariances, true_covariances)

PAIR = ArrayGeometry.from_offsets([[[0, 0], [1, 0]]])


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    K = rng.integers(1, 5)
    offs = [[[0, 0]] + [[rng.uniform(0.3, 4), 0] for _ in range(rng.integers(1, 3))]
            for _ in range(K)]
    arr = ArrayGeometry.from_offsets(offs)
    L = rng.integers(1, 4)
    m = SourceModel(np.deg2rad(rng.uniform(-70, 70, L)), rng.uniform(0.5, 2, L))
    n = NoiseModel(10 ** rng.uniform(-2, 0.5))
    cs = sample_covariances(generate_snapshots(arr, m, n, int(rng.integers(10, 100)), rng))
    return arr, cs


def test_weights_identity_example():
    w, wbar = spice_weights(PAIR, CovarianceSet([np.eye(2)]), Grid.uniform(1.0))
    np.testing.assert_allclose(w, 1.0, rtol=1e-14)
    assert wbar == pytest.approx(1.0)


def test_weights_scale_inversely():
    grid = Grid.uniform(1.0)
    r = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    w1, b1 = spice_weights(PAIR, CovarianceSet([r]), grid)
    w3, b3 = spice_weights(PAIR, CovarianceSet([3 * r]), grid)
    np.testing.assert_allclose(w3, w1 / 3, rtol=1e-12)
    assert b3 == pytest.approx(b1 / 3)


def test_weights_positive_on_benchmark():
    arr = benchmark_array()
    m = SourceModel(np.deg2rad([-11.4, -1.1]), [1.0, 1.0])
    cs = sample_covariances(generate_snapshots(arr, m, NoiseModel(0.1), 50, rng=0))
    w, wbar = spice_weights(arr, cs, Grid.uniform())
    assert w.size == 1799 and np.all(np.isfinite(w)) and np.all(w > 0) and wbar > 0


def test_singular_covariance(caplog):
    cs = CovarianceSet([np.ones((2, 2), complex)])
    with pytest.raises(np.linalg.LinAlgError):
        spice_weights(PAIR, cs, Grid.uniform(1.0), regularize=False)
    with caplog.at_level(logging.WARNING):
        w, _ = spice_weights(PAIR, cs, Grid.uniform(1.0))
    assert np.all(np.isfinite(w)) and "singular" in caplog.text


def test_size_mismatch():
    with pytest.raises(ValueError):
        spice_solve(PAIR, CovarianceSet([np.eye(3)]), Grid.uniform(1.0))


def test_exact_single_source_on_grid():
    arr = benchmark_array()
    grid = Grid.uniform(0.5)
    g0 = int(np.argmin(np.abs(grid.degrees - 20.0)))
    cs = true_covariances(arr, SourceModel([grid.radians[g0]], [1.0]), NoiseModel(0.1))
    res = spice_solve(arr, cs, grid)
    assert res.converged
    off = np.delete(res.powers, g0).sum()
    assert off < 1e-6 * res.powers.sum()


def test_white_noise_only():
    arr = benchmark_array()
    cs = CovarianceSet([0.7 * np.eye(2)] * 12, kind="true")
    res = spice_solve(arr, cs, Grid.uniform(0.5))
    mass = res.noise_weight * res.noise_variance
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert np.all(res.weights * res.powers < 1e-6)


@pytest.mark.parametrize("seed", range(50))
def test_random_instances_invariants(seed):
    arr, cs = _random_instance(seed)
    grid = Grid.uniform(1.0)
    res = spice_solve(arr, cs, grid)
    assert res.converged and res.kkt_residual < 1e-8
    assert res.constraint_residual < 1e-8
    assert np.all(res.powers >= 0) and res.noise_variance >= 0
    assert np.all(np.diff(res.objective_trace) <= 0)
    # reconstructed covariances are Hermitian positive definite
    for sub in arr.subarrays:
        v = steering_vector(sub, grid.radians)
        r = (v * res.powers) @ v.conj().T + res.noise_variance * np.eye(sub.n_sensors)
        assert np.allclose(r, r.conj().T) and np.linalg.eigvalsh(r).min() > 0


@pytest.mark.parametrize("seed", range(5))
def test_global_optimality_certificate(seed):
    # the program is convex, so nonnegative scaled gradients certify optimality
    arr, cs = _random_instance(100 + seed)
    grid = Grid.uniform(1.0)
    prob = SpiceProblem(arr, cs, grid)
    res = spice_solve(arr, cs, grid, problem=prob)
    x = np.append(res.powers, res.noise_variance) * np.sqrt(res.objective)
    f, parts = prob.evaluate(x)
    grad = prob.W - prob.q(parts)
    assert np.min(grad / prob.W) > -1e-7


def test_matches_convex_solver():
    cp = pytest.importorskip("cvxpy")
    arr = ArrayGeometry.from_offsets([[[0, 0], [1.3, 0]], [[0, 0], [2.1, 0]]])
    grid = Grid.uniform(6.0)
    m = SourceModel(np.deg2rad([-20.0, 33.0]), [1.0, 0.6])
    cs = sample_covariances(generate_snapshots(arr, m, NoiseModel(0.2), 30, rng=11))
    res = spice_solve(arr, cs, grid)

    def emb(x):
        return np.block([[x.real, -x.imag], [x.imag, x.real]])

    w, wbar = res.weights, res.noise_weight
    p = cp.Variable(grid.size, nonneg=True)
    s = cp.Variable(nonneg=True)
    terms = []
    for sub, rh in zip(arr.subarrays, cs.matrices):
        v = steering_vector(sub, grid.radians)
        rp = sum(p[g] * emb(np.outer(v[:, g], v[:, g].conj())) for g in range(grid.size))
        rp = rp + s * np.eye(2 * sub.n_sensors)
        terms.append(cp.matrix_frac(emb(np.linalg.cholesky(rh)), rp) / 2)
    prob = cp.Problem(cp.Minimize(sum(terms)), [w @ p + wbar * s == 1])
    prob.solve()
    assert res.objective <= prob.value * (1 + 1e-6)
    assert res.objective == pytest.approx(prob.value, rel=1e-5)


def test_options_cap_reports_nonconvergence():
    arr, cs = _random_instance(3)
    res = spice_solve(arr, cs, Grid.uniform(1.0), SpiceOptions(max_iter=5, warm_start=5))
    assert not res.converged
    assert res.constraint_residual < 1e-8


def test_pick_peaks_examples():
    grid = Grid(np.arange(10.0))
    spike = np.zeros(10)
    spike[4] = 1.0
    np.testing.assert_array_equal(pick_peaks(spike, grid, 1), [4.0])
    two = np.zeros(10)
    two[[2, 7]] = 1.0
    np.testing.assert_array_equal(pick_peaks(two, grid, 2), [2.0, 7.0])
    plateau = np.array([0, 1, 3, 3, 3, 1, 0, 0, 0, 0.0])
    np.testing.assert_array_equal(local_maxima(plateau), [2])
    np.testing.assert_array_equal(pick_peaks(plateau, grid, 1), [2.0])
    # fewer maxima than requested: pad with the largest remaining entries
    np.testing.assert_array_equal(pick_peaks(spike, grid, 2), [0.0, 4.0])


@given(st.lists(st.floats(0, 1), min_size=5, max_size=40), st.integers(1, 5), st.randoms())
def test_pick_peaks_sorted_members(vals, n, rnd):
    p = np.array(vals)
    grid = Grid(np.arange(p.size) * 0.5)
    n = min(n, p.size)
    out = pick_peaks(p, grid, n)
    assert out.size == n and np.all(np.diff(out) > 0)
    assert set(out) <= set(grid.degrees)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid([1.0, 1.0])
    with pytest.raises(ValueError):
        Grid.uniform(0.0)
    g = Grid.uniform()
    assert g.size == 1799 and g.degrees[0] == pytest.approx(-89.9)
