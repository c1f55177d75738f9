import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qs3orao.features import (FeatureStream, KernelSpec, evaluate, feature_map, iteration_seed,
                              kernel_exact, kernel_matrix, sample_omega_block, standard_normal_blocks)

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_outputs(seed, n):
    """Reference SplitMix64 written with Python integers."""
    out, state = [], seed
    for _ in range(n):
        state = (state + GOLDEN) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_iteration_seeds_follow_splitmix64():
    assert iteration_seed(0, 1) == 0xE220A8397B1DCDAF
    for master in (0, 1, 12345, MASK):
        ref = splitmix64_outputs(master, 5)
        assert [iteration_seed(master, i) for i in range(1, 6)] == ref


def test_block_determinism_and_purity():
    stream = FeatureStream(42, 8, KernelSpec(0.7, 3))
    a = sample_omega_block(stream, 5)
    np.testing.assert_array_equal(a, sample_omega_block(stream, 5))
    together = stream.omega_blocks(np.arange(1, 11))
    assert together[4].tobytes() == a.tobytes()
    assert not np.array_equal(a, sample_omega_block(stream, 6))


def test_spectral_moments():
    sigma = 0.8
    stream = FeatureStream(3, 1000, KernelSpec(sigma, 2))
    w = stream.omega_blocks(np.arange(1, 51)).reshape(-1, 2)
    assert w.shape == (50_000, 2)
    se = math.sqrt(2 * sigma / w.shape[0])
    assert np.all(np.abs(w.mean(0)) < 4 * se)
    np.testing.assert_allclose(w.var(0), 2 * sigma, rtol=0.05)


def test_standard_normal_tail_sanity():
    z = standard_normal_blocks(9, np.arange(1, 101), 1000, 1).ravel()
    assert abs(np.mean(np.abs(z) > 1.96) - 0.05) < 0.005


def test_kernel_examples():
    spec = KernelSpec(1.0, 2)
    x = np.array([0.3, -1.2])
    assert kernel_exact(spec, x, x) == 1.0
    y = x + np.array([math.sqrt(math.log(2)), 0.0])
    assert kernel_exact(spec, x, y) == pytest.approx(0.5, rel=1e-12)
    assert kernel_exact(KernelSpec(1e-300, 2), x, x + 10) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        KernelSpec(0.0, 2)


def test_kernel_matrix_matches_pairwise(rng):
    spec = KernelSpec(0.6, 3)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    K = kernel_matrix(spec, A, B)
    for i in range(5):
        for j in range(4):
            assert K[i, j] == pytest.approx(kernel_exact(spec, A[i], B[j]), rel=1e-12, abs=1e-15)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(0.01, 10), st.integers(0, 1000))
def test_feature_norm_is_one(x, sigma, seed):
    omega = sample_omega_block(FeatureStream(seed, 16, KernelSpec(sigma, 3)), 1)
    phi = feature_map(omega, np.array(x))
    assert phi.shape == (32,)
    assert abs(phi @ phi - 1.0) < 1e-12


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.integers(0, 100))
def test_feature_inner_product_bounded(xs, seed):
    omega = sample_omega_block(FeatureStream(seed, 8, KernelSpec(1.0, 2)), 3)
    a = feature_map(omega, np.array(xs[:2]))
    b = feature_map(omega, np.array(xs[2:]))
    assert abs(a @ b) <= 1 + 1e-12


def test_same_point_inner_product_is_one(rng):
    omega = sample_omega_block(FeatureStream(0, 32, KernelSpec(2.0, 4)), 1)
    x = rng.normal(size=4)
    assert feature_map(omega, x) @ feature_map(omega, x.copy()) == pytest.approx(1.0, abs=1e-12)


def test_monte_carlo_kernel_value():
    spec = KernelSpec(0.5, 1)
    omega = FeatureStream(1, 10_000, spec).omega_blocks([1])[0]
    x, y = np.array([0.0]), np.array([1.0])
    assert abs(feature_map(omega, x) @ feature_map(omega, y) - math.exp(-0.5)) < 0.02


def test_feature_map_dimension_error():
    omega = sample_omega_block(FeatureStream(0, 4, KernelSpec(1.0, 2)), 1)
    with pytest.raises(ValueError):
        feature_map(omega, np.zeros(3))


def test_evaluate_matches_blockwise_sum(rng):
    stream = FeatureStream(5, 6, KernelSpec(0.9, 2))
    coef = rng.normal(size=(25, 12))
    X = rng.normal(size=(7, 2))
    ref = np.zeros(7)
    for i in range(1, 26):
        ref += feature_map(sample_omega_block(stream, i), X) @ coef[i - 1]
    np.testing.assert_allclose(evaluate(stream, coef, X), ref, rtol=1e-12, atol=1e-12)


def test_evaluate_row_independent_of_batch(rng):
    stream = FeatureStream(8, 5, KernelSpec(1.3, 3))
    coef = rng.normal(size=(40, 10))
    X = rng.normal(size=(9, 3))
    full = evaluate(stream, coef, X)
    for r in range(9):
        assert evaluate(stream, coef, X[r:r + 1])[0] == full[r]


def test_evaluate_empty_model_is_zero(rng):
    stream = FeatureStream(0, 3, KernelSpec(1.0, 2))
    np.testing.assert_array_equal(evaluate(stream, np.zeros((0, 6)), rng.normal(size=(4, 2))), 0.0)
