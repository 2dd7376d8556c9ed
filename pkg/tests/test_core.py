import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mcscan.core import (
    MAD_CONSTANT,
    RegressionDataset,
    build_cross_sums,
    interval_gram,
    interval_mean,
    mad_scales,
    mad_standardize,
)
from mcscan.errors import DomainError, InputError


def test_cross_sums_hand_example():
    S = build_cross_sums(RegressionDataset([[1.0], [2.0]], [3.0, 4.0])).S
    np.testing.assert_array_equal(S, [[0.0], [3.0], [11.0]])


def test_cross_sums_two_columns():
    S = build_cross_sums(RegressionDataset([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])).S
    np.testing.assert_array_equal(S, [[0, 0], [1, 0], [1, 1]])


def test_zero_regressor_gives_zero_column(rng):
    X = rng.standard_normal((10, 3))
    X[:, 1] = 0.0
    S = build_cross_sums(RegressionDataset(X, rng.standard_normal(10))).S
    assert np.all(S[:, 1] == 0.0)


@pytest.mark.parametrize(
    "X, y",
    [
        ([[1.0], [np.nan]], [1.0, 2.0]),
        ([[1.0], [2.0]], [np.inf, 2.0]),
        ([[1.0]], [1.0]),
        ([[1.0], [2.0]], [1.0, 2.0, 3.0]),
    ],
)
def test_invalid_data_rejected(X, y):
    with pytest.raises(InputError):
        RegressionDataset(X, y)


def test_dataset_is_read_only(rng):
    data = RegressionDataset(rng.standard_normal((4, 2)), rng.standard_normal(4))
    with pytest.raises(ValueError):
        data.X[0, 0] = 1.0


def test_interval_mean_examples():
    sums = build_cross_sums(RegressionDataset([[1.0], [2.0]], [3.0, 4.0]))
    assert interval_mean(sums, 0, 2).gamma_hat[0] == 5.5
    assert interval_mean(sums, 0, 1).gamma_hat[0] == 3.0
    assert 2 * interval_mean(sums, 0, 2).gamma_hat[0] == (
        interval_mean(sums, 0, 1).gamma_hat[0] + interval_mean(sums, 1, 2).gamma_hat[0]
    )


@pytest.mark.parametrize("a, b", [(1, 1), (2, 1), (-1, 1), (0, 3)])
def test_interval_mean_bad_bounds(a, b):
    sums = build_cross_sums(RegressionDataset([[1.0], [2.0]], [3.0, 4.0]))
    with pytest.raises(DomainError):
        interval_mean(sums, a, b)


def test_interval_gram_examples(rng):
    g = interval_gram(RegressionDataset([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]), 0, 2)
    np.testing.assert_array_equal(g.sigma_hat, 0.5 * np.eye(2))
    one = interval_gram(RegressionDataset([[2.0], [1.0]], [0.0, 0.0]), 0, 1)
    np.testing.assert_array_equal(one.sigma_hat, [[4.0]])
    X = rng.standard_normal((30, 4))
    full = interval_gram(RegressionDataset(X, np.zeros(30)), 0, 30).sigma_hat
    np.testing.assert_allclose(full, X.T @ X / 30, rtol=1e-12)
    with pytest.raises(DomainError):
        interval_gram(RegressionDataset(X, np.zeros(30)), 5, 5)


def test_mad_hand_example():
    data = RegressionDataset(np.array([[1.0], [3.0], [1.0]]), np.ones(3))
    # differences {2, -2}/sqrt(2); median 0; MAD sqrt(2)
    assert mad_scales(data)[0] == pytest.approx(MAD_CONSTANT * math.sqrt(2.0))


def test_mad_zero_guard():
    data = RegressionDataset(np.ones((5, 1)), 2.0 * np.ones(5))
    scales = mad_scales(data)
    assert scales[0] == 1.0
    std, _ = mad_standardize(data)
    np.testing.assert_array_equal(std.X, data.X)


finite = st.floats(-100, 100, allow_nan=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(2, 25), st.integers(1, 4)), elements=finite), st.data())
def test_mean_telescopes_and_matches_direct(X, draw):
    n = X.shape[0]
    y = draw.draw(arrays(np.float64, n, elements=finite))
    sums = build_cross_sums(RegressionDataset(X, y))
    a = draw.draw(st.integers(0, n - 1))
    b = draw.draw(st.integers(a + 1, n))
    direct = (X[a:b] * y[a:b, None]).sum(axis=0) / (b - a)
    np.testing.assert_allclose(interval_mean(sums, a, b).gamma_hat, direct, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose((b - a) * interval_mean(sums, a, b).gamma_hat, sums.S[b] - sums.S[a], rtol=1e-12, atol=1e-12)
    assert np.all(sums.S[0] == 0)


@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 5)), elements=finite))
def test_gram_symmetric_psd(X):
    g = interval_gram(RegressionDataset(X, np.zeros(X.shape[0])), 0, X.shape[0]).sigma_hat
    np.testing.assert_array_equal(g, g.T)
    p = X.shape[1]
    assert np.linalg.eigvalsh(g).min() >= -1e-8 * max(np.trace(g), 1e-300) / p


@given(st.integers(0, 2**32 - 1), st.lists(st.floats(0.1, 10), min_size=4, max_size=4))
def test_mad_scaling_equivariance(seed, c):
    r = np.random.default_rng(seed)
    X, y = r.standard_normal((20, 4)), r.standard_normal(20)
    c = np.array(c)
    base = mad_scales(RegressionDataset(X, y))
    scaled = mad_scales(RegressionDataset(X * c, y))
    np.testing.assert_allclose(scaled, base * c, rtol=1e-9)
