import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrs.kernels import (
    StepKernel,
    green_function,
    green_growth_exponent,
    kernel_from_config,
    make_srw,
    periodize,
    torus_sites,
    transition_power,
    wrap,
)


def test_srw_covariance_is_identity_over_d():
    for d in (1, 2, 3):
        k = make_srw(d)
        np.testing.assert_allclose(k.covariance, np.eye(d) / d)
        np.testing.assert_allclose(k.mean, 0.0)


def test_duplicate_offsets_merge():
    k = StepKernel([[1], [1], [-1], [-1]], [0.25, 0.25, 0.25, 0.25])
    assert len(k.probs) == 2
    np.testing.assert_allclose(k.probs, [0.5, 0.5])


@pytest.mark.parametrize(
    "offsets, probs",
    [
        ([[1], [-1]], [0.5, 0.6]),  # not normalized
        ([[1], [-1], [2]], [0.6, 0.5, -0.1]),  # negative weight
        ([[1], [-1]], [0.7, 0.3]),  # asymmetric
        ([[1, 0], [-1, 0]], [0.5, 0.5]),  # degenerate covariance in d=2
    ],
)
def test_invalid_kernels_rejected(offsets, probs):
    with pytest.raises(ValueError):
        StepKernel(offsets, probs)


def test_kernel_from_config_names_and_lists():
    assert kernel_from_config("srw-2d").d == 2
    k = kernel_from_config([{"offset": [2], "prob": 0.5}, {"offset": [-2], "prob": 0.5}])
    assert k.support_radius == 2
    with pytest.raises(ValueError):
        kernel_from_config("levy")
    with pytest.raises(ValueError):
        kernel_from_config([{"offset": [1], "p": 1.0}])


def test_sample_steps_shape_and_support(rng):
    k = make_srw(2)
    s = k.sample_steps(rng, (7, 11))
    assert s.shape == (7, 11, 2)
    assert np.all(np.abs(s).sum(axis=-1) == 1)


def test_torus_sites_and_wrap():
    s = torus_sites(1, 2)
    assert s.ravel().tolist() == [-2, -1, 0, 1]
    assert wrap(np.array([2, -3, 5]), 2).tolist() == [-2, 1, 1]


def test_periodized_rows_small_tori():
    k = make_srw(1)
    t1 = periodize(k, 1)  # sites -1, 0: both steps from 0 land on -1
    np.testing.assert_allclose(t1.matrix, [[0, 1], [1, 0]])
    t2 = periodize(k, 2)
    np.testing.assert_allclose(t2.matrix[2], [0, 0.5, 0, 0.5])


def test_periodize_rejects_small_torus_and_huge_state_space():
    k = StepKernel([[3], [-3], [1], [-1]], [0.25] * 4)
    with pytest.raises(ValueError):
        periodize(k, 2)
    with pytest.raises(ValueError):
        periodize(make_srw(3), 20)


@given(st.integers(1, 3), st.integers(2, 5))
def test_periodized_matrix_is_symmetric_stochastic(d, R):
    if (2 * R) ** d > 1000:
        R = 2
    t = periodize(make_srw(d), R)
    np.testing.assert_allclose(t.matrix.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_array_equal(t.matrix, t.matrix.T)


def test_transition_power_matches_repeated_product():
    t = periodize(make_srw(1), 3)
    P5 = np.linalg.matrix_power(t.matrix, 5)
    np.testing.assert_allclose(transition_power(t, 5), P5, atol=1e-15)
    np.testing.assert_allclose(transition_power(t, 0), np.eye(t.n_states))


@pytest.mark.parametrize("lam", [0.05, 0.5, 2.0])
def test_green_row_sums(lam):
    t = periodize(make_srw(2), 3)
    G = green_function(t, lam)
    np.testing.assert_allclose(G.sum(axis=1), 1 / (1 - math.exp(-lam)), rtol=1e-9)


def test_green_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        green_function(periodize(make_srw(1), 2), 0.0)


@pytest.mark.parametrize("d, p_prime, alphas, R", [(1, 2.0, [4, 8, 16, 32], 2.0), (2, 1.5, [4, 8, 16], 1.0)])
def test_green_growth_slope_below_bound(d, p_prime, alphas, R):
    slope, sums = green_growth_exponent(make_srw(d), R, p_prime, alphas)
    assert np.all(np.diff(sums) > 0)
    assert slope <= d + (2 - d) * p_prime + 0.05


def test_green_growth_argument_checks():
    with pytest.raises(ValueError):
        green_growth_exponent(make_srw(1), 1.0, 1.0, [2, 4])
    with pytest.raises(ValueError):
        green_growth_exponent(make_srw(3), 1.0, 3.0, [2, 4])
    with pytest.raises(ValueError):
        green_growth_exponent(make_srw(1), 1.0, 2.0, [4])
