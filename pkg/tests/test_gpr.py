import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compskill.gpr import (
    GprError,
    Hyperparams,
    TrainingSet,
    covariance_matrix,
    cross_covariance,
    dump_model,
    fit,
    kernel,
    load_model,
    predict,
    predict_naive,
)

UNIT = Hyperparams(1.0, 1.0)


def _dataset(seed, n, dx=2, du=1):
    rng = np.random.default_rng(seed)
    return TrainingSet(rng.normal(size=(n, dx)), rng.normal(size=(n, du)), rng.uniform(0.2, 2.0, n))


# -- kernel -------------------------------------------------------------------


def test_kernel_at_zero_distance():
    assert kernel([0.3, -1.0], [0.3, -1.0], Hyperparams(1.7, 0.4)) == pytest.approx(1.7**2)


def test_kernel_unit_distance():
    assert kernel([0.0], [1.0], UNIT) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_kernel_decays_monotonically():
    vals = [kernel([0.0, 0.0], [r, 0.0], UNIT) for r in np.linspace(0, 10, 50)]
    assert all(a > b for a, b in zip(vals, vals[1:]) if a > 0)
    assert vals[-1] < 1e-40


def test_kernel_dimension_mismatch():
    with pytest.raises(GprError):
        kernel([0.0], [0.0, 1.0], UNIT)


# -- covariance ---------------------------------------------------------------


def test_covariance_single_point():
    K = covariance_matrix(TrainingSet([[0.2, 0.1]], [1.0]), Hyperparams(2.0, 1.0))
    assert K.tolist() == [[4.0]]


def test_covariance_stationarity():
    K = covariance_matrix(TrainingSet([[0.0], [1.0], [2.0]], [0, 0, 0]), UNIT)
    assert K[0, 1] == pytest.approx(K[1, 2], rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 30), sigma=st.floats(0.1, 10), length=st.floats(0.05, 10))
def test_covariance_symmetric_psd(seed, n, sigma, length):
    theta = Hyperparams(sigma, length)
    K = covariance_matrix(_dataset(seed, n), theta)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == sigma**2)
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * sigma**2


def test_cross_covariance_examples():
    tr = TrainingSet([[0.0, 0.0], [2.0, 0.0]], [1.0, 2.0])
    theta = Hyperparams(1.5, 0.5)
    assert cross_covariance([0.0, 0.0], tr, theta)[0] == pytest.approx(1.5**2)
    mid = cross_covariance([1.0, 0.7], tr, theta)
    assert mid[0] == pytest.approx(mid[1], rel=1e-14)
    far = cross_covariance([0.0, 6 * 0.5 + 1e-9], TrainingSet([[0.0, 0.0]], [0.0]), theta)
    assert far[0] < 1e-12 * 1.5**2


# -- fit ----------------------------------------------------------------------


def test_fit_empty_is_error():
    with pytest.raises(GprError):
        TrainingSet(np.zeros((0, 2)), np.zeros(0))


def test_fit_rejects_nonfinite():
    with pytest.raises(GprError):
        TrainingSet([[0.0], [np.nan]], [0.0, 1.0])


def test_auto_needs_three_points():
    with pytest.raises(GprError):
        fit(TrainingSet([[0.0], [1.0]], [0.0, 1.0]))


def test_auto_recovers_length_scale():
    # GP sample drawn with l = 0.7 under seed 0
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 6, size=(40, 1))
    K = covariance_matrix(TrainingSet(X, np.zeros(40)), Hyperparams(1.0, 0.7)) + 1e-8 * np.eye(40)
    y = np.linalg.cholesky(K) @ rng.standard_normal(40)
    model = fit(TrainingSet(X, y))
    assert 0.35 <= model.theta.length <= 1.4
    assert model.theta.length == pytest.approx(0.45743430917351624, rel=1e-9)


def test_equal_weights_match_unweighted():
    # weights are taken relative to the largest, so any common value is the unweighted model
    tr = _dataset(3, 12)
    a = fit(TrainingSet(tr.states, tr.controls), UNIT, jitter=1e-4)
    b = fit(TrainingSet(tr.states, tr.controls, np.full(12, 3.7)), UNIT, jitter=1e-4)
    np.testing.assert_allclose(a.alpha, b.alpha, rtol=1e-12)


# -- predict ------------------------------------------------------------------


def test_interpolates_training_point():
    tr = _dataset(5, 10)
    model = fit(tr, UNIT, jitter=1e-10)
    u3 = tr.controls[3]
    assert np.abs(predict(model, tr.states[3]) - u3).max() < 1e-6 * (1 + np.abs(u3).max())


def test_far_query_returns_prior_mean():
    tr = TrainingSet([[0.0], [0.5]], [[1.0], [-1.0]])
    model = fit(tr, UNIT)
    np.testing.assert_allclose(predict(model, [6.0 + 0.5]), tr.controls.mean(axis=0), atol=1e-9)


def test_symmetric_points_cancel_at_midpoint():
    model = fit(TrainingSet([[-1.0], [1.0]], [[2.5], [-2.5]]), UNIT)
    assert abs(predict(model, [0.0])[0]) < 1e-12


def test_query_dimension_mismatch():
    model = fit(TrainingSet([[0.0, 1.0]], [1.0]), UNIT)
    with pytest.raises(GprError):
        predict(model, [0.0])


def test_degenerate_data_factorization_error():
    X = np.zeros((4, 1))
    with pytest.raises(GprError, match="condition"):
        fit(TrainingSet(X, [0, 1, 2, 3]), UNIT, jitter=0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 5))
def test_matches_explicit_inverse(seed, n):
    tr = _dataset(seed, n, dx=3, du=2)
    theta = Hyperparams(1.3, 0.9)
    model = fit(tr, theta, jitter=1e-6)
    q = np.random.default_rng(seed + 7).normal(size=3)
    np.testing.assert_allclose(predict(model, q), predict_naive(tr, theta, q, 1e-6), atol=1e-10, rtol=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 25))
def test_permutation_invariance(seed, n):
    tr = _dataset(seed, n)
    perm = np.random.default_rng(seed).permutation(n)
    a = fit(tr, UNIT, jitter=1e-6)
    b = fit(tr.subset(perm), UNIT, jitter=1e-6)
    q = np.random.default_rng(seed + 1).normal(size=2)
    np.testing.assert_allclose(predict(a, q), predict(b, q), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_weight_pulls_prediction_toward_label(seed):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(0, 3, 6))[:, None]
    U = rng.normal(size=6)
    k = int(rng.integers(6))
    errs = []
    # the other points sit at the top weight, which fixes the normalization
    for w in (0.05, 0.3, 1.0):
        weights = np.ones(6)
        weights[k] = w
        model = fit(TrainingSet(X, U, weights), UNIT, jitter=0.5)
        errs.append(abs(predict(model, X[k])[0] - U[k]))
    assert errs[0] >= errs[1] - 1e-12 and errs[1] >= errs[2] - 1e-12


def test_snapshot_round_trip():
    tr = _dataset(11, 20, dx=4)
    model = fit(tr, Hyperparams(0.8, 1.1), jitter=1e-3)
    again = load_model(dump_model(model))
    q = np.linspace(-1, 1, 4)
    assert np.array_equal(predict(model, q), predict(again, q))
    assert dump_model(again) == dump_model(model)
    with pytest.raises(GprError):
        load_model(b"XXXX" + dump_model(model)[4:])
