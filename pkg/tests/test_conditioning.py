from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compskill.conditioning import (
    ConditioningError,
    choose_subset_size,
    condition_number,
    kernel_stack,
    rrqr,
    select_subset,
    state_stack,
    unclamped_subset_size,
)
from compskill.gpr import Hyperparams, TrainingSet, covariance_matrix, fit, predict

# regression values on the shipped pendulum corpus (t1 swing data, 200 points)
CORPUS_SUBSET_SIZE = 160
CORPUS_STATE_COND = (12.899308270691067, 11.036293510837032)


def _smin(A):
    return np.linalg.svd(A, compute_uv=False)[-1]


def _bound(m, n, f=2.0):
    return np.sqrt(1 + f * f * m * (n - m))


def _best_smin(S, m):
    """Exhaustive search over all column subsets of size m."""
    return max(_smin(S[:, list(c)]) for c in combinations(range(S.shape[1]), m))


# -- rrqr ---------------------------------------------------------------------


def test_identity_stack():
    res = rrqr(np.eye(3), 3)
    np.testing.assert_allclose(np.abs(res.R11), np.eye(3), atol=1e-15)
    assert _smin(res.R11) == pytest.approx(1.0)


def test_duplicate_columns_not_both_selected():
    rng = np.random.default_rng(4)
    for _ in range(20):
        S = rng.normal(size=(3, 7))
        S[:, 5] = S[:, 1]
        sel = set(rrqr(S, 3).selected.tolist())
        assert not {1, 5} <= sel
        assert _smin(S[:, sorted(sel)]) >= _best_smin(S, 3) / _bound(3, 7)


def test_bound_on_random_4x16():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        S = rng.normal(size=(4, 16))
        res = rrqr(S, 4)
        assert _smin(res.R11) >= _smin(S) / _bound(4, 16)


@pytest.mark.parametrize("m", [0, 5])
def test_rank_out_of_range(m):
    with pytest.raises(ConditioningError):
        rrqr(np.ones((4, 8)), m)


def test_all_zero_stack():
    with pytest.raises(ConditioningError):
        rrqr(np.zeros((3, 5)), 2)


def test_pivot_ties_go_to_lowest_index():
    S = np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]])
    assert rrqr(S, 2).selected.tolist() == [0, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 6), n=st.integers(1, 32), data=st.data())
def test_reconstruction_and_diagonal(seed, rows, n, data):
    m = data.draw(st.integers(1, min(rows, n)))
    S = np.random.default_rng(seed).normal(size=(rows, n))
    res = rrqr(S, m)
    assert np.linalg.norm(S[:, res.perm] - res.Q @ res.R) <= 1e-10 * np.linalg.norm(S)
    assert sorted(res.perm.tolist()) == list(range(n))
    d = np.abs(np.diag(res.R11))
    assert np.all(d[:-1] >= d[1:] * (1 - 1e-12))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(2, 4), n=st.integers(4, 12), data=st.data())
def test_subset_quality_against_exhaustive(seed, rows, n, data):
    m = data.draw(st.integers(1, min(rows, 4)))
    S = np.random.default_rng(seed).normal(size=(rows, n))
    res = rrqr(S, m)
    assert _smin(S[:, res.selected]) >= _best_smin(S, m) / _bound(m, n) * (1 - 1e-12)


# -- subset selection ---------------------------------------------------------


def _redundant(seed, n=200):
    """Points clustered on a 1-D curve in 3-D."""
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 2 * np.pi, n)
    X = np.c_[np.cos(s), np.sin(s), 0.3 * s] + 1e-3 * rng.normal(size=(n, 3))
    return TrainingSet(X, np.sin(2 * s))


def test_full_subset_keeps_everything():
    tr = _redundant(0, 30)
    sub, idx = select_subset(tr, 30)
    assert idx.tolist() == list(range(30))
    assert np.array_equal(sub.states, tr.states)


def test_zero_subset_is_error():
    with pytest.raises(ConditioningError):
        select_subset(_redundant(0, 10), 0)
    with pytest.raises(ConditioningError):
        select_subset(_redundant(0, 10), 11)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_redundant_set_conditioning(seed):
    tr = _redundant(seed)
    theta = Hyperparams(1.0, 0.5)
    sub, idx = select_subset(tr, 40, theta)
    assert np.all(np.diff(idx) > 0)  # original relative order
    # selection runs on the kernel stack, so that is the conditioning it controls
    assert condition_number(covariance_matrix(sub, theta)) <= condition_number(covariance_matrix(tr, theta))


def test_selected_model_costs_m_kernel_evaluations():
    tr = _redundant(3)
    sub, _ = select_subset(tr, 40, Hyperparams(1.0, 0.5))
    full = fit(tr, Hyperparams(1.0, 0.5), jitter=1e-6)
    small = fit(sub, Hyperparams(1.0, 0.5), jitter=1e-6)
    for model in (full, small):
        predict(model, tr.states[0])
    assert (full.kernel_evaluations, small.kernel_evaluations) == (200, 40)


# -- subset size ----------------------------------------------------------------


def test_size_of_identity_stack():
    for ceiling in (1.0 + 1e-9, 10.0, 1e8):
        assert choose_subset_size(np.eye(3), ceiling) == 3


def test_size_of_rank_one_stack():
    S = np.tile([[1.0], [2.0], [-1.0]], (1, 6))
    assert unclamped_subset_size(S, 1e4) == 1
    assert choose_subset_size(S, 1e4) == 3


def test_size_rejects_low_ceiling():
    with pytest.raises(ConditioningError):
        choose_subset_size(np.eye(2), 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 60))
def test_size_matches_prefix_scan(seed, n):
    tr = _redundant(seed, n)
    K = kernel_stack(tr, Hyperparams(1.0, 0.5))
    m = unclamped_subset_size(K, 1e4)
    res = rrqr(K, m)
    assert condition_number(res.R[:m, :m]) <= 1e4 * (1 + 1e-9) or m == 1


def test_corpus_subset_size(pendulum_t1_set):
    K = kernel_stack(pendulum_t1_set, Hyperparams(2.0, 1.2))
    assert choose_subset_size(K, 1e3, min_size=pendulum_t1_set.state_dim) == CORPUS_SUBSET_SIZE


def test_corpus_selected_stack_is_better_conditioned(pendulum_t1_set):
    sub, _ = select_subset(pendulum_t1_set, 40, Hyperparams(2.0, 1.2))
    full_c, sub_c = condition_number(state_stack(pendulum_t1_set)), condition_number(state_stack(sub))
    assert sub_c <= full_c
    assert (full_c, sub_c) == pytest.approx(CORPUS_STATE_COND, rel=1e-9)
