"""Rank-revealing QR selection of well-conditioned training subsets.

``rrqr`` runs column-pivoted Householder QR followed by Gu-Eisenstat
strong-RRQR column swaps, which guarantees

    sigma_i(R11) >= sigma_i(S) / sqrt(1 + f^2 m (n - m)),  i = 1..m.

A raw state stack (d_x rows) can only reveal d_x columns. To pick GPR
subsets larger than the state dimension, ``select_subset`` conditions the
kernel-feature stack instead: column ``i`` is ``k(., x_i)`` evaluated at every
training state, so the selected columns are exactly the points whose
covariance block is well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gpr import Hyperparams, TrainingSet, covariance_matrix

__all__ = [
    "ConditioningError",
    "RrqrResult",
    "state_stack",
    "kernel_stack",
    "rrqr",
    "select_subset",
    "choose_subset_size",
    "default_theta",
    "condition_number",
    "unclamped_subset_size",
]

DEFAULT_F = 2.0
DEFAULT_COND_CEILING = 1e4


class ConditioningError(ValueError):
    pass


@dataclass
class RrqrResult:
    perm: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    m: int
    f: float
    swaps: int = 0

    @property
    def R11(self) -> np.ndarray:
        return self.R[: self.m, : self.m]

    @property
    def R12(self) -> np.ndarray:
        return self.R[: self.m, self.m:]

    @property
    def R22(self) -> np.ndarray:
        return self.R[self.m:, self.m:]

    @property
    def selected(self) -> np.ndarray:
        return self.perm[: self.m]


def state_stack(training: TrainingSet) -> np.ndarray:
    """``d_x x n`` matrix whose columns are the training states."""
    return training.states.T.copy()


def default_theta(training: TrainingSet) -> Hyperparams:
    """Unit scale, median pairwise distance as length."""
    X = training.states
    n = len(training)
    if n < 2:
        return Hyperparams(1.0, 1.0)
    sq = (X * X).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2 * X @ X.T
    d = np.sqrt(np.maximum(d2[np.triu_indices(n, 1)], 0.0))
    d = d[d > 0]
    return Hyperparams(1.0, float(np.median(d)) if d.size else 1.0)


def kernel_stack(training: TrainingSet, theta: Hyperparams | None = None) -> np.ndarray:
    """``n x n`` kernel-feature stack used for GPR subset selection."""
    return covariance_matrix(training, theta or default_theta(training))


def condition_number(A: np.ndarray) -> float:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def _pivoted_qr(S: np.ndarray):
    """Householder QR with column pivoting; ties go to the lowest column index.

    LAPACK's pivoting breaks norm ties arbitrarily, so pivots are chosen here.
    """
    A = np.array(S, dtype=float)
    rows, n = A.shape
    perm = np.arange(n)
    k_max = min(rows, n)
    norms = (A * A).sum(0)
    scale = norms.max() if n else 0.0
    for k in range(k_max):
        rem = (A[k:, k:] ** 2).sum(0)
        best = rem.max()
        if best <= (1e-30 * scale):
            break
        # first index among ties (relative tolerance) keeps selection deterministic
        j = k + int(np.flatnonzero(rem >= best * (1 - 1e-12))[0])
        if j != k:
            A[:, [k, j]] = A[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
        x = A[k:, k]
        alpha = -np.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vn = np.dot(v, v)
        if vn > 0:
            A[k:, k:] -= np.outer(v, (2.0 / vn) * (v @ A[k:, k:]))
        A[k + 1:, k] = 0.0
    return perm


def _factor(S: np.ndarray, perm: np.ndarray):
    Q, R = linalg.qr(S[:, perm], mode="economic")
    return Q, R


def rrqr(stack, m: int, f: float = DEFAULT_F, max_swaps: int = 10_000) -> RrqrResult:
    """Strong rank-revealing QR of ``stack`` for target rank ``m``.

    Returns ``S[:, perm] = Q R``. The leading ``m`` entries of ``perm`` index the
    selected columns.
    """
    S = np.asarray(stack, dtype=float)
    if S.ndim != 2 or not np.isfinite(S).all():
        raise ConditioningError("stack must be a finite 2-D array")
    rows, n = S.shape
    if not 1 <= m <= min(rows, n):
        raise ConditioningError(f"target rank m={m} outside [1, {min(rows, n)}]")
    if not np.any(S):
        raise ConditioningError("stack is all zero")
    if f < 1:
        raise ConditioningError("swap tolerance f must be >= 1")

    perm = _pivoted_qr(S)
    Q, R = _factor(S, perm)
    swaps = 0
    while m < n and swaps < max_swaps:
        R11 = R[:m, :m]
        if np.any(np.abs(np.diag(R11)) <= 1e-14 * abs(R[0, 0])):
            break  # R11 singular: rank below m, no determinant to grow
        AB = linalg.solve_triangular(R11, R[:m, m:], check_finite=False)
        inv_rows = np.linalg.norm(linalg.solve_triangular(R11, np.eye(m), check_finite=False), axis=1)
        gamma = np.linalg.norm(R[m:, m:], axis=0) if rows > m else np.zeros(n - m)
        rho2 = AB**2 + np.outer(inv_rows, gamma) ** 2
        i, j = np.unravel_index(int(np.argmax(rho2)), rho2.shape)
        if rho2[i, j] <= f * f * (1 + 1e-12):
            break
        perm[[i, m + j]] = perm[[m + j, i]]
        swaps += 1
        # restore nonincreasing |diag(R11)| among the selected columns
        head = perm[:m]
        sub = _pivoted_qr(S[:, head])
        perm[:m] = head[sub]
        Q, R = _factor(S, perm)
    return RrqrResult(perm=perm, Q=Q, R=R, m=m, f=f, swaps=swaps)


def choose_subset_size(stack, cond_ceiling: float = DEFAULT_COND_CEILING, min_size: int | None = None,
                       max_size: int | None = None) -> int:
    """Largest pivoted prefix whose ``R11`` condition number stays under the ceiling.

    The prefix scan uses the column-pivoted factor. Leading blocks of a
    triangular factor have interlacing singular values, so the prefix
    condition number is nondecreasing and a bisection finds the boundary.
    The result is clamped to ``[min_size, max_size]``; ``min_size`` defaults
    to the stack's row count (the state dimension for a raw state stack) and
    ``max_size`` to the number of columns.
    """
    S = np.asarray(stack, dtype=float)
    rows, n = S.shape
    if cond_ceiling <= 1:
        raise ConditioningError("cond_ceiling must exceed 1")
    lo = rows if min_size is None else int(min_size)
    lo = max(1, min(lo, n))
    hi = n if max_size is None else max(lo, min(int(max_size), n))
    if not np.any(S):
        return lo
    perm = _pivoted_qr(S)
    _, R = _factor(S, perm)
    d = np.abs(np.diag(R))
    k_max = min(rows, n, hi)

    def ok(k: int) -> bool:
        dk = d[:k]
        if dk.min() <= 1e-14 * dk.max():
            return False
        return condition_number(R[:k, :k]) <= cond_ceiling

    a, b = 0, k_max  # ok(a) holds (vacuously for 0); find the largest ok prefix
    if ok(b):
        a = b
    while b - a > 1:
        mid = (a + b) // 2
        if ok(mid):
            a = mid
        else:
            b = mid
    return int(min(max(a, lo), hi))


def unclamped_subset_size(stack, cond_ceiling: float = DEFAULT_COND_CEILING) -> int:
    return choose_subset_size(stack, cond_ceiling, min_size=1) if np.any(stack) else 0


def select_subset(
    training: TrainingSet,
    m: int,
    theta: Hyperparams | None = None,
    f: float = DEFAULT_F,
) -> tuple[TrainingSet, np.ndarray]:
    """Keep the ``m`` points named by the leading RRQR pivots of the kernel stack.

    Returns the subset (original relative order preserved) and the selected
    indices into ``training``.
    """
    n = len(training)
    if not 1 <= m <= n:
        raise ConditioningError(f"subset size m={m} outside [1, {n}]")
    if m == n:
        idx = np.arange(n)
        return training.subset(idx), idx
    res = rrqr(kernel_stack(training, theta), m, f=f)
    idx = np.sort(res.selected)
    return training.subset(idx), idx
