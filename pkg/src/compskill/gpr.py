"""Squared-exponential Gaussian process regression for state -> control policies.

Only the conditional mean is implemented. Per-point weights enter as
heteroscedastic jitter ``eps / w_i`` on the diagonal, so weakly weighted
demonstration points are fitted loosely and strongly weighted points tightly.
Weights are taken relative to the largest one: the best-weighted point gets
the base jitter and a uniform rescaling of all weights changes nothing.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "GprError",
    "Hyperparams",
    "TrainingSet",
    "GprModel",
    "kernel",
    "covariance_matrix",
    "cross_covariance",
    "log_marginal_likelihood",
    "fit",
    "predict",
    "predict_naive",
    "dump_model",
    "load_model",
]

DEFAULT_JITTER = 1e-8  # relative to sigma**2


class GprError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    sigma: float
    length: float

    def __post_init__(self):
        for name in ("sigma", "length"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise GprError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)


class TrainingSet:
    """Paired states and controls with positive per-point weights."""

    def __init__(self, states, controls, point_weights=None):
        X = np.atleast_2d(np.asarray(states, dtype=float))
        U = np.asarray(controls, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if X.shape[0] == 0:
            raise GprError("training set is empty")
        if U.shape[0] != X.shape[0]:
            raise GprError(f"{X.shape[0]} states but {U.shape[0]} controls")
        if not (np.isfinite(X).all() and np.isfinite(U).all()):
            raise GprError("training data must be finite")
        w = np.ones(X.shape[0]) if point_weights is None else np.asarray(point_weights, dtype=float)
        if w.shape != (X.shape[0],) or not (w > 0).all() or not np.isfinite(w).all():
            raise GprError("point weights must be positive, finite, one per point")
        self.states = X
        self.controls = U
        self.point_weights = w

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx, dtype=int)
        return TrainingSet(self.states[idx], self.controls[idx], self.point_weights[idx])


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d, 0.0, out=d)
    return d


def kernel(xi, xj, theta: Hyperparams) -> float:
    """``sigma^2 exp(-|xi - xj|^2 / l^2)``."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape:
        raise GprError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    r = xi - xj
    return float(theta.sigma**2 * np.exp(-np.dot(r, r) / theta.length**2))


def _gram(A, B, theta: Hyperparams) -> np.ndarray:
    return theta.sigma**2 * np.exp(-_sqdist(A, B) / theta.length**2)


def covariance_matrix(training: TrainingSet, theta: Hyperparams) -> np.ndarray:
    X = training.states
    K = _gram(X, X, theta)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, theta.sigma**2)
    return K


def cross_covariance(query, training: TrainingSet, theta: Hyperparams) -> np.ndarray:
    q = np.asarray(query, dtype=float)
    if q.shape != (training.state_dim,):
        raise GprError(f"query has shape {q.shape}, expected ({training.state_dim},)")
    return _gram(q[None, :], training.states, theta)[0]


def _regularized(training: TrainingSet, theta: Hyperparams, jitter: float) -> np.ndarray:
    K = covariance_matrix(training, theta)
    w = training.point_weights / training.point_weights.max()
    K[np.diag_indices_from(K)] += jitter * theta.sigma**2 / w
    return K


def log_marginal_likelihood(training: TrainingSet, theta: Hyperparams, jitter: float = DEFAULT_JITTER) -> float:
    """Summed over output dimensions, controls centered on their mean."""
    U = training.controls - training.controls.mean(axis=0)
    try:
        c, low = linalg.cho_factor(_regularized(training, theta, jitter), lower=True, check_finite=False)
    except linalg.LinAlgError:
        return -np.inf
    alpha = linalg.cho_solve((c, low), U, check_finite=False)
    n, d = U.shape
    logdet = 2.0 * np.log(np.diag(c)).sum()
    return float(-0.5 * (U * alpha).sum() - 0.5 * d * logdet - 0.5 * n * d * np.log(2 * np.pi))


@dataclass(eq=False)
class GprModel:
    """A fitted policy; immutable after :func:`fit`.

    ``kernel_evaluations`` counts kernel evaluations spent in :func:`predict`,
    which is how the subset-size cost reduction is measured.
    """

    training: TrainingSet
    theta: Hyperparams
    jitter_base: float
    mean: np.ndarray
    factor: tuple = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    kernel_evaluations: int = 0

    @property
    def n(self) -> int:
        return len(self.training)

    def __call__(self, query) -> np.ndarray:
        return predict(self, query)


def _auto_theta(training: TrainingSet, jitter: float) -> Hyperparams:
    X, U = training.states, training.controls
    n = len(training)
    if n < 3:
        raise GprError("automatic hyperparameter selection needs at least 3 points")
    d = np.sqrt(_sqdist(X, X)[np.triu_indices(n, 1)])
    d = d[d > 0]
    base_l = float(np.median(d)) if d.size else 1.0
    base_s = float(U.std()) or 1.0
    grid = 2.0 ** np.arange(-4, 5)

    def score(s, l):
        return log_marginal_likelihood(training, Hyperparams(s, l), jitter)

    best = max(((score(a * base_s, b * base_l), a, b) for a in grid for b in grid), key=lambda t: t[0])
    lml, a, b = best
    # one coordinate-descent pass on a finer log grid around the grid optimum
    fine = 2.0 ** np.linspace(-0.5, 0.5, 9)
    for axis in (1, 0):
        cands = [(score(a * f, b) if axis == 0 else score(a, b * f), f) for f in fine]
        top, f = max(cands, key=lambda t: t[0])
        if top > lml:
            lml = top
            a, b = (a * f, b) if axis == 0 else (a, b * f)
    return Hyperparams(a * base_s, b * base_l)


def fit(training: TrainingSet, theta_init: Hyperparams | None = None, jitter: float = DEFAULT_JITTER) -> GprModel:
    """Factorize the regularized covariance and precompute the weight vector.

    With ``theta_init=None`` the hyperparameters maximize the log marginal
    likelihood over a 9x9 log grid (scaled by the control spread and the
    median pairwise state distance), refined by one coordinate pass.
    """
    if len(training) == 0:
        raise GprError("training set is empty")
    theta = _auto_theta(training, jitter) if theta_init is None else theta_init
    mean = training.controls.mean(axis=0)
    K = _regularized(training, theta, jitter)
    try:
        factor = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise GprError("covariance factorization failed; condition the training data first") from exc
    alpha = linalg.cho_solve(factor, training.controls - mean, check_finite=False)
    return GprModel(training, theta, jitter, mean, factor, alpha)


def predict(model: GprModel, query) -> np.ndarray:
    """Conditional mean ``K* (K + diag(eps/w))^-1 U`` plus the stored control mean."""
    X = model.training.states
    q = np.asarray(query, dtype=float)
    if q.shape != (X.shape[1],):
        raise GprError(f"query has shape {q.shape}, expected ({X.shape[1]},)")
    r = X - q
    ks = model.theta.sigma**2 * np.exp(-np.einsum("ij,ij->i", r, r) / model.theta.length**2)
    model.kernel_evaluations += X.shape[0]
    return model.mean + ks @ model.alpha


def predict_many(model: GprModel, queries) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    Ks = _gram(Q, model.training.states, model.theta)
    model.kernel_evaluations += Ks.size
    return model.mean + Ks @ model.alpha


def predict_naive(training: TrainingSet, theta: Hyperparams, query, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Reference path: explicit kernel loops and an explicit matrix inverse."""
    n = len(training)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = kernel(training.states[i], training.states[j], theta)
    w = training.point_weights / training.point_weights.max()
    for i in range(n):
        K[i, i] += jitter * theta.sigma**2 / w[i]
    ks = np.array([kernel(query, training.states[i], theta) for i in range(n)])
    mean = training.controls.mean(axis=0)
    return mean + ks @ np.linalg.inv(K) @ (training.controls - mean)


# -- binary snapshots -------------------------------------------------------

_MAGIC = b"CSGP"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIIddd")


def dump_model(model: GprModel) -> bytes:
    """Versioned little-endian snapshot: header then states, controls, weights."""
    tr = model.training
    buf = io.BytesIO()
    buf.write(_HEADER.pack(_MAGIC, _VERSION, len(tr), tr.state_dim, tr.control_dim,
                           model.theta.sigma, model.theta.length, model.jitter_base))
    for arr in (tr.states, tr.controls, tr.point_weights):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def load_model(data: bytes) -> GprModel:
    magic, version, n, dx, du, sigma, length, jitter = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise GprError("not a GPR snapshot")
    if version != _VERSION:
        raise GprError(f"unsupported snapshot version {version}")
    off = _HEADER.size
    sizes = (n * dx, n * du, n)
    arrays = []
    for size in sizes:
        arrays.append(np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(float))
        off += 8 * size
    tr = TrainingSet(arrays[0].reshape(n, dx), arrays[1].reshape(n, du), arrays[2])
    return fit(tr, Hyperparams(sigma, length), jitter)
