"""Dual-rate adaptive Kalman filtering of slow, delayed position measurements.

The signal is modeled by its order-``r`` Taylor expansion advanced at the fast
tick ``T``; the expansion remainder is an unknown input whose variance ``q`` is
adapted from the measurement innovations. A camera frame arrives every ``N``
ticks and reports the position ``L`` ticks in the past. Each frame corrects the
stored estimate at tick ``j - L`` and the correction is re-propagated through
the stored history to the current tick.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SensingError",
    "TaylorModel",
    "DelayedMeasurementChannel",
    "DualRateFilter",
    "build_taylor_model",
    "reconstruct",
    "zero_order_hold",
]


class SensingError(ValueError):
    pass


@dataclass(frozen=True)
class TaylorModel:
    order: int
    tick: float
    Phi: np.ndarray = field(repr=False)
    Gamma: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.order + 1


def build_taylor_model(r: int, T: float) -> TaylorModel:
    """Upper-triangular Toeplitz transition ``T^c / c!`` and remainder input column."""
    if r < 0:
        raise SensingError("expansion order must be >= 0")
    if not T > 0:
        raise SensingError("tick must be positive")
    n = r + 1
    Phi = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            Phi[a, b] = T ** (b - a) / math.factorial(b - a)
    Gamma = np.array([T ** (r + 1 - c) / math.factorial(r + 1 - c) for c in range(n)])
    return TaylorModel(r, T, Phi, Gamma)


@dataclass(frozen=True)
class DelayedMeasurementChannel:
    period: int  # N, ticks per frame
    delay: int  # L, ticks
    noise_var: float  # R_v

    def __post_init__(self):
        if self.period < 1:
            raise SensingError("frame period must be >= 1 tick")
        if self.delay < 0:
            raise SensingError("delay must be >= 0")
        if self.noise_var < 0:
            raise SensingError("measurement noise variance must be >= 0")


class DualRateFilter:
    """Fast-tick Kalman filter fed by delayed frames on an integer-ratio clock.

    Parameters
    ----------
    model : TaylorModel
    channel : DelayedMeasurementChannel
    q : float
        Initial variance of the remainder input.
    rho : float
        Forgetting factor of the innovation-based ``q`` adaptation, in (0, 1].
    q_floor : float
        Lower bound on the adapted ``q``.
    x0, P0 : optional initial state and covariance (default zero state, 1e6 I).
    history : int, optional
        Ring length in ticks; must cover ``delay + period``.
    """

    def __init__(self, model: TaylorModel, channel: DelayedMeasurementChannel, q: float = 1.0,
                 rho: float = 0.98, q_floor: float = 1e-6, x0=None, P0=None, history: int | None = None):
        if not 0.0 < rho <= 1.0:
            raise SensingError(f"forgetting factor must lie in (0, 1], got {rho}")
        self.model = model
        self.channel = channel
        self.rho = float(rho)
        self.q_floor = float(q_floor)
        self.q = max(float(q), self.q_floor)
        n = model.size
        self.x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
        self.P = 1e6 * np.eye(n) if P0 is None else np.array(P0, dtype=float)
        if self.x.shape != (n,) or self.P.shape != (n, n):
            raise SensingError("initial state/covariance have the wrong size")
        need = channel.delay + channel.period
        self.history_len = need + 1 if history is None else int(history)
        if self.history_len < channel.delay + 1:
            raise SensingError("history ring shorter than the measurement delay")
        self.tick = 0
        self._hist: deque = deque(maxlen=self.history_len)
        self._hist.append((0, self.x.copy(), self.P.copy()))
        self.innovations: list[tuple[float, float]] = []
        self._frame_gain = self._frame_input_gain()

    def _frame_input_gain(self) -> float:
        """Position variance accumulated over one frame per unit ``q``."""
        Phi, G = self.model.Phi, self.model.Gamma
        acc = 0.0
        v = G.copy()
        for _ in range(self.channel.period):
            acc += v[0] ** 2
            v = Phi @ v
        return acc

    def _propagate(self, x, P):
        Phi, G = self.model.Phi, self.model.Gamma
        x = Phi @ x
        P = Phi @ P @ Phi.T + self.q * np.outer(G, G)
        return x, 0.5 * (P + P.T)

    @property
    def position(self) -> float:
        return float(self.x[0])

    def predict_tick(self) -> "DualRateFilter":
        self.x, self.P = self._propagate(self.x, self.P)
        self.tick += 1
        self._hist.append((self.tick, self.x.copy(), self.P.copy()))
        return self

    def measurement_update(self, y: float, j: int) -> "DualRateFilter":
        N, L = self.channel.period, self.channel.delay
        if j % N != 0 or j <= 0:
            raise SensingError(f"tick {j} is not a frame tick (multiple of {N})")
        if j != self.tick:
            raise SensingError(f"frame for tick {j} arrived at tick {self.tick}")
        target = j - L
        first = self._hist[0][0]
        if target < first:
            raise SensingError(f"history underrun: need tick {target}, oldest stored is {first}")
        pos = target - first
        _, x, P = self._hist[pos]
        S = P[0, 0] + self.channel.noise_var
        nu = float(y) - x[0]
        self.innovations.append((nu, S))
        if S > 0:
            K = P[:, 0] / S
            x = x + K * nu
            IKH = np.eye(len(x))
            IKH[:, 0] -= K
            P = IKH @ P @ IKH.T + self.channel.noise_var * np.outer(K, K)
            P = 0.5 * (P + P.T)
        self._hist[pos] = (target, x, P)
        for k in range(pos + 1, len(self._hist)):
            x, P = self._propagate(x, P)
            self._hist[k] = (self._hist[k][0], x, P)
        self.x, self.P = x.copy(), P.copy()
        return self

    def adapt_noise(self) -> "DualRateFilter":
        """Blend ``q`` toward the value implied by the latest innovation."""
        if not self.innovations:
            raise SensingError("no innovation recorded yet")
        if self.rho == 1.0:
            return self
        nu, S = self.innovations[-1]
        excess = nu * nu - S
        q_implied = max(excess, 0.0) / self._frame_gain if self._frame_gain > 0 else 0.0
        self.q = max(self.rho * self.q + (1.0 - self.rho) * q_implied, self.q_floor)
        return self


def reconstruct(measurements, n_ticks: int, model: TaylorModel, channel: DelayedMeasurementChannel,
                adapt: bool = True, **filter_kwargs) -> np.ndarray:
    """Run a filter over ``n_ticks`` ticks and return the real-time state estimates.

    ``measurements`` maps each frame tick ``j`` to the reading of the position
    at ``j - L`` (a dict, or a callable ``j -> y``). Row ``k`` of the result is
    the estimate available at tick ``k`` after that tick's frame, if any.
    """
    filt = DualRateFilter(model, channel, **filter_kwargs)
    get = measurements if callable(measurements) else measurements.get
    out = np.empty((n_ticks, model.size))
    out[0] = filt.x
    N = channel.period
    for k in range(1, n_ticks):
        filt.predict_tick()
        if k % N == 0:
            y = get(k)
            if y is not None:
                filt.measurement_update(y, k)
                if adapt:
                    filt.adapt_noise()
        out[k] = filt.x
    return out


def zero_order_hold(measurements: dict, n_ticks: int, initial: float = 0.0) -> np.ndarray:
    """Baseline: hold the latest received (delayed) frame value."""
    out = np.empty(n_ticks)
    last = initial
    for k in range(n_ticks):
        if k in measurements:
            last = measurements[k]
        out[k] = last
    return out
