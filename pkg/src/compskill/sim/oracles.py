"""Scripted mentors that demonstrate and label the shipped tasks.

The mentor sees the true physical state and acts on it; what gets recorded is
what a camera-based capture would provide. Camera-observed channels (pendulum
angle, hand position) go through a :class:`~compskill.sensing.DualRateFilter`
fed by delayed, noisy frames; haptic, load and timer channels are recorded
directly. Transition annotations use the ids of the shipped skill files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..sensing import DelayedMeasurementChannel, DualRateFilter, build_taylor_model
from .tasks import NunchakuTask, PendulumTask, pendulum_energy, pendulum_sensed, wrap_angle
from .trace import Demonstration, LabeledDemonstration

__all__ = [
    "CaptureConfig",
    "OracleDivergence",
    "demonstrate",
    "PENDULUM_VARIANTS",
    "NUNCHAKU_VARIANTS",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = {"pendulum": 15.0, "nunchaku": 8.0}
PENDULUM_VARIANTS = ("back_and_forth", "jerk_up")
NUNCHAKU_VARIANTS = ("flip",)


class OracleDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class CaptureConfig:
    """Camera capture through the dual-rate filter.

    ``delay_frames`` frames of latency; ``noise_std`` in the measured unit.
    """

    frame_rate: float = 30.0
    delay_frames: int = 1
    noise_std: float = 0.0005
    order: int = 2
    q0: float = 100.0
    rho: float = 0.95
    q_floor: float = 1.0

    def channel(self, tick: float) -> DelayedMeasurementChannel:
        period = max(1, round(1.0 / (self.frame_rate * tick)))
        return DelayedMeasurementChannel(period, self.delay_frames * period, self.noise_std**2)

    def as_header(self) -> dict:
        return {f"capture_{k}": v for k, v in self.__dict__.items()}


class _CameraTrack:
    """Real-time estimate of one camera-observed coordinate."""

    def __init__(self, cfg: CaptureConfig, tick: float, x0: float, rng: np.random.Generator):
        self.channel = cfg.channel(tick)
        model = build_taylor_model(cfg.order, tick)
        p0 = np.diag([cfg.noise_std**2 + 1e-6] + [1.0] * cfg.order)
        init = np.zeros(model.size)
        init[0] = x0
        self.filt = DualRateFilter(model, self.channel, q=cfg.q0, rho=cfg.rho, q_floor=cfg.q_floor,
                                   x0=init, P0=p0)
        self.noise = cfg.noise_std
        self.truth = [x0]
        self.rng = rng

    def advance(self, true_value: float) -> np.ndarray:
        """Record the truth at the next tick and return the filter estimate there."""
        self.truth.append(true_value)
        f = self.filt
        f.predict_tick()
        k = f.tick
        if k % self.channel.period == 0 and k - self.channel.delay >= 0:
            y = self.truth[k - self.channel.delay] + self.noise * self.rng.standard_normal()
            f.measurement_update(y, k)
            f.adapt_noise()
        return f.x


class _OUNoise:
    """Low-pass (Ornstein-Uhlenbeck) control noise with stationary std ``sigma``."""

    def __init__(self, sigma: float, dim: int, tick: float, rng: np.random.Generator, tau: float = 0.2):
        self.sigma = float(sigma)
        self.a = math.exp(-tick / tau)
        self.b = self.sigma * math.sqrt(1 - self.a**2)
        self.state = np.zeros(dim)
        self.rng = rng

    def __call__(self) -> np.ndarray:
        if self.sigma == 0:
            return self.state
        self.state = self.a * self.state + self.b * self.rng.standard_normal(self.state.size)
        return self.state


class _Recorder:
    def __init__(self):
        self.sensed: list[np.ndarray] = []
        self.controls: list[np.ndarray] = []
        self.active: list[str] = []
        self.fired: list[tuple[int, str]] = []
        self.current = ""

    def fire(self, k: int, tid: str):
        self.fired.append((k, tid))
        self.current = tid

    def record(self, x, u):
        self.sensed.append(np.array(x, dtype=float))
        self.controls.append(np.atleast_1d(np.array(u, dtype=float)))
        self.active.append(self.current)


def _check_finite(values, k: int, what: str):
    if not all(math.isfinite(v) for v in values):
        raise OracleDivergence(f"{what} state became non-finite at tick {k}")


# -- pendulum ---------------------------------------------------------------


def _pendulum(task: PendulumTask, noise: float, rng, capture: CaptureConfig, variant: str, budget: float,
              swing_gain: float = 5.0, energy_margin: float = 0.3, catch_height: float = 0.98,
              catch_gains: tuple[float, float] = (25.0, 5.0), push: float = 0.0):
    if variant not in PENDULUM_VARIANTS:
        raise ValueError(f"unknown pendulum variant {variant!r}")
    p = task.params
    limit = p.u_max if variant == "back_and_forth" else 1.5 * p.u_max
    ep = task.episode(rng)
    if push:
        # start with an overswing: hanging, moving, with ``push`` joules above the catch energy
        target0 = p.mass * p.gravity * p.length + energy_margin + push
        w0 = math.sqrt(2.0 * (target0 + p.mass * p.gravity * p.length * math.cos(ep.state.theta))) / p.length
        ep.state = replace(ep.state, omega=math.copysign(w0, ep.state.theta or 1.0))
    cam = _CameraTrack(capture, task.tick, ep.state.theta, rng)
    ou = _OUNoise(noise, 1, task.tick, rng)
    rec = _Recorder()
    target = p.mass * p.gravity * p.length + energy_margin
    phase = "swing"
    est = np.array([ep.state.theta, 0.0, 0.0])
    t_up = None
    success = False
    n_ticks = int(round(budget / task.tick))
    rec.fire(0, "t0")
    k = 0
    while True:
        s = ep.state
        th_hat, om_hat = est[0], est[1]
        x = pendulum_sensed(th_hat, om_hat, ep.hold, ep.elapsed, p)
        height = -math.cos(s.theta)
        # at most one event per tick, in net priority order (one token, one firing)
        if k == 0:
            pass
        elif phase == "swing":
            if height >= catch_height:
                rec.fire(k, "t2")
                phase = "catch"
            elif ep.elapsed >= budget - 0.5:
                rec.fire(k, "t5")
                break
            elif -x[0] <= 0.8:
                rec.fire(k, "t1")
        elif phase == "catch":
            if ep.hold >= 0.5:
                success = True
                rec.fire(k, "t3")
                break
            if -x[0] <= 0.5:
                rec.fire(k, "t4")
                break
            if ep.elapsed >= budget - 0.5:
                rec.fire(k, "t6")
                break
        if k >= n_ticks:
            break
        if phase == "swing":
            E = pendulum_energy(s.theta, s.omega, p)
            if variant == "jerk_up" and E >= 0.0:
                u = limit * math.copysign(1.0, s.omega) if E < target else 0.0
            else:
                u = swing_gain * s.omega * (target - E) if abs(s.omega) > 1e-6 else limit
        else:
            err = wrap_angle(s.theta - math.pi)
            u = -catch_gains[0] * err - catch_gains[1] * s.omega
        u = min(max(u + float(ou()[0]), -limit), limit)
        rec.record(x, [u])
        was_up = ep.upright()
        ep.advance(u, u_limit=limit)
        _check_finite((ep.state.theta, ep.state.omega), k, "pendulum")
        if ep.upright() and not was_up:
            t_up = ep.elapsed
        est = cam.advance(ep.state.theta)
        k += 1
    final = pendulum_sensed(est[0], est[1], ep.hold, ep.elapsed, p)
    score = max(0.0, 1.0 - t_up / budget) if success and t_up is not None else 0.0
    fired = {t for _, t in rec.fired}
    labels = {"t0": 1.0, "t1": 1.0 if "t2" in fired else 0.0}
    if "t2" in fired:
        labels["t2"] = 1.0 if success else 0.0
    for stop in ("t3", "t4", "t5", "t6"):
        if stop in fired:
            labels[stop] = score
    meta = {"peak_demand": ep.peak_demand, "time_to_upright": t_up if t_up is not None else -1.0}
    return rec, final, success, score, labels, meta


# -- nunchaku ---------------------------------------------------------------


def _nunchaku(task: NunchakuTask, noise: float, rng, capture: CaptureConfig, variant: str, budget: float,
              amplitude: float = 15.0, release_energy: float = 1.0):
    if variant not in NUNCHAKU_VARIANTS:
        raise ValueError(f"unknown nunchaku variant {variant!r}")
    p = task.params
    ep = task.episode(rng)
    cams = [_CameraTrack(capture, task.tick, v, rng) for v in (ep.state.hx, ep.state.hy)]
    ou = _OUNoise(noise, 2, task.tick, rng)
    rec = _Recorder()
    ests = [np.zeros(capture.order + 1), np.zeros(capture.order + 1)]
    phase = "swing"
    t_done = None
    n_ticks = int(round(budget / task.tick))
    ell = p.free_length
    rec.fire(0, "t0")
    k = 0
    released_at = None
    while True:
        s = ep.state
        x = ep.sensed()
        x[3], x[4], x[5], x[6] = ests[0][0], ests[1][0], ests[0][1], ests[1][1]
        grip, contact, load = x[0], x[1], x[2]
        if k == 0:
            pass
        elif phase == "swing":
            E = 0.5 * ell**2 * s.psid**2 - p.gravity * ell * math.cos(s.psi)
            if ep.elapsed >= 4.0:
                rec.fire(k, "t6")
                break
            if E >= release_energy * p.gravity * ell and abs(wrap_angle(s.psi)) < 0.3 and load >= 8.0:
                rec.fire(k, "t2")
                ep.fire("t2")
                phase = "release"
                released_at = k
            elif load <= 8.0:
                rec.fire(k, "t1")
        elif phase in ("release", "roll"):
            e = (math.cos(s.phi), math.sin(s.phi))
            along = math.sin(s.psi) * e[0] - math.cos(s.psi) * e[1]
            if ep.elapsed >= 6.0:
                rec.fire(k, "t7")
                break
            if phase == "roll" and contact >= 1.0 and 0.5 * (1 + along) >= 0.95:
                rec.fire(k, "t4")
                ep.fire("t4")
                phase = "regrasp"
            elif contact <= 1.0 and k > released_at:
                rec.fire(k, "t3")
                ep.fire("t3")
                phase = "roll"
        elif phase == "regrasp":
            if grip >= 0.9:
                rec.fire(k, "t5")
            else:
                rec.fire(k, "t8")
            t_done = ep.elapsed
            break
        if k >= n_ticks:
            break
        hold_y = -20.0 * s.hy - 8.0 * s.vy
        if phase == "swing":
            ax = -amplitude * math.copysign(1.0, s.psid * math.cos(s.psi)) - 4.0 * s.hx - 3.0 * s.vx
        else:
            ax = -20.0 * s.hx - 8.0 * s.vx
        u = np.array([ax, hold_y, 0.0])
        u[:2] += ou()
        u = np.clip(u, -task.accel_limit, task.accel_limit)
        rec.record(x, u)
        ep.advance(u)
        _check_finite((ep.state.hx, ep.state.hy, ep.state.psi, ep.state.psid), k, "nunchaku")
        ests = [cam.advance(v) for cam, v in zip(cams, (ep.state.hx, ep.state.hy))]
        k += 1
    final = ep.sensed()
    final[3], final[4], final[5], final[6] = ests[0][0], ests[1][0], ests[0][1], ests[1][1]
    quality = ep.state.quality
    success = t_done is not None and quality >= 0.9
    score = max(0.0, 1.0 - t_done / budget) if success else 0.0
    fired = {t for _, t in rec.fired}
    labels = {"t0": 1.0, "t1": 1.0 if "t2" in fired else 0.0}
    if "t2" in fired:
        labels["t2"] = 1.0 if "t4" in fired else 0.0
    if "t3" in fired:
        labels["t3"] = quality if "t4" in fired else 0.0
    if "t4" in fired:
        labels["t4"] = 1.0 if success else 0.0
    for stop in ("t5", "t6", "t7", "t8"):
        if stop in fired:
            labels[stop] = score
    meta = {"regrasp_quality": quality}
    return rec, final, success, score, labels, meta


def demonstrate(task, noise: float = 0.0, seed: int = 0, capture: CaptureConfig | None = None,
                variant: str | None = None, budget: float | None = None, **oracle_kw) -> LabeledDemonstration:
    """Run the scripted mentor once and return the labeled, captured trace.

    Parameters
    ----------
    task : PendulumTask or NunchakuTask
    noise : float
        Stationary std of low-pass noise added to the mentor's controls.
    seed : int
        Seeds initial-state jitter, control noise and camera noise.
    capture : CaptureConfig, optional
    variant : str, optional
        ``"back_and_forth"`` (default) or ``"jerk_up"`` for the pendulum.
    budget : float, optional
        Seconds; defaults to the task's entry in ``DEFAULT_BUDGET``.

    Raises
    ------
    OracleDivergence
        When the simulated state becomes non-finite.
    """
    capture = capture or CaptureConfig()
    rng = np.random.default_rng(seed)
    budget = DEFAULT_BUDGET[task.name] if budget is None else float(budget)
    if task.name == "pendulum":
        variant = variant or "back_and_forth"
        rec, final, success, score, labels, extra = _pendulum(task, noise, rng, capture, variant, budget, **oracle_kw)
    elif task.name == "nunchaku":
        variant = variant or "flip"
        rec, final, success, score, labels, extra = _nunchaku(task, noise, rng, capture, variant, budget, **oracle_kw)
    else:
        raise ValueError(f"unknown task {task.name!r}")
    meta = {"task": task.name, "variant": variant, "seed": seed, "noise": noise, "budget": budget,
            "terminal": rec.fired[-1][1] if rec.fired else ""}
    meta.update(capture.as_header())
    meta.update(extra)
    n = len(rec.active)
    trace = Demonstration(
        task.tick,
        np.array(rec.sensed).reshape(n, task.sensed_dim),
        np.array(rec.controls).reshape(n, task.control_dim),
        rec.active,
        rec.fired,
        final,
        meta,
    )
    demo_id = f"{task.name}-{variant}-s{seed}-n{noise:g}"
    return LabeledDemonstration(trace, success, score, labels, demo_id=demo_id, variant=variant)
