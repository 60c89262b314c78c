"""Task dynamics: a torque-limited pendulum and a planar nunchaku idealization.

Each task exposes an *episode* object that owns the mutable physical state
for one demonstration or trial, produces the sensed channel vector, and
advances one control tick at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

__all__ = [
    "TICK",
    "PendulumParams",
    "PendulumState",
    "pendulum_step",
    "pendulum_energy",
    "pendulum_sensed",
    "PendulumTask",
    "GripMode",
    "GripCommand",
    "IllegalGripTransition",
    "NunchakuParams",
    "NunchakuState",
    "nunchaku_step",
    "NunchakuTask",
    "make_task",
]

TICK = 1e-3


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


# -- pendulum ---------------------------------------------------------------


@dataclass(frozen=True)
class PendulumParams:
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    damping: float = 0.1
    u_max: float = 2.0


@dataclass(frozen=True)
class PendulumState:
    theta: float  # 0 = hanging down
    omega: float
    u: float = 0.0  # torque applied on the last step


def pendulum_step(state: PendulumState, u: float, T: float = TICK,
                  params: PendulumParams = PendulumParams()) -> PendulumState:
    """Semi-implicit Euler step with the torque clipped to +-u_max."""
    p = params
    u = min(max(float(u), -p.u_max), p.u_max)
    acc = (-(p.gravity / p.length) * math.sin(state.theta)
           + u / (p.mass * p.length**2) - p.damping * state.omega)
    omega = state.omega + T * acc
    return PendulumState(state.theta + T * omega, omega, u)


def pendulum_energy(theta: float, omega: float, params: PendulumParams = PendulumParams()) -> float:
    p = params
    return 0.5 * p.mass * p.length**2 * omega**2 - p.mass * p.gravity * p.length * math.cos(theta)


def pendulum_sensed(theta: float, omega: float, hold: float, elapsed: float,
                    params: PendulumParams = PendulumParams()) -> np.ndarray:
    """``[cos, sin, omega, energy, hold, elapsed]`` for an angle/rate reading."""
    return np.array([math.cos(theta), math.sin(theta), omega, pendulum_energy(theta, omega, params), hold, elapsed])


class PendulumEpisode:
    def __init__(self, task: "PendulumTask", state: PendulumState):
        self.task = task
        self.state = state
        self.hold = 0.0
        self.elapsed = 0.0
        self.peak_demand = 0.0

    def upright(self) -> bool:
        s = self.state
        return abs(wrap_angle(s.theta - math.pi)) < self.task.upright_angle and abs(s.omega) < self.task.upright_rate

    def sensed(self) -> np.ndarray:
        s = self.state
        return pendulum_sensed(s.theta, s.omega, self.hold, self.elapsed, self.task.params)

    def advance(self, u, u_limit: float | None = None) -> None:
        u = float(np.asarray(u).reshape(-1)[0])
        self.peak_demand = max(self.peak_demand, abs(u))
        params = self.task.params if u_limit is None else replace(self.task.params, u_max=u_limit)
        self.state = pendulum_step(self.state, u, self.task.tick, params)
        if not math.isfinite(self.state.theta) or not math.isfinite(self.state.omega):
            raise FloatingPointError("pendulum state diverged")
        self.elapsed += self.task.tick
        self.hold = self.hold + self.task.tick if self.upright() else 0.0

    def fire(self, tid: str) -> None:
        pass


@dataclass(frozen=True)
class PendulumTask:
    """Swing-up and balance of an under-actuated pendulum.

    Sensed channels: ``[cos theta, sin theta, omega, energy, hold, elapsed]``
    where ``energy`` is the mechanical energy computed from the angle and
    rate readings and ``hold`` is the time spent continuously in the upright
    box. Policies see the first four channels.
    """

    params: PendulumParams = PendulumParams()
    tick: float = TICK
    init_jitter: float = 0.05
    upright_angle: float = 0.1
    upright_rate: float = 0.5
    name: str = "pendulum"
    sensed_dim: int = 6
    control_dim: int = 1
    policy_dims: tuple[int, ...] = (0, 1, 2, 3)
    sensed_names: tuple[str, ...] = ("cos_theta", "sin_theta", "omega", "energy", "hold", "elapsed")

    def episode(self, rng: np.random.Generator | None = None) -> PendulumEpisode:
        theta0 = 0.0 if rng is None else float(rng.uniform(-self.init_jitter, self.init_jitter))
        return PendulumEpisode(self, PendulumState(theta0, 0.0))


# -- nunchaku ---------------------------------------------------------------


class GripMode(str, Enum):
    FIRM = "firm"
    RELEASED = "released"
    BACK_PALM = "back_palm"
    REGRASPED = "regrasped"


class GripCommand(str, Enum):
    HOLD = "hold"
    RELEASE = "release"
    BACK_PALM = "back_palm"
    REGRASP = "regrasp"


_LEGAL = {
    GripCommand.RELEASE: (GripMode.FIRM, GripMode.RELEASED),
    GripCommand.BACK_PALM: (GripMode.RELEASED, GripMode.BACK_PALM),
    GripCommand.REGRASP: (GripMode.BACK_PALM, GripMode.REGRASPED),
}


class IllegalGripTransition(ValueError):
    pass


@dataclass(frozen=True)
class NunchakuParams:
    gravity: float = 9.81
    held_length: float = 0.3  # held stick, hand to chain
    free_length: float = 0.3  # chain pivot to free-stick centre of mass
    free_mass: float = 0.25
    damping: float = 0.05
    released_offset: float = 0.08  # pivot along the hand axis after release
    palm_offset: float = 0.04  # pivot displacement toward the back of the hand
    contact_cos: float = math.cos(math.pi / 4)


@dataclass(frozen=True)
class NunchakuState:
    hx: float
    hy: float
    phi: float  # hand axis orientation
    vx: float
    vy: float
    w: float
    psi: float  # free stick angle from hanging straight down
    psid: float
    mode: GripMode = GripMode.FIRM
    quality: float = 0.0  # regrasp quality, latched at regrasp
    load: float = 0.0
    contact: float = 0.0


def _pivot_offsets(mode: GripMode, p: NunchakuParams) -> tuple[float, float]:
    if mode is GripMode.FIRM:
        return p.held_length, 0.0
    if mode is GripMode.RELEASED:
        return p.released_offset, 0.0
    return p.released_offset, p.palm_offset


def nunchaku_step(state: NunchakuState, controls, grip: GripCommand | str = GripCommand.HOLD,
                  T: float = TICK, params: NunchakuParams = NunchakuParams()) -> NunchakuState:
    """Advance the hand (acceleration controlled) and the free stick one tick.

    The free stick is a pendulum about a pivot fixed in the hand frame; the
    pivot location depends on the grip mode. In ``regrasped`` mode the stick
    moves rigidly with the hand.
    """
    p = params
    grip = GripCommand(grip)
    mode = state.mode
    quality = state.quality
    if grip is not GripCommand.HOLD:
        src, dst = _LEGAL[grip]
        if mode is not src:
            raise IllegalGripTransition(f"{grip.value} is illegal in mode {mode.value}")
        mode = dst
    ax, ay, alpha = (float(c) for c in controls)

    c, s = math.cos(state.phi), math.sin(state.phi)
    e = (c, s)
    n = (-s, c)
    ce, cn = _pivot_offsets(mode, p)
    w = state.w
    # pivot acceleration: hand + offset rotating with the hand
    eddot = (alpha * n[0] - w * w * e[0], alpha * n[1] - w * w * e[1])
    nddot = (-alpha * e[0] - w * w * n[0], -alpha * e[1] - w * w * n[1])
    pax = ax + ce * eddot[0] + cn * nddot[0]
    pay = ay + ce * eddot[1] + cn * nddot[1]

    vx, vy, w_new = state.vx + T * ax, state.vy + T * ay, w + T * alpha
    hx, hy, phi = state.hx + T * vx, state.hy + T * vy, state.phi + T * w_new

    sp, cp = math.sin(state.psi), math.cos(state.psi)
    if mode is GripMode.REGRASPED:
        psid = w_new
        psi = state.psi + T * psid
        load = p.free_mass * math.hypot(ax, ay + p.gravity)
        contact = 0.0
    else:
        ell = p.free_length
        psidd = -((p.gravity + pay) * sp + pax * cp) / ell - p.damping * state.psid
        psid = state.psid + T * psidd
        psi = state.psi + T * psid
        tension = p.free_mass * (ell * state.psid**2 + (p.gravity + pay) * cp - pax * sp)
        load = abs(tension)
        contact = 0.0
        if mode is GripMode.BACK_PALM:
            # bob direction (sin psi, -cos psi) against the back/axis bisector
            bis = ((e[0] + n[0]) / math.sqrt(2), (e[1] + n[1]) / math.sqrt(2))
            if sp * bis[0] - cp * bis[1] >= p.contact_cos:
                contact = max(tension, 0.0)
    if grip is GripCommand.REGRASP:
        along = math.sin(psi) * e[0] - math.cos(psi) * e[1]
        slip = (psid - w_new) / 20.0
        quality = 0.5 * (1.0 + along) * math.exp(-slip * slip)
    if not all(map(math.isfinite, (hx, hy, phi, psi, psid))):
        raise FloatingPointError("nunchaku state diverged")
    return NunchakuState(hx, hy, phi, vx, vy, w_new, psi, psid, mode, quality, load, contact)


def free_stick_com(state: NunchakuState, params: NunchakuParams = NunchakuParams()) -> tuple[float, float]:
    """World position of the free-stick centre of mass."""
    ce, cn = _pivot_offsets(state.mode, params)
    c, s = math.cos(state.phi), math.sin(state.phi)
    px = state.hx + ce * c - cn * s
    py = state.hy + ce * s + cn * c
    return px + params.free_length * math.sin(state.psi), py - params.free_length * math.cos(state.psi)


# which grip command each nunchaku transition issues when it fires
NUNCHAKU_GRIP = {"t2": GripCommand.RELEASE, "t3": GripCommand.BACK_PALM, "t4": GripCommand.REGRASP}


class NunchakuEpisode:
    def __init__(self, task: "NunchakuTask", state: NunchakuState):
        self.task = task
        self.state = state
        self.elapsed = 0.0
        self._pending = GripCommand.HOLD

    def grip_signal(self) -> float:
        m = self.state.mode
        if m is GripMode.FIRM:
            return 1.0
        if m is GripMode.REGRASPED:
            return self.state.quality
        return 0.0

    def sensed(self) -> np.ndarray:
        s = self.state
        return np.array([self.grip_signal(), s.contact, s.load, s.hx, s.hy, s.vx, s.vy, self.elapsed])

    def fire(self, tid: str) -> None:
        cmd = NUNCHAKU_GRIP.get(tid)
        if cmd is None:
            return
        src, _ = _LEGAL[cmd]
        # re-firing a self-loop, or a command from the wrong mode, holds the grip
        if self.state.mode is src:
            self._pending = cmd

    def advance(self, u, u_limit: float | None = None) -> None:
        u = np.asarray(u, dtype=float).reshape(-1)
        lim = self.task.accel_limit if u_limit is None else u_limit
        a = np.clip(u[:3] if u.size >= 3 else np.pad(u, (0, 3 - u.size)), -lim, lim)
        self.state = nunchaku_step(self.state, a, self._pending, self.task.tick, self.task.params)
        self._pending = GripCommand.HOLD
        self.elapsed += self.task.tick


@dataclass(frozen=True)
class NunchakuTask:
    """Planar nunchaku flip: swing-up, chain rolling on the back palm, regrasp.

    Sensed channels (a stand-in for haptic and wrist load-cell readings plus
    hand proprioception): ``[grip, contact, load, hand_x, hand_y, hand_vx,
    hand_vy, elapsed]``. Controls are hand accelerations ``[ax, ay, alpha]``.
    """

    params: NunchakuParams = NunchakuParams()
    tick: float = TICK
    accel_limit: float = 30.0
    init_jitter: float = 0.05
    name: str = "nunchaku"
    sensed_dim: int = 8
    control_dim: int = 3
    policy_dims: tuple[int, ...] = (1, 2, 3, 5)
    sensed_names: tuple[str, ...] = ("grip", "contact", "load", "hand_x", "hand_y", "hand_vx", "hand_vy", "elapsed")

    def episode(self, rng: np.random.Generator | None = None) -> NunchakuEpisode:
        psi0 = 0.0 if rng is None else float(rng.uniform(-self.init_jitter, self.init_jitter))
        return NunchakuEpisode(self, NunchakuState(0.0, 0.0, math.pi / 2, 0.0, 0.0, 0.0, psi0, 0.0))


def make_task(name: str):
    if name == "pendulum":
        return PendulumTask()
    if name == "nunchaku":
        return NunchakuTask()
    raise ValueError(f"unknown task {name!r}")
