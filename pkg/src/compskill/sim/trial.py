"""One robot trial: the net schedules transitions, each transition's policy drives the task."""

from __future__ import annotations

import numpy as np

from ..apn import AdaptivePetriNet, enabled_decisions, sample_firing_vector, step_marking
from ..gpr import GprModel
from .oracles import DEFAULT_BUDGET
from .trace import Demonstration

__all__ = ["MissingPolicyError", "run_trial", "stop_transitions"]


class MissingPolicyError(KeyError):
    pass


def stop_transitions(net: AdaptivePetriNet) -> list[str]:
    """Transitions that only feed sink places (termination markers)."""
    sinks = {net.place_index(p) for p in net.sink_places()}
    out = []
    for t in net.transitions:
        dst = set(np.flatnonzero(net.post[:, t.index]))
        if dst and dst <= sinks:
            out.append(t.id)
    return out


def run_trial(net: AdaptivePetriNet, policies: dict[str, GprModel], task, rng: np.random.Generator,
              budget: float | None = None) -> Demonstration:
    """Execute the skill at the task's control tick.

    Every tick: evaluate enabled transitions on the sensed vector, sample and
    apply firings, then command the output of the active (most recently
    fired) transition's policy. The trial ends when a sink place is marked or
    when the time budget runs out. Recorded controls are the commanded values
    before actuator saturation.

    Raises
    ------
    MissingPolicyError
        When a transition that needs a policy becomes active without one.
    """
    budget = DEFAULT_BUDGET[task.name] if budget is None else float(budget)
    n_ticks = int(round(budget / task.tick))
    dims = np.asarray(task.policy_dims)
    sinks = np.zeros(len(net.places), dtype=bool)
    sinks[[net.place_index(p) for p in net.sink_places()]] = True
    stops = set(stop_transitions(net))
    lambdas = net.lambdas
    ids = net.transition_ids

    ep = task.episode(rng)
    marking = net.initial_marking.copy()
    sensed, controls, active, fired = [], [], [], []
    current = ""
    terminal = ""
    x = ep.sensed()
    for k in range(n_ticks + 1):
        x = ep.sensed()
        fv = sample_firing_vector(enabled_decisions(net, marking, x), lambdas, rng)
        if fv.mu.any():
            res = step_marking(marking, net, fv)
            marking = res.marking
            for i in np.flatnonzero(res.applied):
                tid = ids[i]
                fired.append((k, tid))
                current = tid
                ep.fire(tid)
        if (marking[sinks] > 0).any():
            terminal = current
            break
        if k == n_ticks:
            break
        if current in stops:
            break
        if current:
            model = policies.get(current)
            if model is None:
                raise MissingPolicyError(f"no policy for active transition {current!r}")
            u = model(x[dims])
        else:
            u = np.zeros(task.control_dim)  # nothing fired yet
        sensed.append(x)
        controls.append(np.asarray(u, dtype=float).reshape(-1))
        active.append(current)
        ep.advance(u)
    n = len(active)
    meta = {"task": task.name, "budget": budget, "terminal": terminal}
    if hasattr(ep, "peak_demand"):
        meta["peak_demand"] = ep.peak_demand
    if hasattr(ep.state, "quality"):
        meta["regrasp_quality"] = ep.state.quality
    return Demonstration(task.tick, np.array(sensed).reshape(n, task.sensed_dim),
                         np.array(controls).reshape(n, task.control_dim), active, fired, x.copy(), meta)
