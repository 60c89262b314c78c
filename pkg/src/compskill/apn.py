"""Adaptive Petri nets for skill definitions.

A net is the 6-tuple (places, transitions, incidence, initial marking,
firing probabilities, firing conditions). Input and output arcs are kept as
separate ``pre``/``post`` matrices so that self-loop transitions (a swing that
keeps the token in the same place) keep their structural enablement; the
incidence matrix is ``post - pre``.

Nets are treated as values: every adaptation function returns a new net and
leaves its argument untouched.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PetriNetError",
    "SkillParseError",
    "UnknownTransitionError",
    "Place",
    "FiringCondition",
    "Transition",
    "FiringVector",
    "StepResult",
    "AdaptivePetriNet",
    "AddPlace",
    "DropPlace",
    "AddTransition",
    "DropTransition",
    "parse_skill_definition",
    "serialize_skill_definition",
    "load_skill",
    "enabled_decisions",
    "sample_firing_vector",
    "step_marking",
    "decay_firing_probability",
    "update_condition",
    "mutate_structure",
    "reachable_markings",
    "place_reachable",
]

DEFAULT_KAPPA = 0.9
DEFAULT_LAMBDA_FLOOR = 0.05


class PetriNetError(ValueError):
    """Invalid net construction, edit or execution request."""


class UnknownTransitionError(PetriNetError, KeyError):
    pass


class SkillParseError(PetriNetError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Place:
    id: str
    index: int


@dataclass(frozen=True)
class FiringCondition:
    """Threshold test ``projection . x >= threshold`` (or ``<=``).

    Both comparators are inclusive.
    """

    projection: tuple[float, ...]
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in ("ge", "le"):
            raise PetriNetError(f"comparator must be 'ge' or 'le', got {self.comparator!r}")
        object.__setattr__(self, "projection", tuple(float(g) for g in self.projection))
        object.__setattr__(self, "threshold", float(self.threshold))
        if not self.projection:
            raise PetriNetError("condition projection must be non-empty")

    @property
    def dim(self) -> int:
        return len(self.projection)

    def value(self, sensed) -> float:
        return float(np.dot(self.projection, sensed))

    def holds(self, sensed) -> bool:
        v = self.value(sensed)
        return v >= self.threshold if self.comparator == "ge" else v <= self.threshold


@dataclass(frozen=True)
class Transition:
    id: str
    index: int
    lam: float
    lam_initial: float
    condition: FiringCondition | None = None  # None means always satisfied

    def __post_init__(self):
        for name in ("lam", "lam_initial"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise PetriNetError(f"transition {self.id}: {name}={v} outside [0, 1]")


@dataclass
class FiringVector:
    mu: np.ndarray
    decisions: np.ndarray
    samples: np.ndarray


@dataclass
class StepResult:
    marking: np.ndarray
    applied: np.ndarray
    suppressed: list[int]


class AdaptivePetriNet:
    """Adaptive Petri net with per-transition firing probabilities and conditions.

    Parameters
    ----------
    places : sequence of str
        Place ids, in index order.
    transitions : sequence of Transition
        Transitions in index order (their ``index`` fields must match).
    pre, post : array_like, shape (n_places, n_transitions)
        Input and output arc multiplicities.
    initial_marking : array_like of int
    kappa : float
        Probability decay factor, strictly inside (0, 1).
    lambda_floor : float
        A decayed probability below this level requests a condition update.
    """

    def __init__(
        self,
        places: Sequence[str],
        transitions: Sequence[Transition],
        pre,
        post,
        initial_marking,
        kappa: float = DEFAULT_KAPPA,
        lambda_floor: float = DEFAULT_LAMBDA_FLOOR,
    ):
        self.places = [Place(pid, i) for i, pid in enumerate(places)]
        self.transitions = list(transitions)
        self.pre = np.array(pre, dtype=np.int64).reshape(len(self.places), len(self.transitions))
        self.post = np.array(post, dtype=np.int64).reshape(len(self.places), len(self.transitions))
        self.initial_marking = np.array(initial_marking, dtype=np.int64).reshape(len(self.places))
        self.kappa = float(kappa)
        self.lambda_floor = float(lambda_floor)
        self._validate()
        self._compile()

    def _validate(self):
        pids = [p.id for p in self.places]
        if len(set(pids)) != len(pids):
            raise PetriNetError("duplicate place id")
        tids = [t.id for t in self.transitions]
        if len(set(tids)) != len(tids):
            raise PetriNetError("duplicate transition id")
        if set(pids) & set(tids):
            raise PetriNetError("place and transition ids must be distinct")
        for i, t in enumerate(self.transitions):
            if t.index != i:
                raise PetriNetError(f"transition {t.id} has index {t.index}, expected {i}")
        if not (0.0 < self.kappa < 1.0):
            raise PetriNetError(f"kappa must satisfy 0 < kappa < 1, got {self.kappa}")
        if not (0.0 < self.lambda_floor < 1.0):
            raise PetriNetError(f"lambda_floor must lie in (0, 1), got {self.lambda_floor}")
        if (self.pre < 0).any() or (self.post < 0).any():
            raise PetriNetError("arc multiplicities must be non-negative")
        if (self.initial_marking < 0).any():
            raise PetriNetError("initial marking must be non-negative")
        for t in self.transitions:
            if not (self.pre[:, t.index].any() or self.post[:, t.index].any()):
                raise PetriNetError(f"transition {t.id} has no arcs")
        dims = {t.condition.dim for t in self.transitions if t.condition is not None}
        if len(dims) > 1:
            raise PetriNetError(f"condition projections disagree on sensed dimension: {sorted(dims)}")

    def _compile(self):
        nt = len(self.transitions)
        dim = self.sensed_dim or 0
        self._proj = np.zeros((nt, dim))
        self._thresh = np.zeros(nt)
        self._sign = np.zeros(nt)  # +1 for ge, -1 for le, 0 for always
        for t in self.transitions:
            if t.condition is not None:
                self._proj[t.index] = t.condition.projection
                self._thresh[t.index] = t.condition.threshold
                self._sign[t.index] = 1.0 if t.condition.comparator == "ge" else -1.0
        self._always = self._sign == 0
        self._lambdas = np.array([t.lam for t in self.transitions])
        self._tindex = {t.id: t.index for t in self.transitions}
        self._pindex = {p.id: p.index for p in self.places}

    # -- accessors --------------------------------------------------------

    @property
    def incidence(self) -> np.ndarray:
        return self.post - self.pre

    @property
    def sensed_dim(self) -> int | None:
        for t in self.transitions:
            if t.condition is not None:
                return t.condition.dim
        return None

    @property
    def lambdas(self) -> np.ndarray:
        return self._lambdas.copy()

    @property
    def place_ids(self) -> list[str]:
        return [p.id for p in self.places]

    @property
    def transition_ids(self) -> list[str]:
        return [t.id for t in self.transitions]

    def transition_index(self, tid: str) -> int:
        try:
            return self._tindex[tid]
        except KeyError:
            raise UnknownTransitionError(f"unknown transition {tid!r}") from None

    def place_index(self, pid: str) -> int:
        try:
            return self._pindex[pid]
        except KeyError:
            raise PetriNetError(f"unknown place {pid!r}") from None

    def transition(self, tid: str) -> Transition:
        return self.transitions[self.transition_index(tid)]

    def inputs_of(self, tid: str) -> list[str]:
        j = self.transition_index(tid)
        return [p.id for p in self.places if self.pre[p.index, j]]

    def outputs_of(self, tid: str) -> list[str]:
        j = self.transition_index(tid)
        return [p.id for p in self.places if self.post[p.index, j]]

    def sink_places(self) -> list[str]:
        """Places without outgoing arcs that receive at least one arc."""
        return [
            p.id for p in self.places
            if not self.pre[p.index].any() and self.post[p.index].any()
        ]

    def copy(self) -> "AdaptivePetriNet":
        return copy.deepcopy(self)

    def replace_transition(self, index: int, **changes) -> "AdaptivePetriNet":
        ts = list(self.transitions)
        ts[index] = _replace(ts[index], **changes)
        return AdaptivePetriNet(
            self.place_ids, ts, self.pre, self.post, self.initial_marking,
            self.kappa, self.lambda_floor,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, AdaptivePetriNet):
            return NotImplemented
        return (
            self.places == other.places
            and self.transitions == other.transitions
            and np.array_equal(self.pre, other.pre)
            and np.array_equal(self.post, other.post)
            and np.array_equal(self.initial_marking, other.initial_marking)
            and self.kappa == other.kappa
            and self.lambda_floor == other.lambda_floor
        )

    def __repr__(self) -> str:
        return (
            f"AdaptivePetriNet(places={self.place_ids}, transitions={self.transition_ids}, "
            f"kappa={self.kappa}, lambda_floor={self.lambda_floor})"
        )

    def to_text(self) -> str:
        return serialize_skill_definition(self)


def _replace(t: Transition, **changes) -> Transition:
    fields_ = dict(id=t.id, index=t.index, lam=t.lam, lam_initial=t.lam_initial, condition=t.condition)
    fields_.update(changes)
    return Transition(**fields_)


# -- text format ----------------------------------------------------------


def _parse_float(tok: str, what: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise SkillParseError(f"bad {what} {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise SkillParseError(f"{what} must be finite", lineno)
    return v


def _kv(tok: str, key: str, lineno: int) -> str:
    prefix = key + "="
    if not tok.startswith(prefix):
        raise SkillParseError(f"expected {prefix}<value>, got {tok!r}", lineno)
    return tok[len(prefix):]


def parse_skill_definition(text: str) -> AdaptivePetriNet:
    """Parse a line-oriented skill definition into a validated net.

    Raises
    ------
    SkillParseError
        With the offending line number for unknown references, duplicate
        ids, out-of-range probabilities or malformed lines.
    """
    places: list[str] = []
    place_line: dict[str, int] = {}
    trans: list[dict] = []
    trans_line: dict[str, int] = {}
    arcs: list[tuple[str, str, int]] = []
    conditions: dict[str, tuple[FiringCondition, int]] = {}
    marking: dict[str, int] = {}
    kappa = DEFAULT_KAPPA
    floor = DEFAULT_LAMBDA_FLOOR
    saw_marking = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kw, args = toks[0], toks[1:]
        if kw == "place":
            if len(args) != 1:
                raise SkillParseError("usage: place <id>", lineno)
            pid = args[0]
            if pid in place_line or pid in trans_line:
                raise SkillParseError(f"duplicate id {pid!r}", lineno)
            places.append(pid)
            place_line[pid] = lineno
        elif kw == "transition":
            if len(args) not in (2, 3):
                raise SkillParseError("usage: transition <id> lambda=<float> [lambda0=<float>]", lineno)
            tid = args[0]
            if tid in trans_line or tid in place_line:
                raise SkillParseError(f"duplicate id {tid!r}", lineno)
            lam = _parse_float(_kv(args[1], "lambda", lineno), "lambda", lineno)
            lam0 = lam
            if len(args) == 3:
                lam0 = _parse_float(_kv(args[2], "lambda0", lineno), "lambda0", lineno)
            for v in (lam, lam0):
                if not 0.0 <= v <= 1.0:
                    raise SkillParseError(f"lambda {v} outside [0, 1]", lineno)
            trans.append(dict(id=tid, lam=lam, lam0=lam0))
            trans_line[tid] = lineno
        elif kw == "arc":
            if len(args) != 3 or args[1] != "->":
                raise SkillParseError("usage: arc <src> -> <dst>", lineno)
            arcs.append((args[0], args[2], lineno))
        elif kw == "condition":
            if len(args) != 4:
                raise SkillParseError(
                    "usage: condition <transition> proj=<f,...> op=<ge|le> thresh=<float>", lineno)
            tid = args[0]
            proj_s = _kv(args[1], "proj", lineno)
            proj = tuple(_parse_float(s, "projection entry", lineno) for s in proj_s.split(","))
            op = _kv(args[2], "op", lineno)
            if op not in ("ge", "le"):
                raise SkillParseError(f"op must be ge or le, got {op!r}", lineno)
            thr = _parse_float(_kv(args[3], "thresh", lineno), "threshold", lineno)
            if tid in conditions:
                raise SkillParseError(f"duplicate condition for {tid!r}", lineno)
            conditions[tid] = (FiringCondition(proj, op, thr), lineno)
        elif kw == "marking":
            if len(args) != 2:
                raise SkillParseError("usage: marking <place> <int>", lineno)
            try:
                n = int(args[1])
            except ValueError:
                raise SkillParseError(f"bad token count {args[1]!r}", lineno) from None
            if n < 0:
                raise SkillParseError("token count must be non-negative", lineno)
            if args[0] in marking:
                raise SkillParseError(f"duplicate marking for {args[0]!r}", lineno)
            marking[args[0]] = n
            saw_marking = True
            if args[0] not in place_line:
                raise SkillParseError(f"unknown place {args[0]!r}", lineno)
        elif kw == "kappa":
            if len(args) != 1:
                raise SkillParseError("usage: kappa <float>", lineno)
            kappa = _parse_float(args[0], "kappa", lineno)
            if not 0.0 < kappa < 1.0:
                raise SkillParseError(f"kappa must satisfy 0 < kappa < 1, got {kappa}", lineno)
        elif kw == "lambda_floor":
            if len(args) != 1:
                raise SkillParseError("usage: lambda_floor <float>", lineno)
            floor = _parse_float(args[0], "lambda_floor", lineno)
            if not 0.0 < floor < 1.0:
                raise SkillParseError(f"lambda_floor must lie in (0, 1), got {floor}", lineno)
        else:
            raise SkillParseError(f"unknown keyword {kw!r}", lineno)

    if not saw_marking:
        raise SkillParseError("missing marking line")

    pidx = {p: i for i, p in enumerate(places)}
    tidx = {t["id"]: i for i, t in enumerate(trans)}
    pre = np.zeros((len(places), len(trans)), dtype=np.int64)
    post = np.zeros_like(pre)
    for src, dst, lineno in arcs:
        if src in pidx and dst in tidx:
            m, i, j = pre, pidx[src], tidx[dst]
        elif src in tidx and dst in pidx:
            m, i, j = post, pidx[dst], tidx[src]
        else:
            for name in (src, dst):
                if name not in pidx and name not in tidx:
                    raise SkillParseError(f"arc references undeclared node {name!r}", lineno)
            raise SkillParseError(f"arc must join a place and a transition: {src} -> {dst}", lineno)
        if m[i, j]:
            raise SkillParseError(f"duplicate arc {src} -> {dst}", lineno)
        m[i, j] = 1
    for tid, (_, lineno) in conditions.items():
        if tid not in tidx:
            raise SkillParseError(f"condition references unknown transition {tid!r}", lineno)

    transitions = [
        Transition(t["id"], i, t["lam"], t["lam0"], conditions.get(t["id"], (None,))[0])
        for i, t in enumerate(trans)
    ]
    m0 = [marking.get(p, 0) for p in places]
    try:
        return AdaptivePetriNet(places, transitions, pre, post, m0, kappa, floor)
    except PetriNetError as exc:
        raise SkillParseError(str(exc)) from exc


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_skill_definition(net: AdaptivePetriNet) -> str:
    """Render ``net`` in the canonical skill-definition format."""
    out = [f"place {p.id}" for p in net.places]
    for t in net.transitions:
        line = f"transition {t.id} lambda={_fmt(t.lam)}"
        if t.lam_initial != t.lam:
            line += f" lambda0={_fmt(t.lam_initial)}"
        out.append(line)
    for t in net.transitions:
        for p in net.places:
            if net.pre[p.index, t.index]:
                out.append(f"arc {p.id} -> {t.id}")
        for p in net.places:
            if net.post[p.index, t.index]:
                out.append(f"arc {t.id} -> {p.id}")
    for t in net.transitions:
        c = t.condition
        if c is not None:
            proj = ",".join(_fmt(g) for g in c.projection)
            out.append(f"condition {t.id} proj={proj} op={c.comparator} thresh={_fmt(c.threshold)}")
    marked = [(p, int(net.initial_marking[p.index])) for p in net.places if net.initial_marking[p.index]]
    if not marked:
        marked = [(net.places[0], 0)]
    out.extend(f"marking {p.id} {n}" for p, n in marked)
    out.append(f"kappa {_fmt(net.kappa)}")
    out.append(f"lambda_floor {_fmt(net.lambda_floor)}")
    return "\n".join(out) + "\n"


def load_skill(path_or_name) -> AdaptivePetriNet:
    """Load a skill file from disk, or a shipped skill by name (``"nunchaku"``)."""
    from pathlib import Path

    p = Path(path_or_name)
    if p.exists():
        return parse_skill_definition(p.read_text(encoding="utf-8"))
    from importlib import resources

    name = p.name if p.suffix == ".apn" else f"{p.name}.apn"
    res = resources.files("compskill").joinpath("skills", name)
    if not res.is_file():
        raise FileNotFoundError(str(path_or_name))
    return parse_skill_definition(res.read_text(encoding="utf-8"))


# -- execution ------------------------------------------------------------


def enabled_decisions(net: AdaptivePetriNet, marking, sensed_state) -> np.ndarray:
    """Decision values: structurally enabled and condition satisfied."""
    marking = np.asarray(marking)
    structural = (net.pre <= marking[:, None]).all(axis=0)
    if net.sensed_dim is None:
        return structural
    x = np.asarray(sensed_state, dtype=float)
    if x.shape != (net.sensed_dim,):
        raise PetriNetError(
            f"sensed state has shape {x.shape}, conditions expect ({net.sensed_dim},)")
    margin = net._sign * (net._proj @ x - net._thresh)
    return structural & (net._always | (margin >= 0.0))


def sample_firing_vector(decisions, lambdas, rng: np.random.Generator) -> FiringVector:
    """Gate decisions with Bernoulli(lambda) draws: ``mu = d AND p``.

    One uniform draw is consumed per transition regardless of the decision,
    so the random stream does not depend on the decisions.
    """
    d = np.asarray(decisions, dtype=bool)
    lam = np.asarray(lambdas, dtype=float)
    if d.shape != lam.shape:
        raise PetriNetError("decisions and lambdas differ in length")
    p = rng.random(lam.shape[0]) < lam
    return FiringVector(mu=d & p, decisions=d, samples=p)


def step_marking(marking, net: AdaptivePetriNet, firing: FiringVector | np.ndarray) -> StepResult:
    """Apply ``M' = M + A mu`` with conflict suppression.

    Firings are visited in ascending transition index. A firing whose input
    tokens were already consumed by an earlier firing in the same step is
    suppressed, so the result never goes negative.
    """
    mu = firing.mu if isinstance(firing, FiringVector) else np.asarray(firing, dtype=bool)
    m = np.asarray(marking, dtype=np.int64)
    if mu.shape != (len(net.transitions),) or m.shape != (len(net.places),):
        raise PetriNetError("firing vector or marking has wrong length")
    applied = np.zeros_like(mu, dtype=bool)
    suppressed: list[int] = []
    if mu.any():
        available = m.copy()
        for j in np.flatnonzero(mu):
            need = net.pre[:, j]
            if (available >= need).all():
                available -= need
                applied[j] = True
            else:
                suppressed.append(int(j))
        new = m + net.incidence @ applied.astype(np.int64)
    else:
        new = m.copy()
    return StepResult(marking=new, applied=applied, suppressed=suppressed)


# -- adaptation -----------------------------------------------------------


def decay_firing_probability(net: AdaptivePetriNet, transition_index: int) -> tuple[AdaptivePetriNet, bool]:
    """Scale one firing probability by kappa.

    Returns the new net and whether the decayed value fell below the floor.
    """
    t = net.transitions[transition_index]
    lam = net.kappa * t.lam
    return net.replace_transition(transition_index, lam=lam), lam < net.lambda_floor


def update_condition(
    net: AdaptivePetriNet,
    transition_index: int,
    weights: Sequence[float],
    recorded_states: Sequence[Sequence[float]],
) -> AdaptivePetriNet:
    """Move a condition threshold to the weighted reference firing state.

    The weights are normalized to sum to one; the reference state is their
    convex combination of the recorded firing states and the new threshold
    is its projection. The firing probability is reset to its initial value.
    Transitions without a condition only get the reset.
    """
    w = np.asarray(weights, dtype=float)
    S = np.asarray(recorded_states, dtype=float)
    if S.ndim != 2 or S.shape[0] == 0:
        raise PetriNetError("update_condition needs at least one recorded state")
    if w.shape != (S.shape[0],):
        raise PetriNetError("weights and recorded states differ in length")
    if (w < 0).any() or not np.isfinite(w).all():
        raise PetriNetError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise PetriNetError("weights are all zero")
    t = net.transitions[transition_index]
    cond = t.condition
    if cond is not None:
        if S.shape[1] != cond.dim:
            raise PetriNetError(f"recorded states have dimension {S.shape[1]}, condition expects {cond.dim}")
        reference = (w / total) @ S
        cond = FiringCondition(cond.projection, cond.comparator, float(np.dot(cond.projection, reference)))
    return net.replace_transition(transition_index, condition=cond, lam=t.lam_initial)


# -- structural edits -----------------------------------------------------


@dataclass(frozen=True)
class AddPlace:
    id: str


@dataclass(frozen=True)
class DropPlace:
    id: str
    marking: tuple[int, ...] | None = None  # current marking, to forbid dropping marked places


@dataclass(frozen=True)
class AddTransition:
    id: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    lam: float = 1.0
    condition: FiringCondition | None = None


@dataclass(frozen=True)
class DropTransition:
    id: str


def mutate_structure(net: AdaptivePetriNet, edit) -> AdaptivePetriNet:
    """Add or drop a place or transition, resizing every component of the net."""
    places = net.place_ids
    ts = list(net.transitions)
    pre, post, m0 = net.pre, net.post, net.initial_marking
    sinks = set(net.sink_places())

    if isinstance(edit, AddPlace):
        if edit.id in places or edit.id in net.transition_ids:
            raise PetriNetError(f"duplicate id {edit.id!r}")
        places = places + [edit.id]
        pre = np.vstack([pre, np.zeros((1, len(ts)), dtype=np.int64)])
        post = np.vstack([post, np.zeros((1, len(ts)), dtype=np.int64)])
        m0 = np.append(m0, 0)
    elif isinstance(edit, DropPlace):
        i = net.place_index(edit.id)
        if edit.id in sinks:
            raise PetriNetError(f"cannot drop terminal place {edit.id!r}")
        current = m0 if edit.marking is None else np.asarray(edit.marking)
        if current[i] > 0:
            raise PetriNetError(f"cannot drop place {edit.id!r} holding tokens")
        keep_t = [j for j in range(len(ts)) if not (pre[i, j] or post[i, j]) or
                  (pre[:, j].sum() - pre[i, j] + post[:, j].sum() - post[i, j]) > 0]
        places = [p for p in places if p != edit.id]
        pre = np.delete(pre, i, axis=0)[:, keep_t]
        post = np.delete(post, i, axis=0)[:, keep_t]
        m0 = np.delete(m0, i)
        ts = [ts[j] for j in keep_t]
    elif isinstance(edit, AddTransition):
        if edit.id in places or edit.id in net.transition_ids:
            raise PetriNetError(f"duplicate id {edit.id!r}")
        col_pre = np.zeros((len(places), 1), dtype=np.int64)
        col_post = np.zeros_like(col_pre)
        for pid in edit.inputs:
            col_pre[net.place_index(pid), 0] = 1
        for pid in edit.outputs:
            col_post[net.place_index(pid), 0] = 1
        pre = np.hstack([pre, col_pre])
        post = np.hstack([post, col_post])
        ts.append(Transition(edit.id, len(ts), edit.lam, edit.lam, edit.condition))
    elif isinstance(edit, DropTransition):
        j = net.transition_index(edit.id)
        pre = np.delete(pre, j, axis=1)
        post = np.delete(post, j, axis=1)
        ts = ts[:j] + ts[j + 1:]
    else:
        raise PetriNetError(f"unknown edit {edit!r}")

    ts = [_replace(t, index=i) for i, t in enumerate(ts)]
    new = AdaptivePetriNet(places, ts, pre, post, m0, net.kappa, net.lambda_floor)
    orphaned = [p for p in sinks if p in new.place_ids and not new.post[new.place_index(p)].any()]
    if orphaned:
        raise PetriNetError(f"edit would orphan terminal place(s) {orphaned}")
    return new


def reachable_markings(net: AdaptivePetriNet, marking=None, limit: int = 100_000) -> set[tuple[int, ...]]:
    """Exhaustive structural reachability (conditions and probabilities ignored)."""
    start = tuple(int(v) for v in (net.initial_marking if marking is None else marking))
    seen = {start}
    queue = deque([start])
    while queue:
        m = np.array(queue.popleft())
        for j in range(len(net.transitions)):
            if (m >= net.pre[:, j]).all():
                nxt = tuple(int(v) for v in m + net.incidence[:, j])
                if nxt not in seen:
                    if len(seen) >= limit:
                        raise PetriNetError("reachability search exceeded its state limit")
                    seen.add(nxt)
                    queue.append(nxt)
    return seen


def place_reachable(net: AdaptivePetriNet, place: str, marking=None) -> bool:
    i = net.place_index(place)
    return any(m[i] > 0 for m in reachable_markings(net, marking))


def fired_ids(net: AdaptivePetriNet, mask: Iterable[bool]) -> list[str]:
    return [net.transitions[j].id for j, f in enumerate(mask) if f]
