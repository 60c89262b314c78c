"""Learning from evaluation: scoring criteria learned from labeled demonstrations.

Every fired transition of a trace is summarized by five numbers:

    duration, |terminal state|, peak |u|, integral of |u|, |g . x_T - b|

where ``x_T`` is the sensed state where the transition's segment ends and
``g . x >= b`` is its firing condition. One GP regressor per transition maps
these features to the mentor's per-transition score. The overall regressor
maps the vector of per-transition predictions (-1 for transitions that did not
fire) to the overall score, and the success threshold is placed midway
between the weakest success and the strongest failure on the training demos.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .apn import AdaptivePetriNet
from .gpr import GprError, GprModel, Hyperparams, TrainingSet, cross_covariance, fit, predict
from .sim.trace import Demonstration, LabeledDemonstration

__all__ = [
    "EvaluationError",
    "FEATURE_NAMES",
    "ScoringCriteria",
    "TrialEvaluation",
    "extract_features",
    "learn_criteria",
    "append_labels",
    "score_trial",
    "locate_problematic",
    "demo_weights",
]

FEATURE_NAMES = ("duration", "terminal_norm", "peak_control", "control_integral", "condition_gap")
PROBLEM_THRESHOLD = 0.4
SCORE_JITTER = 1e-2
# overall-regressor input for a transition that did not fire; kept apart from
# a genuine score of 0 so that which stop transition fired stays visible
NOT_FIRED = -1.0
# the overall map is kept smooth and close to linear; a marginal-likelihood fit
# on a dozen demos interpolates too tightly and reverts to the mean on trials
OVERALL_LENGTH = 3.0


class EvaluationError(ValueError):
    pass


def _segment_end(trace: Demonstration, tid: str) -> tuple[np.ndarray, np.ndarray]:
    """Mask of ticks driven by ``tid`` and the sensed state where that stretch ends."""
    mask = trace.segment_mask(tid)
    idx = np.flatnonzero(mask)
    if idx.size:
        end = trace.sensed_at(int(idx[-1]) + 1)
    else:
        k = max(t for t, i in trace.fired if i == tid)
        end = trace.sensed_at(k)
    return mask, end


def extract_features(trace: Demonstration, net: AdaptivePetriNet, state_dims=None) -> dict[str, np.ndarray]:
    """Per fired transition, the 5-entry feature vector (see module docstring).

    ``state_dims`` picks the sensed channels entering the terminal-state norm
    (all channels by default).
    """
    if not trace.fired:
        raise EvaluationError("trace has no fired transitions")
    out = {}
    for tid in trace.fired_ids():
        t = net.transition(tid)
        mask, end = _segment_end(trace, tid)
        u = trace.controls[mask]
        dur = float(mask.sum()) * trace.tick
        peak = float(np.abs(u).max()) if u.size else 0.0
        integral = float(np.abs(u).sum()) * trace.tick
        x = end if state_dims is None else end[np.asarray(state_dims)]
        gap = abs(t.condition.value(end) - t.condition.threshold) if t.condition is not None else 0.0
        out[tid] = np.array([dur, float(np.linalg.norm(x)), peak, integral, gap])
    return out


@dataclass
class _Regressor:
    """GP over standardized features; predictions clamped to [0, 1].

    With ``zero_prior`` the GP reverts to 0 rather than to the label mean
    away from the data, so an unfamiliar outcome scores as a failure.
    """

    model: GprModel | None
    shift: np.ndarray
    scale: np.ndarray
    constant: float
    zero_prior: bool = False
    alpha0: np.ndarray | None = None

    def __call__(self, z) -> float:
        if self.model is None:
            v = self.constant
        else:
            q = (np.asarray(z, dtype=float) - self.shift) / self.scale
            if self.zero_prior:
                v = float(np.ravel(cross_covariance(q, self.model.training, self.model.theta) @ self.alpha0)[0])
            else:
                v = float(predict(self.model, q)[0])
        return min(max(v, 0.0), 1.0)


def _fit_regressor(Z: np.ndarray, y: np.ndarray, jitter: float, length: float | None = None,
                   zero_prior: bool = False) -> _Regressor:
    shift = Z.mean(axis=0)
    scale = Z.std(axis=0)
    scale[scale == 0] = 1.0
    if len(y) == 1 or np.ptp(y) == 0:
        return _Regressor(None, shift, scale, float(y.mean()))
    tr = TrainingSet((Z - shift) / scale, y)
    if length is not None:
        theta = Hyperparams(float(np.sqrt(np.mean(y**2))) if zero_prior else float(y.std()), length)
    else:
        theta = None if len(y) >= 3 else Hyperparams(float(y.std()) or 1.0, 1.0)
    try:
        model = fit(tr, theta, jitter=jitter)
    except GprError:
        return _Regressor(None, shift, scale, float(y.mean()))
    alpha0 = linalg.cho_solve(model.factor, y.reshape(-1, 1)) if zero_prior else None
    return _Regressor(model, shift, scale, float(y.mean()), zero_prior, alpha0)


@dataclass
class ScoringCriteria:
    transition_ids: list[str]
    sensed_dim: int
    state_dims: tuple[int, ...] | None
    per_transition: dict[str, _Regressor]
    overall: _Regressor
    tau: float
    problem_threshold: float = PROBLEM_THRESHOLD
    jitter: float = SCORE_JITTER
    training: list[LabeledDemonstration] = field(default_factory=list, repr=False)
    training_predictions: list[float] = field(default_factory=list)

    def transition_scores(self, features: dict[str, np.ndarray]) -> dict[str, float]:
        # a transition never seen in the demonstrations has no evidence in its favour
        return {tid: (self.per_transition[tid](z) if tid in self.per_transition else 0.0)
                for tid, z in features.items()}

    def overall_input(self, scores: dict[str, float]) -> np.ndarray:
        return np.array([scores.get(tid, NOT_FIRED) for tid in self.transition_ids])


@dataclass
class TrialEvaluation:
    overall: float
    per_transition: dict[str, float]
    tau: float
    problematic: list[str]
    order: list[str] = field(default_factory=list, repr=False)
    problem_threshold: float = PROBLEM_THRESHOLD

    @property
    def verdict(self) -> bool:
        return self.overall >= self.tau

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "verdict": "success" if self.verdict else "failure",
            "tau": self.tau,
            "per_transition": dict(self.per_transition),
            "problematic": list(self.problematic),
        }


def learn_criteria(demos: list[LabeledDemonstration], net: AdaptivePetriNet, state_dims=None,
                   problem_threshold: float = PROBLEM_THRESHOLD, jitter: float = SCORE_JITTER) -> ScoringCriteria:
    """Fit per-transition and overall score regressors and calibrate the success threshold.

    Raises
    ------
    EvaluationError
        With fewer than two demonstrations.
    """
    if len(demos) < 2:
        raise EvaluationError(f"need at least 2 labeled demonstrations, got {len(demos)}")
    feats = [extract_features(d.trace, net, state_dims) for d in demos]
    per = {}
    for t in net.transitions:
        rows = [(f[t.id], d.per_transition_scores[t.id])
                for f, d in zip(feats, demos) if t.id in d.per_transition_scores and t.id in f]
        if rows:
            Z = np.array([r[0] for r in rows])
            y = np.array([r[1] for r in rows], dtype=float)
            per[t.id] = _fit_regressor(Z, y, jitter)
    ids = net.transition_ids
    crit = ScoringCriteria(ids, int(demos[0].trace.sensed.shape[1] if len(demos[0].trace) else
                                    len(demos[0].trace.final_sensed)),
                           None if state_dims is None else tuple(int(i) for i in state_dims),
                           per, None, 0.5, problem_threshold, jitter, list(demos))
    O = np.array([crit.overall_input(crit.transition_scores(f)) for f in feats])
    y = np.array([d.overall_score for d in demos], dtype=float)
    crit.overall = _fit_regressor(O, y, jitter, OVERALL_LENGTH, zero_prior=True)
    pred = [crit.overall(o) for o in O]
    crit.training_predictions = pred
    succ = [p for p, d in zip(pred, demos) if d.success]
    fail = [p for p, d in zip(pred, demos) if not d.success]
    if succ and fail:
        crit.tau = 0.5 * (min(succ) + max(fail))
    else:
        warnings.warn("all demonstrations share one label; success threshold falls back to 0.5", stacklevel=2)
        crit.tau = 0.5
    return crit


def append_labels(criteria: ScoringCriteria, demos: list[LabeledDemonstration], net: AdaptivePetriNet) -> ScoringCriteria:
    """Refit with extra labeled traces (optional additional human evaluations)."""
    return learn_criteria(criteria.training + list(demos), net, criteria.state_dims,
                          criteria.problem_threshold, criteria.jitter)


def score_trial(criteria: ScoringCriteria, trace: Demonstration, net: AdaptivePetriNet) -> TrialEvaluation:
    """Self-evaluate a trial with learned criteria.

    Raises
    ------
    EvaluationError
        When the net or the trace's sensed vector does not match the criteria.
    """
    if net.transition_ids != criteria.transition_ids:
        raise EvaluationError("criteria were learned for a net with different transitions")
    d = trace.sensed.shape[1] if len(trace) else len(trace.final_sensed)
    if d != criteria.sensed_dim:
        raise EvaluationError(f"trace has {d} sensed channels, criteria expect {criteria.sensed_dim}")
    scores = criteria.transition_scores(extract_features(trace, net, criteria.state_dims))
    overall = criteria.overall(criteria.overall_input(scores))
    ev = TrialEvaluation(overall, scores, criteria.tau, [], list(net.transition_ids), criteria.problem_threshold)
    ev.problematic = locate_problematic(ev)
    return ev


def locate_problematic(evaluation: TrialEvaluation, threshold: float | None = None) -> list[str]:
    """Fired transitions scoring below the problem threshold, in net order."""
    thr = evaluation.problem_threshold if threshold is None else threshold
    order = evaluation.order or sorted(evaluation.per_transition)
    rank = {tid: i for i, tid in enumerate(order)}
    low = [tid for tid, s in evaluation.per_transition.items() if s < thr]
    return sorted(low, key=lambda t: rank.get(t, len(rank)))


def demo_weights(demos: list[LabeledDemonstration]) -> np.ndarray:
    """Regression weight per demonstration: failures 0, successes proportional to score."""
    if not demos:
        raise EvaluationError("no demonstrations")
    s = np.array([d.overall_score if d.success else 0.0 for d in demos], dtype=float)
    total = s.sum()
    if total <= 0:
        raise EvaluationError("no successful demonstration with a positive score")
    return s / total
