import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from compskill.apn import parse_skill_definition
from compskill.evaluation import (
    EvaluationError,
    TrialEvaluation,
    _Regressor,
    demo_weights,
    extract_features,
    learn_criteria,
    locate_problematic,
    score_trial,
)
from compskill.sim.oracles import demonstrate
from compskill.sim.tasks import PendulumTask
from compskill.sim.trace import Demonstration, LabeledDemonstration

NET = parse_skill_definition("""\
place P0
place P1
place P2
place OK
place BAD
transition t0 lambda=1.0
transition t1 lambda=1.0
transition t2 lambda=1.0
transition t3 lambda=1.0
arc P0 -> t0
arc t0 -> P1
arc P1 -> t1
arc t1 -> P2
arc P2 -> t2
arc t2 -> OK
arc P2 -> t3
arc t3 -> BAD
condition t1 proj=1.0,0.0 op=ge thresh=0.5
condition t2 proj=0.0,1.0 op=ge thresh=1.0
condition t3 proj=0.0,1.0 op=le thresh=-1.0
marking P0 1
""")

# regression value: features of the noiseless pendulum demonstration, seed 7
PENDULUM_T1_FEATURES = [7.759, 12.93092608341203, 2.0, 13.21886008717994, 0.18107594760146417]


def _trace(n0, n1, u0=0.0, u1=1.0, stop="t2"):
    """t0 for n0 ticks, t1 for n1 ticks, then a stop transition."""
    n = n0 + n1
    sensed = np.zeros((n, 2))
    sensed[:, 0] = np.linspace(0, 1, n)
    sensed[:, 1] = np.linspace(0, 1.5 if stop == "t2" else -1.5, n)
    controls = np.r_[np.full(n0, u0), np.broadcast_to(u1, (n1,))][:, None]
    active = ["t0"] * n0 + ["t1"] * n1
    fired = [(0, "t0"), (n0, "t1"), (n, stop)]
    return Demonstration(1e-3, sensed, controls, active, fired, sensed[-1] * 1.01, {"terminal": stop})


def _labeled(trace, success, score, **per):
    return LabeledDemonstration(trace, success, score, per)


def _corpus():
    demos = []
    for i in range(10):
        n1 = 100 + 20 * i
        good = i >= 3
        score = (i + 1) / 10
        demos.append(_labeled(_trace(50, n1, stop="t2" if good else "t3"), good, score,
                              t0=1.0, t1=score, **{("t2" if good else "t3"): score}))
    return demos


# -- features -------------------------------------------------------------------


def test_idle_segment_has_zero_control_features():
    f = extract_features(_trace(40, 60, u0=0.0, u1=1.0), NET)
    assert f["t0"][2] == 0.0 and f["t0"][3] == 0.0
    assert f["t0"][0] == pytest.approx(0.04)


def test_time_reversed_segment_features():
    u = np.sin(np.linspace(0, 3, 80))
    a = extract_features(_trace(20, 80, u1=u), NET)["t1"]
    b = extract_features(_trace(20, 80, u1=u[::-1]), NET)["t1"]
    np.testing.assert_allclose(a[[0, 2, 3]], b[[0, 2, 3]], rtol=1e-12)


def test_no_fired_transition_is_error():
    empty = Demonstration(1e-3, np.zeros((3, 2)), np.zeros((3, 1)), ["", "", ""], [], np.zeros(2))
    with pytest.raises(EvaluationError):
        extract_features(empty, NET)


def test_pendulum_oracle_features(pendulum_net):
    demo = demonstrate(PendulumTask(), noise=0.0, seed=7)
    f = extract_features(demo.trace, pendulum_net)
    assert set(f) == set(demo.trace.fired_ids())
    assert all(v.shape == (5,) for v in f.values())
    np.testing.assert_allclose(f["t1"], PENDULUM_T1_FEATURES, rtol=1e-9)
    u = demo.trace.controls[np.array(demo.trace.active) == "t1"]
    assert f["t1"][0] == pytest.approx(len(u) * 1e-3)
    assert f["t1"][2:4] == pytest.approx([np.abs(u).max(), np.abs(u).sum() * 1e-3])


# -- criteria ------------------------------------------------------------------


def test_linear_scores_keep_their_order():
    demos = _corpus()
    crit = learn_criteria(demos, NET)
    per = [crit.per_transition["t1"](extract_features(d.trace, NET)["t1"]) for d in demos]
    assert spearmanr(per, [d.per_transition_scores["t1"] for d in demos]).statistic == pytest.approx(1.0)
    assert spearmanr(crit.training_predictions, [d.overall_score for d in demos]).statistic == pytest.approx(1.0)


def test_tau_separates_training_labels():
    demos = _corpus()
    crit = learn_criteria(demos, NET)
    for d, p in zip(demos, crit.training_predictions):
        assert (p >= crit.tau) == d.success
    succ = np.mean([p for d, p in zip(demos, crit.training_predictions) if d.success])
    fail = np.mean([p for d, p in zip(demos, crit.training_predictions) if not d.success])
    assert succ > fail


def test_identical_demos_give_constant_criteria():
    tr = _trace(30, 70)
    demos = [_labeled(tr, True, 0.9, t0=0.8, t1=0.7, t2=0.9) for _ in range(4)]
    with pytest.warns(UserWarning, match="one label"):
        crit = learn_criteria(demos, NET)
    ev = score_trial(crit, tr, NET)
    assert ev.per_transition == {"t0": 0.8, "t1": 0.7, "t2": 0.9}
    assert ev.overall == pytest.approx(0.9)
    assert ev.problematic == []


def test_single_demo_is_error():
    with pytest.raises(EvaluationError):
        learn_criteria(_corpus()[:1], NET)


# -- scoring -------------------------------------------------------------------


def test_training_trace_scores_near_label():
    demos = _corpus()
    crit = learn_criteria(demos, NET)
    for d in demos:
        ev = score_trial(crit, d.trace, NET)
        assert abs(ev.overall - d.overall_score) <= 0.05
        assert set(ev.per_transition) == set(d.trace.fired_ids())
        assert ev.verdict == (ev.overall >= ev.tau)


def test_scores_are_clamped():
    raw = _Regressor(None, np.zeros(1), np.ones(1), 1.3)
    assert raw(np.zeros(1)) == 1.0
    assert _Regressor(None, np.zeros(1), np.ones(1), -0.2)(np.zeros(1)) == 0.0


def test_scoring_is_deterministic():
    demos = _corpus()
    crit = learn_criteria(demos, NET)
    tr = _trace(45, 133)
    assert score_trial(crit, tr, NET).to_dict() == score_trial(crit, tr, NET).to_dict()


def test_sensed_dimension_skew():
    crit = learn_criteria(_corpus(), NET)
    tr = _trace(30, 70)
    bad = Demonstration(tr.tick, np.c_[tr.sensed, tr.sensed[:, :1]], tr.controls, tr.active, tr.fired,
                        np.r_[tr.final_sensed, 0.0])
    with pytest.raises(EvaluationError):
        score_trial(crit, bad, NET)


# -- problematic transitions ------------------------------------------------------


def _ev(scores, threshold=0.4):
    return TrialEvaluation(0.5, scores, 0.5, [], ["t0", "t1", "t2", "t3"], threshold)


def test_nothing_below_threshold():
    assert locate_problematic(_ev({"t0": 0.4, "t1": 0.9})) == []


def test_one_below_threshold():
    assert locate_problematic(_ev({"t0": 0.8, "t1": 0.1, "t2": 0.7})) == ["t1"]


def test_tied_minima_in_net_order():
    assert locate_problematic(_ev({"t2": 0.2, "t1": 0.6, "t0": 0.2})) == ["t0", "t2"]


@settings(max_examples=50, deadline=None)
@given(scores=st.dictionaries(st.sampled_from(["t0", "t1", "t2", "t3"]), st.floats(0, 1), min_size=1))
def test_problematic_is_subset_of_fired(scores):
    out = locate_problematic(_ev(scores))
    assert set(out) <= set(scores)
    assert (out == []) == (min(scores.values()) >= 0.4)


# -- demonstration weights ----------------------------------------------------------


def _demos_with(scores, flags):
    tr = _trace(10, 10)
    return [_labeled(tr, f, s) for s, f in zip(scores, flags)]


def test_proportional_weights():
    np.testing.assert_allclose(demo_weights(_demos_with([1.0, 0.5], [True, True])), [2 / 3, 1 / 3])


def test_failed_demo_weight_is_zero():
    assert demo_weights(_demos_with([0.7, 0.9], [True, False]))[1] == 0.0


def test_all_zero_successes_is_error():
    with pytest.raises(EvaluationError):
        demo_weights(_demos_with([0.0, 0.0], [True, True]))


@settings(max_examples=50, deadline=None)
@given(
    scores=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12),
    flags=st.lists(st.booleans(), min_size=12, max_size=12),
    scale=st.floats(0.1, 1.0),
)
def test_weights_normalized_and_scale_free(scores, flags, scale):
    flags = flags[: len(scores)]
    flags[0] = True
    w = demo_weights(_demos_with(scores, flags))
    assert (w >= 0).all() and w.sum() == pytest.approx(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        w2 = demo_weights(_demos_with([s * scale for s in scores], flags))
    np.testing.assert_allclose(w, w2, rtol=1e-12)
