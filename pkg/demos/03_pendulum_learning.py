"""
Learning the pendulum swing-up
==============================

The full loop: criteria learned from labeled demos, policies fitted from the
weighted corpus, then trials that adjust firing probabilities, conditions and
demonstration weights until the last ten self-evaluated trials mostly succeed.
Takes about half a minute.
"""

# %%
import json

from compskill.apn import load_skill
from compskill.cli import render_report
from compskill.sim.loop import LoopConfig, composite_learning_loop, make_demos

net = load_skill("pendulum")
demos = make_demos("pendulum")
report = composite_learning_loop(LoopConfig(seed=7), demos, net)
print(render_report(json.loads(report.to_json())))

# %%
# Jerk-up demos ask for more torque than the robot has; the loop learns to
# trust them less.
for demo_id, w in sorted(report.demo_weights.items(), key=lambda kv: -kv[1]):
    print(f"{report.demo_variants[demo_id]:15s} {demo_id:40s} {w:.4f}")

# %%
for rec in report.per_trial:
    ev = rec["evaluation"]
    print(rec["index"], rec["terminal"], f"{ev['overall']:.3f}", ev["verdict"], rec["ground_truth_success"])
