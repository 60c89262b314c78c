"""
Policies from demonstrations
============================

Fit a Gaussian-process policy to the swing phase of the shipped pendulum
demonstrations, then thin the training set with rank-revealing QR and see
what that does to conditioning and per-query cost.
"""

# %%
import numpy as np

from compskill.conditioning import choose_subset_size, condition_number, kernel_stack, select_subset
from compskill.gpr import Hyperparams, TrainingSet, covariance_matrix, fit, predict
from compskill.sim.loop import make_demos

demos = make_demos("pendulum")
for d in demos:
    print(f"{d.demo_id:40s} success={d.success!s:5s} score={d.overall_score:.3f}")

# %%
# Swing-phase samples (transition t1) from the successful demos.
# Sensed columns 0-3 are cos, sin, angular rate and energy.
good = [d.trace for d in demos if d.success]
X = np.concatenate([t.sensed[t.segment_mask("t1")][:, :4] for t in good])
U = np.concatenate([t.controls[t.segment_mask("t1")] for t in good])
keep = np.linspace(0, len(X) - 1, 200).round().astype(int)
train = TrainingSet(X[keep], U[keep])
print(len(X), "swing samples, kept", len(train))

# %%
# Hyperparameters by marginal likelihood when none are given.
full = fit(train)
print("auto theta:", full.theta)

# %%
theta = Hyperparams(2.0, 1.2)
K = kernel_stack(train, theta)
m = choose_subset_size(K, 1e3, min_size=train.state_dim)
print("largest subset with kernel condition <= 1e3:", m)

sub, idx = select_subset(train, 40, theta)
print("kernel condition, all 200:", f"{condition_number(covariance_matrix(train, theta)):.3g}")
print("kernel condition, 40 kept:", f"{condition_number(covariance_matrix(sub, theta)):.3g}")

# %%
# Query cost is one kernel evaluation per kept point.
a, b = fit(train, theta, jitter=1e-6), fit(sub, theta, jitter=1e-6)
q = X[len(X) // 2]
print("full:", predict(a, q), "subset:", predict(b, q), "demo:", U[len(X) // 2])
print("kernel evaluations:", a.kernel_evaluations, b.kernel_evaluations)
