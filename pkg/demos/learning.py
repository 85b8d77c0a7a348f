"""
Learning the plant's observation law online
===========================================

The controller cannot see the plant's dynamics, only what it reports.  We
count (control history, plant observation history) pairs and watch the
estimate converge to the exact law.
"""

import numpy as np

from sepctrl.enumeration import conditional_joint, enumerate_rollouts
from sepctrl.learner import (EmpiricalConditional, LearnedBeliefSource, exact_conditional, sample_records,
                             tv_distance)
from sepctrl.scenarios import builtin_decoupled_toy, builtin_discrete_toy
from sepctrl.solver import dp_solve, to_history_strategy

s = builtin_discrete_toy()
hs = to_history_strategy(s, dp_solve(s)[1])
exact = {t: exact_conditional(s, hs, t) for t in range(s.horizon + 1)}
u, yh = sample_records(s, hs, 100_000, seed=0)

print("samples  max TV")
for n in (100, 1_000, 10_000, 100_000):
    emp = EmpiricalConditional(s.ny).record_arrays(u[:n], yh[:n])
    tv = max(tv_distance(emp.query(us), d) for table in exact.values() for us, d in table.items())
    print(f"{n:>7}  {tv:.4f}")

# the learned information state is a product of a model belief and a plant belief;
# that is exact only when the plant state carries no information about the model's
for name, scn in (("toy", s), ("decoupled", builtin_decoupled_toy())):
    g = to_history_strategy(scn, dp_solve(scn)[1])
    uu, yy = sample_records(scn, g, 100_000, seed=1)
    src = LearnedBeliefSource(scn, EmpiricalConditional(scn.ny).record_arrays(uu, yy))
    r = enumerate_rollouts(scn, g)
    worst = max(0.5 * np.abs(src.information_state(t, ys, us).joint - joint).sum()
                for t in range(scn.horizon + 1) for (ys, us), joint in conditional_joint(scn, r, t).items())
    print(f"{name}: worst TV between learned and true joint = {worst:.4f}")
