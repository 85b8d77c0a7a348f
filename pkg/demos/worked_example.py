"""
A two-step linear example with a mismatched plant
=================================================

The model says x' = 2x + 3u + 4w at the first step; the plant actually does
x' = x + u + w.  Matching controls make the model land exactly where the
plant went, so the model's cost becomes the plant's cost.
"""

import numpy as np

from sepctrl.harness import LinearController, MatchingController, monte_carlo_cost, run_parallel
from sepctrl.scenarios import builtin_lqg
from sepctrl.solver import STATED_SOLUTION, lqg_stagewise_solve, matching_fixed_point

s = builtin_lqg()

# one hand-checkable step: x0 = 1, w0 = 0.2
x0, w0 = 1.0, 0.2
u0 = matching_fixed_point(s, 0, x0, w0, lambda u: x0 + u + w0)
print(f"u0 = {u0:.3f}, model x1 = {2 * x0 + 3 * u0 + 4 * w0:.3f}, plant x1 = {x0 + u0 + w0:.3f}")

# ten thousand rollouts: the gap never opens
ctrl = MatchingController(s)
rollouts = (run_parallel(s, ctrl, 0, i) for i in range(10_000))
gaps = [max(abs(a - b) for a, b in zip(tr.xs, tr.x_hats)) for tr in rollouts]
print(f"largest model/plant gap over 10^4 rollouts: {max(gaps):.1e}")

# the stagewise solution against a brute-force search over linear laws
rep = lqg_stagewise_solve(s)
print("\nlaw u0 = a x0, u1 = b x_hat_1 + c x0")
for name, a, b, c, cost in rep.rows():
    est = monte_carlo_cost(s, LinearController(a, b, c), 100_000, 1)
    print(f"  {name:<12} a={a:+.3f} b={b:+.3f} c={c:+.3f}  exact {cost:.4f}  "
          f"MC {est.j_hat:.4f} +/- {est.se_j_hat:.4f}")

# with plain expectations the stagewise conditions hold for every (a, b, c)
print("\nstage 0 condition:", rep.unconditional["stage0_condition"])
print("stage 1 condition:", rep.unconditional["stage1_condition"])
print("stated values", STATED_SOLUTION, "satisfy them:", rep.unconditional["stated_values_satisfy"])
print(rep.discrepancy)

# the cost surface along a, with b and c at the search optimum
from sepctrl.solver import linear_strategy_cost  # noqa: E402

a_grid = np.linspace(-3, 1, 9)
print("\na      cost")
for a, v in zip(a_grid, linear_strategy_cost(s, a_grid, rep.oracle["b"], rep.oracle["c"])):
    print(f"{a:+.1f}  {v:.4f}")
