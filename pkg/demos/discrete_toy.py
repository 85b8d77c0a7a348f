"""
Dynamic programming on the joint information state
===================================================

Two binary systems share their initial state, disturbance and sensor noise.
The plant differs from the model in one transition.  We solve over the joint
belief of (model state, plant state) and check the answer against brute force.
"""

import time

from sepctrl.enumeration import exact_costs
from sepctrl.scenarios import builtin_discrete_toy
from sepctrl.solver import (dp_solve, exhaustive_oracle, initial_value, simplex_grid, strategy_count,
                            to_history_strategy)

s = builtin_discrete_toy()

# exact solution over reachable beliefs
vf, strategy = dp_solve(s)
v0 = initial_value(s, vf)
best, _ = exhaustive_oracle(s)
print(f"V0 = {v0:.6f}; best of {strategy_count(s)} history strategies = {best:.6f}")

# what the solved strategy does on the model and on the plant
hs = to_history_strategy(s, strategy)
j, j_hat = exact_costs(s, hs)
print(f"penalized model cost {j:.4f}, plant cost {j_hat:.4f}")

# raising the penalty weight pushes the strategy toward controls that keep the systems together
print("\nbeta   V0      plant cost")
for beta in (0.0, 0.25, 0.5, 1.0, 2.0):
    sb = s.with_beta(beta)
    vfb, stb = dp_solve(sb)
    print(f"{beta:<5}  {initial_value(sb, vfb):.4f}  {exact_costs(sb, to_history_strategy(sb, stb))[1]:.4f}")

# a uniform simplex grid with interpolation approaches V0 from below
print("\ndelta  points  V0 error   seconds")
for delta in (0.8, 0.4, 0.2, 0.1):
    t0 = time.perf_counter()
    grid = simplex_grid(s, delta)
    err = initial_value(s, dp_solve(s, grid)[0]) - v0
    print(f"{delta:<5}  {grid.size(0):>6}  {err:+.2e}  {time.perf_counter() - t0:.2f}")
