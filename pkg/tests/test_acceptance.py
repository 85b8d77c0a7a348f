"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import time

import numpy as np
import pytest

from sepctrl.enumeration import (as_history_strategy, conditional_joint,
                                 constant_strategy, enumerate_rollouts, exact_costs)
from sepctrl.filtering import exact_belief_factors, factorize, filter_vs_enumeration, verify_policy_independence
from sepctrl.harness import LinearController, MatchingController, monte_carlo_cost, run_parallel, cost_transfer_audit
from sepctrl.learner import EmpiricalConditional, exact_conditional, sample_records, tv_distance
from sepctrl.solver import (STATED_SOLUTION, all_history_strategies, dp_solve, exhaustive_oracle, initial_value,
                            linear_strategy_cost, lqg_stagewise_solve, separated_strategy_costs, to_history_strategy)


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    return emit


@pytest.fixture(scope="module")
def matching_rollouts(lqg):
    ctrl = MatchingController(lqg)
    t0 = time.perf_counter()
    trs = [run_parallel(lqg, ctrl, 2024, i) for i in range(10_000)]
    return trs, time.perf_counter() - t0


def test_criterion_1_matching_controls_zero_the_gap(matching_rollouts, report):
    trs, elapsed = matching_rollouts
    gap1 = max(abs(tr.xs[1] - tr.x_hats[1]) for tr in trs)
    gap2 = max(abs(tr.xs[2] - tr.x_hats[2]) for tr in trs)
    ok = gap1 < 1e-9 and gap2 < 1e-9 and elapsed < 10
    report(1, ok, f"10^4 rollouts, max|x1-x_hat1|={gap1:.2e}, max|x2-x_hat2|={gap2:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2a_cost_transfer_on_matching_rollouts(matching_rollouts, report):
    trs, _ = matching_rollouts
    diff = max(abs(tr.model_total - tr.actual_total) for tr in trs)
    audits_hold = all(cost_transfer_audit(tr).holds for tr in trs)
    ok = diff <= 1e-9 and audits_hold
    report("2a", ok, f"max |model total - actual total| over 10^4 rollouts = {diff:.2e}")
    assert ok


def test_criterion_2b_toy_actual_cost_equals_v0(toy, toy_solution, report):
    vf, _, hs = toy_solution
    v0 = initial_value(toy, vf)
    j, j_hat = exact_costs(toy, hs)
    # supporting facts, printed for the record
    strong = toy.with_beta(1.0)
    vf1, st1 = dp_solve(strong)
    j1, jh1 = exact_costs(strong, to_history_strategy(strong, st1))
    v01 = initial_value(strong, vf1)
    ok = abs(j_hat - v0) <= 1e-12
    report("2b", ok, f"toy beta={toy.beta}: actual cost {j_hat:.12g} vs V0 {v0:.12g} (gap {j_hat - v0:.4g}); "
                     f"penalized cost J={j:.12g} (|J-V0|={abs(j - v0):.1e}); "
                     f"at beta=1 the optimum has zero penalty and actual cost {jh1:.12g} vs V0 {v01:.12g}")
    assert abs(j - v0) <= 1e-12
    assert abs(jh1 - v01) <= 1e-12
    assert ok, "the solved strategy incurs discrepancy penalties at this beta, so its actual cost differs from V0"


def test_criterion_3_policy_independence(toy, report):
    t0 = time.perf_counter()
    gs = [constant_strategy(toy, 0), constant_strategy(toy, 1),
          as_history_strategy(toy, lambda t, ys, us: ys[-1], "follow"),
          as_history_strategy(toy, lambda t, ys, us: 1 - ys[-1], "invert"),
          as_history_strategy(toy, lambda t, ys, us: (sum(ys) + t) % 2, "parity")]
    pairs = [(a, b) for i, a in enumerate(gs) for b in gs[i + 1:]]
    reps = [verify_policy_independence(toy, a, b) for a, b in pairs]
    worst = max(r.max_discrepancy for r in reps)
    shared = min(r.shared_histories for r in reps)
    filt = max(filter_vs_enumeration(toy, g) for g in all_history_strategies(toy))
    elapsed = time.perf_counter() - t0
    ok = len(pairs) >= 4 and worst <= 1e-12 and shared > 0 and filt <= 1e-12 and elapsed < 60
    report(3, ok, f"{len(pairs)} strategy pairs, max discrepancy {worst:.1e}; "
                  f"filter vs enumeration over all strategies {filt:.1e}; {elapsed:.1f}s")
    assert ok


def test_criterion_4_dp_is_optimal(toy, toy_solution, report):
    v0 = initial_value(toy, toy_solution[0])
    best, _ = exhaustive_oracle(toy)
    costs = separated_strategy_costs(toy)
    ok = abs(v0 - best) <= 1e-12 and v0 <= min(costs) + 1e-12
    report(4, ok, f"V0={v0:.12g}, oracle={best:.12g}, min over {len(costs)} separated strategies={min(costs):.12g}")
    assert ok


def test_criterion_5_product_factorization(toy, report):
    worst, where, count = 0.0, None, 0
    for g in all_history_strategies(toy):
        r = enumerate_rollouts(toy, g)
        for t in range(toy.horizon + 1):
            for (ys, us), joint in conditional_joint(toy, r, t).items():
                f = exact_belief_factors(toy, ys, us)
                info = factorize(f.model_belief, f.actual_belief_by_history, f.obs_history_weight, t)
                err = float(np.abs(info.joint - joint).max())
                count += 1
                if err > worst:
                    worst, where = err, (ys, us)
    ok = worst <= 1e-12
    report(5, ok, f"max |factorized - enumerated| = {worst:.4g} over {count} history checks, worst at y={where[0]} "
                  f"u={where[1]}; the product form needs x_hat independent of (x, y) given u, which a shared "
                  f"X0 and W rule out")
    assert ok


def test_criterion_6_learner_consistency(toy, toy_solution, report):
    hs = toy_solution[2]
    exact = {t: exact_conditional(toy, hs, t) for t in range(toy.horizon + 1)}
    t0 = time.perf_counter()
    tvs = []
    for seed in range(20):
        u, yh = sample_records(toy, hs, 100_000, seed)
        emp = EmpiricalConditional(toy.ny).record_arrays(u, yh)
        tvs.append(max(tv_distance(emp.query(us), d) for table in exact.values() for us, d in table.items()))
    elapsed = time.perf_counter() - t0
    violations = sum(v >= 0.02 for v in tvs)
    ok = violations <= 1 and elapsed < 120
    report(6, ok, f"20 seeds x 10^5 rollouts, max TV {max(tvs):.4f} (median {np.median(tvs):.4f}), "
                  f"{violations} violations, {elapsed:.1f}s")
    assert ok


def test_criterion_7_dual_report(lqg, report):
    rep = lqg_stagewise_solve(lqg)
    rows = []
    ok = True
    for name, coef in [("stated", STATED_SOLUTION), ("conditional", rep.conditional), ("oracle", rep.oracle)]:
        a, b, c = coef["a"], coef["b"], coef["c"]
        exact = float(linear_strategy_cost(lqg, a, b, c))
        est = monte_carlo_cost(lqg, LinearController(a, b, c), 100_000, 7)
        within = abs(est.j_hat - exact) <= 3 * est.se_j_hat
        ok &= within
        rows.append(f"{name}: a={a:+.4f} b={b:+.4f} c={c:+.4f} exact={exact:.6f} "
                    f"MC={est.j_hat:.6f}+/-{est.se_j_hat:.6f}{'' if within else ' (outside 3 SE)'}")
    unc = rep.unconditional
    ok &= bool(rep.discrepancy) and unc["stated_values_satisfy"]
    report(7, ok, "; ".join(rows) + f". Stagewise conditions with unconditional expectations: "
                  f"'{unc['stage0_condition']}', '{unc['stage1_condition']}' (stated values satisfy them, "
                  f"determined={unc['determined']}). {rep.discrepancy}")
    assert ok
