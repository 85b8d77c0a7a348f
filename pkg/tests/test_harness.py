import numpy as np
import pytest

from sepctrl.core import DomainError, FiniteScenario
from sepctrl.enumeration import constant_strategy, exact_costs
from sepctrl.harness import (HistoryController, LinearController, MatchingController, RunLog, monte_carlo_cost,
                             run_log, run_parallel, simulate_batch, cost_transfer_audit)
from sepctrl.learner import ExactBeliefSource, instantiate_strategy
from sepctrl.solver import STATED_SOLUTION, linear_strategy_cost


def test_identical_systems_track_each_other(toy):
    twin = FiniteScenario(**{**toy.__dict__, "actual_next": toy.model_next.copy()})
    ctrl = HistoryController(constant_strategy(twin, 1))
    for i in range(20):
        tr = run_parallel(twin, ctrl, 4, i)
        assert tr.xs == tr.x_hats
        rep = cost_transfer_audit(tr, twin)
        assert rep.zero_penalty and rep.costs_equal


def test_matching_control_zeroes_gaps(lqg):
    ctrl = MatchingController(lqg)
    for i in range(200):
        tr = run_parallel(lqg, ctrl, 0, i)
        assert max(abs(a - b) for a, b in zip(tr.xs, tr.x_hats)) < 1e-9
        rep = cost_transfer_audit(tr)
        assert rep.zero_penalty and rep.costs_equal and rep.holds


def test_mismatched_controller_reports_penalty(lqg):
    tr = run_parallel(lqg, LinearController(**STATED_SOLUTION), 0, 1)
    rep = cost_transfer_audit(tr)
    assert not rep.zero_penalty
    assert rep.holds and "no equality" in rep.claim


def test_shared_primitives(toy, toy_solution):
    ctrl = HistoryController(toy_solution[2])
    tr = run_parallel(toy, ctrl, 9, 3)
    for t in range(toy.horizon + 1):
        assert tr.ys[t] == toy.obs_map[tr.xs[t], tr.zs[t]]
        assert tr.y_hats[t] == toy.obs_map[tr.x_hats[t], tr.zs[t]]
    for t in range(toy.horizon):
        assert tr.xs[t + 1] == toy.model_next[tr.xs[t], tr.us[t], tr.ws[t]]
        assert tr.x_hats[t + 1] == toy.actual_next[tr.x_hats[t], tr.us[t], tr.ws[t]]


def test_seed_determinism(toy, toy_solution):
    ctrl = HistoryController(toy_solution[2])
    assert run_parallel(toy, ctrl, 5, 2) == run_parallel(toy, ctrl, 5, 2)


def test_batch_equals_single_rollouts(toy, lqg, toy_solution):
    cases = [(toy, instantiate_strategy(toy_solution[1], ExactBeliefSource(toy, toy_solution[1].scenario_hash))),
             (lqg, MatchingController(lqg)), (lqg, LinearController(0.2, -0.1, 0.3))]
    for s, ctrl in cases:
        b = simulate_batch(s, ctrl, 30, 8)
        for i in range(30):
            tr = run_parallel(s, ctrl, 8, i)
            assert np.array_equal(b.x[i], tr.xs) and np.array_equal(b.x_hat[i], tr.x_hats)
            assert np.array_equal(b.u[i], tr.us)
            assert b.actual_total[i] == pytest.approx(tr.actual_total, abs=1e-12)
            assert b.penalized_total[i] == pytest.approx(tr.penalized_total, abs=1e-12)


def test_out_of_space_control_is_rejected(toy):
    with pytest.raises(DomainError):
        run_parallel(toy, lambda ctx: 5, 0)


def test_zero_cost_scenario(toy):
    zero = FiniteScenario(**{**toy.__dict__, "stage_cost": np.zeros_like(toy.stage_cost),
                             "terminal_cost": np.zeros_like(toy.terminal_cost), "beta": 0.0})
    est = monte_carlo_cost(zero, HistoryController(constant_strategy(zero, 1)), 100, 0)
    assert (est.j_hat, est.j) == (0.0, 0.0)


def test_monte_carlo_matches_enumeration(toy, toy_solution):
    hs = toy_solution[2]
    j, j_hat = exact_costs(toy, hs)
    est = monte_carlo_cost(toy, HistoryController(hs), 100_000, 2)
    assert abs(est.j_hat - j_hat) < 3 * est.se_j_hat
    assert abs(est.j - j) < 3 * est.se_j


def test_monte_carlo_matches_closed_form(lqg):
    est = monte_carlo_cost(lqg, LinearController(**STATED_SOLUTION), 100_000, 0)
    exact = linear_strategy_cost(lqg, **STATED_SOLUTION)
    assert abs(est.j_hat - exact) < 3 * est.se_j_hat


def test_monte_carlo_rejects_empty_run(toy):
    with pytest.raises(DomainError):
        monte_carlo_cost(toy, HistoryController(constant_strategy(toy, 0)), 0, 0)


def test_slow_path_equals_batch_path(toy):
    g = constant_strategy(toy, 1)
    fast = monte_carlo_cost(toy, HistoryController(g), 200, 3)
    slow = monte_carlo_cost(toy, lambda ctx: g(ctx.t, ctx.ys), 200, 3)
    assert fast.j_hat == pytest.approx(slow.j_hat, abs=1e-12)
    assert fast.j == pytest.approx(slow.j, abs=1e-12)


def test_run_log_round_trip(lqg, tmp_path):
    log = run_log(lqg, LinearController(**STATED_SOLUTION, name="stated"), 25, 1, "hash")
    path = tmp_path / "log.csv"
    log.write(path)
    again, stored = RunLog.read(path)
    assert again.summary() == stored
    assert again.summary() == log.summary()
    assert path.read_text().splitlines()[2] == "rollout,t,x,x_hat,y,y_hat,u,w,z,c_model,c_actual,penalty"
    log.write(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
