import numpy as np
import pytest

from sepctrl.core import Distribution, DomainError, InsufficientDataError, ScenarioMismatchError
from sepctrl.enumeration import conditional_joint, constant_strategy, enumerate_rollouts
from sepctrl.filtering import exact_belief_factors, factorize
from sepctrl.learner import (EmpiricalConditional, ExactBeliefSource, LearnedBeliefSource,
                             LearnedInformationState, exact_conditional, instantiate_strategy,
                             learned_information_state, sample_records, tv_distance)
from sepctrl.solver import dp_solve, simplex_grid, to_history_strategy


def test_single_record_is_a_point_mass():
    emp = EmpiricalConditional(2).record_transition((1,), (0, 1))
    q = emp.query((1,))
    assert q.prob((0, 1)) == 1.0
    assert len(q) == 4


def test_repeated_records_leave_the_query_unchanged():
    one = EmpiricalConditional(2).record_transition((), (1,)).query(())
    many = EmpiricalConditional(2)
    for _ in range(50):
        many.record_transition((), (1,))
    assert many.query(()) == one


def test_length_mismatch_is_rejected():
    with pytest.raises(DomainError):
        EmpiricalConditional(2).record_transition((0, 1), (0, 1))


def test_unseen_history_needs_smoothing():
    emp = EmpiricalConditional(2)
    with pytest.raises(InsufficientDataError):
        emp.query((0,))
    smooth = EmpiricalConditional(2, alpha=1.0)
    assert np.allclose(smooth.query((0,)).mass, 0.25)


def test_smoothed_query_sums_to_one():
    emp = EmpiricalConditional(3, alpha=0.5)
    for ys in [(0, 1), (0, 1), (2, 2)]:
        emp.record_transition((1,), ys)
    assert emp.query((1,)).mass.sum() == pytest.approx(1.0, abs=1e-9)


def test_bulk_record_matches_single_records(toy, toy_solution):
    hs = toy_solution[2]
    u, yh = sample_records(toy, hs, 500, 3)
    bulk = EmpiricalConditional(toy.ny).record_arrays(u, yh)
    single = EmpiricalConditional(toy.ny)
    for r in range(u.shape[0]):
        for t in range(toy.horizon + 1):
            single.record_transition(u[r, :t], yh[r, : t + 1])
    assert bulk == single


def test_sidecar_round_trip(toy, toy_solution, tmp_path):
    u, yh = sample_records(toy, toy_solution[2], 300, 0)
    emp = EmpiricalConditional(toy.ny, alpha=0.5).record_arrays(u, yh)
    path = tmp_path / "counts.csv"
    emp.write_sidecar(path, {"scenario": "abc"})
    assert EmpiricalConditional.read_sidecar(path) == emp


def test_merge_equals_joint_recording(toy, toy_solution):
    u, yh = sample_records(toy, toy_solution[2], 400, 1)
    a = EmpiricalConditional(toy.ny).record_arrays(u[:150], yh[:150])
    b = EmpiricalConditional(toy.ny).record_arrays(u[150:], yh[150:])
    assert a.merge(b) == EmpiricalConditional(toy.ny).record_arrays(u, yh)


def test_tv_distance_values():
    p = Distribution((0, 1), [0.5, 0.5])
    assert tv_distance(p, p) == 0.0
    assert tv_distance(Distribution.point((0, 1), 0), Distribution.point((0, 1), 1)) == 1.0
    assert tv_distance(p, Distribution((0, 1), [0.9, 0.1])) == pytest.approx(0.4)
    with pytest.raises(DomainError):
        tv_distance(p, Distribution((0, 2), [0.5, 0.5]))


def test_empirical_conditional_converges(toy, toy_solution):
    hs = toy_solution[2]
    u, yh = sample_records(toy, hs, 100_000, 7)
    emp = EmpiricalConditional(toy.ny).record_arrays(u, yh)
    for t in range(toy.horizon + 1):
        for us, dist in exact_conditional(toy, hs, t).items():
            assert tv_distance(emp.query(us), dist) < 0.02


def test_exact_weights_reproduce_factorize(toy):
    ys, us = (0, 1), (1,)
    f = exact_belief_factors(toy, ys, us)

    class Exact(EmpiricalConditional):
        def query(self, u_history):
            return f.obs_history_weight

    learned = learned_information_state(Exact(toy.ny), f.model_belief, f.actual_belief_by_history, us, "h")
    direct = factorize(f.model_belief, f.actual_belief_by_history, f.obs_history_weight, t=1)
    assert np.array_equal(learned.joint, direct.joint)
    assert learned.scenario_hash == "h"


def test_learned_state_close_to_true_joint(decoupled):
    vf, strategy = dp_solve(decoupled)
    hs = to_history_strategy(decoupled, strategy)
    u, yh = sample_records(decoupled, hs, 100_000, 0)
    src = LearnedBeliefSource(decoupled, EmpiricalConditional(decoupled.ny).record_arrays(u, yh))
    r = enumerate_rollouts(decoupled, hs)
    for t in range(decoupled.horizon + 1):
        for (ys, us), joint in conditional_joint(decoupled, r, t).items():
            info = src.information_state(t, ys, us)
            assert 0.5 * np.abs(info.joint - joint).sum() < 0.03
            assert info.samples > 0


def test_learned_state_unseen_history(toy):
    src = LearnedBeliefSource(toy, EmpiricalConditional(toy.ny))
    with pytest.raises(InsufficientDataError):
        src.information_state(1, (0, 0), (1,))


def test_point_mass_selects_the_strategy_entry(toy):
    grid = simplex_grid(toy, 0.4)
    _, strategy = dp_solve(toy, grid)
    ctrl = instantiate_strategy(strategy, ExactBeliefSource(toy, strategy.scenario_hash))
    for x in range(2):
        for xh in range(2):
            joint = np.zeros((2, 2))
            joint[x, xh] = 1.0
            g = grid.project(0, joint[None])[0]
            info = LearnedInformationState(0, joint, samples=1, scenario_hash=strategy.scenario_hash)
            assert ctrl.act(0, info) == strategy.controls[0][g, xh]


def test_hash_mismatch_is_rejected(toy, toy_solution):
    strategy = toy_solution[1]
    with pytest.raises(ScenarioMismatchError):
        instantiate_strategy(strategy, ExactBeliefSource(toy, "0000000000000000"))


def test_exact_conditional_is_normalized(toy):
    for t in range(toy.horizon + 1):
        for dist in exact_conditional(toy, constant_strategy(toy, 1), t).values():
            assert dist.mass.sum() == pytest.approx(1.0)
