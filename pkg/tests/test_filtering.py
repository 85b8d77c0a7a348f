import numpy as np
import pytest

from sepctrl.core import ConfigurationError, Distribution, ImpossibleObservationError
from sepctrl.enumeration import (as_history_strategy, conditional_joint, constant_strategy, enumerate_rollouts,
                                 exact_costs, history_code, decode_history)
from sepctrl.filtering import (actual_history_weights, actual_kernel, exact_belief_factors, factorize,
                               filter_vs_enumeration, initial_information_state, initial_model_belief,
                               joint_kernel, theta_hat_update, theta_update,
                               verify_policy_independence)


def strategies(s):
    return [constant_strategy(s, 0), constant_strategy(s, 1),
            as_history_strategy(s, lambda t, ys, us: ys[-1], "follow"),
            as_history_strategy(s, lambda t, ys, us: 1 - ys[0], "first-inverse"),
            as_history_strategy(s, lambda t, ys, us: (sum(ys) + t) % 2, "parity")]


def test_history_codes_round_trip():
    for code in range(27):
        assert history_code(decode_history(code, 3, 3), 3) == code


def test_initial_state_is_diagonal(toy):
    info = initial_information_state(toy, 1)
    assert np.allclose(info.joint, np.diag(np.diag(info.joint)))
    p = toy.x0_prob * np.array([0.1, 0.9])
    assert np.allclose(np.diag(info.joint), p / p.sum())


def test_joint_kernel_rows_are_distributions(toy):
    K = joint_kernel(toy, 0)
    assert np.allclose(K.sum(axis=(3, 4)), 1.0)


def test_phi_matches_enumeration(toy):
    for g in strategies(toy):
        assert filter_vs_enumeration(toy, g) < 1e-12


def test_policy_independence_on_shared_histories(toy):
    gs = strategies(toy)
    for a in gs:
        for b in gs:
            rep = verify_policy_independence(toy, a, b)
            assert rep.passed
            assert rep.max_discrepancy < 1e-12


def test_impossible_observation(toy):
    s = toy
    noiseless = type(s)(**{**s.__dict__, "z_prob": np.tile([1.0, 0.0], (s.horizon + 1, 1))})
    info = initial_information_state(noiseless, 0)
    assert info.joint[0, 0] == 1.0
    with pytest.raises(ImpossibleObservationError):
        initial_information_state(type(s)(**{**noiseless.__dict__, "x0_prob": np.array([1.0, 0.0])}), 1)


def test_theta_updates_are_normalized(toy):
    b = initial_model_belief(toy, 0)
    b1 = theta_update(toy, 0, b, 1, 1)
    assert b1.mass.sum() == pytest.approx(1.0)
    bh = theta_hat_update(toy, 0, b, 1, 1, actual_kernel(toy, 0))
    assert bh.mass.sum() == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        theta_hat_update(toy, 0, b, 1, 1, None)


def test_history_weights_sum_to_one(toy):
    w, beliefs = actual_history_weights(toy, (1, 0), actual_kernel(toy, 0))
    assert len(w) == toy.ny ** 3
    assert w.mass.sum() == pytest.approx(1.0)
    assert set(beliefs) == {h for h, m in w.items() if m > 0}


def test_factorize_requires_beliefs_for_weighted_histories():
    w = Distribution([(0,), (1,)], [0.5, 0.5])
    with pytest.raises(ConfigurationError):
        factorize(Distribution((0, 1), [1.0, 0.0]), {(0,): Distribution((0, 1), [1.0, 0.0])}, w)


def test_factorize_exact_when_actual_is_independent(decoupled):
    g = constant_strategy(decoupled, 1)
    r = enumerate_rollouts(decoupled, g)
    for t in range(decoupled.horizon + 1):
        for (ys, us), joint in conditional_joint(decoupled, r, t).items():
            f = exact_belief_factors(decoupled, ys, us)
            info = factorize(f.model_belief, f.actual_belief_by_history, f.obs_history_weight, t)
            assert np.abs(info.joint - joint).max() < 1e-12


def test_factorize_is_not_exact_with_shared_primitives(toy):
    # the product form drops the correlation that a common X0 and W induce
    r = enumerate_rollouts(toy, constant_strategy(toy, 0))
    (ys, us), joint = next((k, v) for k, v in conditional_joint(toy, r, 1).items())
    f = exact_belief_factors(toy, ys, us)
    info = factorize(f.model_belief, f.actual_belief_by_history, f.obs_history_weight, 1)
    assert np.abs(info.joint - joint).max() > 0.1


def test_exact_costs_open_loop(toy):
    j, j_hat = exact_costs(toy, constant_strategy(toy, 0))
    # with u = 0 both systems coincide, so no penalty and equal costs
    assert j == pytest.approx(j_hat)
