import math

import numpy as np
import pytest

from sepctrl.core import (ConfigurationError, Distribution, DomainError, InvariantViolation, Gaussian1D, cost,
                          observe, penalized_stage_cost, primitives_from_draws, raw_draws, sample_primitives,
                          step_actual, step_model)


def test_distribution_rejects_bad_mass():
    with pytest.raises(InvariantViolation):
        Distribution((0, 1), [0.5, 0.6])
    with pytest.raises(InvariantViolation):
        Distribution((0, 0), [0.5, 0.5])
    with pytest.raises(InvariantViolation):
        Distribution((0, 1), [1.5, -0.5])


def test_distribution_helpers():
    d = Distribution.point("abc", "b")
    assert d.prob("b") == 1.0 and d.prob("z") == 0.0
    u = Distribution.uniform(range(4))
    assert np.allclose(u.mass, 0.25)
    assert Distribution((0, 1), [0.3, 0.7]) == Distribution((0, 1), [0.3, 0.7])


def test_gaussian_rejects_negative_variance():
    with pytest.raises(Exception):
        Gaussian1D(0.0, -1.0)


def test_finite_steps_follow_tables(toy):
    for x in range(2):
        for u in range(2):
            for w in range(2):
                assert step_model(toy, 0, x, u, w) == x ^ u ^ w
    assert step_actual(toy, 0, 1, 1, 0) == 1
    assert step_model(toy, 0, 1, 1, 0) == 0


def test_step_errors(toy, lqg):
    with pytest.raises(DomainError):
        step_model(toy, 0, 2, 0, 0)
    with pytest.raises(DomainError):
        step_model(toy, toy.horizon, 0, 0, 0)
    with pytest.raises(DomainError):
        step_model(lqg, 0, math.nan, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        step_actual(toy.model_view(), 0, 0, 0, 0)
    with pytest.raises(ConfigurationError):
        step_actual(lqg.model_view(), 0, 0.0, 0.0, 0.0)


def test_linear_step_and_cost(lqg):
    assert step_model(lqg, 0, 1.0, -0.8, 0.2) == pytest.approx(2 * 1.0 + 3 * -0.8 + 4 * 0.2)
    assert step_actual(lqg, 0, 1.0, -0.8, 0.2) == pytest.approx(1.0 - 0.8 + 0.2)
    assert cost(lqg, 1, 3.0, 2.0) == pytest.approx(0.5 * 4.0)
    assert cost(lqg, 2, 2.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        cost(lqg, 2, 1.0, 0.0)
    with pytest.raises(DomainError):
        cost(lqg, 0, 1.0)


def test_penalized_stage_cost_adds_scaled_gap(toy):
    base = cost(toy, 0, 0, 1)
    assert penalized_stage_cost(toy, 0, 0, 1, 1, 0) == pytest.approx(base + toy.beta)
    assert penalized_stage_cost(toy, 0, 0, 1, 1, 1) == pytest.approx(base)


def test_observe_noiseless_linear(lqg):
    assert observe(lqg, 0, 1.25, 0.0) == 1.25


def test_sampling_is_deterministic(toy, lqg):
    for s in (toy, lqg):
        assert sample_primitives(s, [3, 1]) == sample_primitives(s, [3, 1])


def test_finite_sampling_frequencies(toy):
    rng = np.random.default_rng(0)
    x0, w, z = primitives_from_draws(toy, rng.random((200_000, 6)))
    assert abs(x0.mean() - toy.x0_prob[1]) < 0.005
    assert abs(w[:, 0].mean() - toy.w_prob[0][1]) < 0.005
    assert abs(z[:, 2].mean() - toy.z_prob[2][1]) < 0.005


def test_gaussian_sampling_covariance(lqg):
    rng = np.random.default_rng(1)
    x0, w, z = primitives_from_draws(lqg, rng.standard_normal((200_000, 6)))
    c = np.cov(x0, w[:, 0])
    assert c[0, 1] == pytest.approx(lqg.x0_w0_covariance, abs=0.01)
    assert c[1, 1] == pytest.approx(1.0, abs=0.01)
    assert np.all(w[:, 1] == 0.0) and np.all(z == 0.0)


def test_raw_draw_count(toy):
    assert raw_draws(toy, 0).shape == (1 + toy.horizon + toy.horizon + 1,)
