"""Information-state construction and propagation for finite scenarios.

The information state at ``t`` is the joint law of the model state and the
actual state given the model's observations ``y_0..y_t`` and the controls
``u_0..u_{t-1}``.  It is stored as an ``(nx, nx)`` array with the model state
on the first axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    MASS_TOL,
    ConfigurationError,
    Distribution,
    DomainError,
    FiniteScenario,
    ImpossibleObservationError,
    InvariantViolation,
    require_finite,
)
from .enumeration import (
    as_history_strategy,
    conditional_joint,
    enumerate_rollouts,
)


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


def likelihood_matrix(scenario: FiniteScenario, t: int) -> np.ndarray:
    """``L[y, x] = p(Y_t = y | X_t = x)``, marginalizing the sensor noise."""
    s = require_finite(scenario)
    L = np.zeros((s.ny, s.nx))
    for k in range(s.nz):
        np.add.at(L, (s.obs_map[:, k], np.arange(s.nx)), s.z_prob[t][k])
    return L


def observation_likelihood(scenario: FiniteScenario, t: int, y: int, x: int) -> float:
    s = require_finite(scenario)
    if not (0 <= y < s.ny and 0 <= x < s.nx):
        raise DomainError(f"(y, x) = ({y}, {x}) outside the declared spaces")
    return float(likelihood_matrix(s, t)[y, x])


def joint_kernel(scenario: FiniteScenario, t: int) -> np.ndarray:
    """``K[u, x, x_hat, x', x_hat']``: both systems consume the same disturbance."""
    s = require_finite(scenario)
    if s.actual_next is None:
        raise ConfigurationError("the joint kernel needs the actual dynamics")
    nx, nu = s.nx, s.nu
    K = np.zeros((nu, nx, nx, nx, nx))
    u, x, xh = np.meshgrid(np.arange(nu), np.arange(nx), np.arange(nx), indexing="ij")
    for k in range(s.nw):
        np.add.at(K, (u, x, xh, s.model_next[x, u, k], s.actual_next[xh, u, k]), s.w_prob[t][k])
    return K


def joint_transition(scenario: FiniteScenario, t: int, target, source, u: int) -> float:
    """``p(X_{t+1} = x', X_hat_{t+1} = x_hat' | x, x_hat, u)``."""
    s = require_finite(scenario)
    (xn, xhn), (x, xh) = target, source
    for v in (xn, xhn, x, xh):
        if not 0 <= v < s.nx:
            raise DomainError(f"state {v} outside the state space")
    if not 0 <= u < s.nu:
        raise DomainError(f"control {u} outside the control space")
    total = 0.0
    for k in range(s.nw):
        if s.model_next[x, u, k] == xn and s.actual_next[xh, u, k] == xhn:
            total += s.w_prob[t][k]
    return total


def model_kernel(scenario: FiniteScenario, t: int) -> np.ndarray:
    """``P[u, x, x'] = p(X_{t+1} = x' | x, u)`` for the model."""
    return _single_kernel(scenario, scenario.model_next, t)


def actual_kernel(scenario: FiniteScenario, t: int) -> np.ndarray:
    """True actual-system kernel; only verification code should use it."""
    if scenario.actual_next is None:
        raise ConfigurationError("actual dynamics are not available on this scenario view")
    return _single_kernel(scenario, scenario.actual_next, t)


def _single_kernel(s: FiniteScenario, table: np.ndarray, t: int) -> np.ndarray:
    P = np.zeros((s.nu, s.nx, s.nx))
    u, x = np.meshgrid(np.arange(s.nu), np.arange(s.nx), indexing="ij")
    for k in range(s.nw):
        np.add.at(P, (u, x, table[x, u, k]), s.w_prob[t][k])
    return P


# --------------------------------------------------------------------------
# information state
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InformationState:
    t: int
    joint: np.ndarray

    def __post_init__(self):
        joint = np.array(self.joint, dtype=float)
        if joint.ndim != 2 or joint.shape[0] != joint.shape[1]:
            raise InvariantViolation("joint shape", str(joint.shape))
        if np.any(joint < -1e-15) or abs(joint.sum() - 1.0) > MASS_TOL:
            raise InvariantViolation("normalization", f"joint sums to {joint.sum():.12g}")
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)

    @property
    def model_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def actual_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def distribution(self) -> Distribution:
        """Pairs ``(x, x_hat)`` in lexicographic order, model state major."""
        n = self.joint.shape[0]
        return Distribution([(i, j) for i in range(n) for j in range(n)], self.joint.reshape(-1))

    def records(self):
        """``(label, mass)`` rows for the run-log audit format."""
        return [(f"{i}|{j}", m) for (i, j), m in self.distribution().items()]


def initial_information_state(scenario: FiniteScenario, y0: int) -> InformationState:
    """Both systems start from the same ``X_0``, so the joint is diagonal."""
    s = require_finite(scenario)
    post = s.x0_prob * likelihood_matrix(s, 0)[y0]
    total = post.sum()
    if total <= 0:
        raise ImpossibleObservationError(f"y0={y0} has zero probability")
    return InformationState(0, np.diag(post / total))


def phi_update(scenario: FiniteScenario, info: InformationState, y_next: int, u: int) -> InformationState:
    """One Bayes step: predict with the joint kernel, correct on the model coordinate."""
    s = require_finite(scenario)
    t = info.t
    if t >= s.horizon:
        raise DomainError("no transition after the terminal time")
    pred = np.einsum("ab,abcd->cd", info.joint, joint_kernel(s, t)[u])
    post = pred * likelihood_matrix(s, t + 1)[y_next][:, None]
    total = post.sum()
    if total <= 0:
        raise ImpossibleObservationError(f"y={y_next} has zero predictive probability at t={t + 1}")
    return InformationState(t + 1, post / total)


def information_state_along(scenario: FiniteScenario, ys: Sequence[int], us: Sequence[int]) -> InformationState:
    info = initial_information_state(scenario, ys[0])
    for y, u in zip(ys[1:], us):
        info = phi_update(scenario, info, y, u)
    return info


# --------------------------------------------------------------------------
# single-system recursions
# --------------------------------------------------------------------------


def _as_array(belief, nx: int) -> np.ndarray:
    if isinstance(belief, Distribution):
        if belief.support != tuple(range(nx)):
            raise DomainError("belief support must be the state indices 0..nx-1")
        return belief.mass
    arr = np.asarray(belief, dtype=float)
    if arr.shape != (nx,) or abs(arr.sum() - 1.0) > MASS_TOL:
        raise InvariantViolation("normalization", "belief must be a normalized length-nx vector")
    return arr


def _correct(prior: np.ndarray, lik: np.ndarray, what: str) -> Distribution:
    post = prior * lik
    total = post.sum()
    if total <= 0:
        raise ImpossibleObservationError(f"{what} has zero predictive probability")
    return Distribution(range(len(prior)), post / total)


def initial_model_belief(scenario: FiniteScenario, y0: int) -> Distribution:
    s = require_finite(scenario)
    return _correct(s.x0_prob, likelihood_matrix(s, 0)[y0], f"y0={y0}")


initial_actual_belief = initial_model_belief


def theta_update(scenario: FiniteScenario, t: int, model_belief, y_next: int, u: int) -> Distribution:
    """Predict/correct on the model state alone."""
    s = require_finite(scenario)
    prior = _as_array(model_belief, s.nx) @ model_kernel(s, t)[u]
    return _correct(prior, likelihood_matrix(s, t + 1)[y_next], f"y={y_next}")


def theta_hat_update(scenario: FiniteScenario, t: int, actual_belief, y_hat_next: int, u: int,
                     kernel: Optional[np.ndarray]) -> Distribution:
    """Predict/correct on the actual state using a supplied transition kernel.

    ``kernel[u, x_hat, x_hat']`` is typically an estimate; the controller has
    no access to the true actual dynamics.
    """
    s = require_finite(scenario)
    if kernel is None:
        raise ConfigurationError("theta_hat_update needs an actual-system transition kernel")
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (s.nu, s.nx, s.nx):
        raise ConfigurationError(f"kernel shape {kernel.shape} != {(s.nu, s.nx, s.nx)}")
    prior = _as_array(actual_belief, s.nx) @ kernel[u]
    return _correct(prior, likelihood_matrix(s, t + 1)[y_hat_next], f"y_hat={y_hat_next}")


# --------------------------------------------------------------------------
# three-factor decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BeliefFactor:
    """Inputs to :func:`factorize`.

    ``model_belief`` is ``p(x_t | y_{0:t}, u_{0:t-1})``;
    ``actual_belief_by_history`` maps each actual observation history to
    ``p(x_hat_t | y_hat_{0:t}, u_{0:t-1})``; ``obs_history_weight`` is
    ``p(y_hat_{0:t} | u_{0:t-1})`` over those histories.
    """

    model_belief: Distribution
    actual_belief_by_history: Mapping[tuple, Distribution]
    obs_history_weight: Distribution
    t: int = 0


def factorize(model_belief, actual_belief_by_history: Mapping, obs_history_weight: Distribution,
              t: int = 0) -> InformationState:
    """Compose the joint as ``p(x_hat | u-history) * p(x | y-history, u-history)``.

    ``p(x_hat | u-history)`` is the mixture of the per-history actual beliefs
    weighted by ``obs_history_weight``.  Histories with zero weight may be
    absent from ``actual_belief_by_history``.

    The product form is exact only when the actual state is conditionally
    independent of the model state and the model observations given the
    controls.
    """
    mb = model_belief.mass if isinstance(model_belief, Distribution) else np.asarray(model_belief, float)
    nx = mb.shape[0]
    mixture = np.zeros(nx)
    for hist, weight in obs_history_weight.items():
        if weight == 0:
            continue
        if hist not in actual_belief_by_history:
            raise ConfigurationError(f"history {hist!r} has weight {weight} but no actual belief")
        mixture += weight * _as_array(actual_belief_by_history[hist], nx)
    joint = np.outer(mb, mixture)
    return InformationState(t, joint / joint.sum())


def actual_history_weights(scenario: FiniteScenario, us: Sequence[int], kernel: np.ndarray):
    """``p(y_hat_{0:t} | u_{0:t-1})`` with the controls held fixed, plus actual beliefs.

    Returns ``(weights, beliefs)``: a Distribution over every observation history
    of length ``len(us) + 1`` and a mapping from each history with positive
    weight to its filtered actual belief.
    """
    s = require_finite(scenario)
    t = len(us)
    kernel = np.asarray(kernel, dtype=float)
    forward = {(): s.x0_prob}
    for step in range(t + 1):
        L = likelihood_matrix(s, step)
        nxt = {}
        for hist, alpha in forward.items():
            prior = alpha if step == 0 else alpha @ kernel[us[step - 1]]
            for y in range(s.ny):
                nxt[hist + (y,)] = prior * L[y]
        forward = nxt
    histories = sorted(forward)
    masses = np.array([forward[h].sum() for h in histories])
    weights = Distribution(histories, masses / masses.sum())
    beliefs = {h: Distribution(range(s.nx), forward[h] / forward[h].sum())
               for h, m in zip(histories, masses) if m > 0}
    return weights, beliefs


def exact_belief_factors(scenario: FiniteScenario, ys: Sequence[int], us: Sequence[int]) -> BeliefFactor:
    """The three factors computed exactly (uses the true actual kernel)."""
    s = require_finite(scenario)
    mb = initial_model_belief(s, ys[0])
    for t, (y, u) in enumerate(zip(ys[1:], us)):
        mb = theta_update(s, t, mb, y, u)
    if len(us) and len({actual_kernel(s, t).tobytes() for t in range(len(us))}) > 1:
        raise ConfigurationError("time-varying actual kernels are not supported here")
    weights, beliefs = actual_history_weights(s, us, actual_kernel(s, 0))
    return BeliefFactor(mb, beliefs, weights, t=len(us))


# --------------------------------------------------------------------------
# strategy-independence check
# --------------------------------------------------------------------------


@dataclass
class IndependenceReport:
    max_discrepancy: float
    shared_histories: int
    vacuous: bool
    worst_history: Optional[tuple] = None
    per_time: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.vacuous or self.max_discrepancy <= 1e-12


def verify_policy_independence(scenario: FiniteScenario, strategy_a, strategy_b) -> IndependenceReport:
    """Compare ``p(x_t, x_hat_t | history)`` under two strategies by exhaustive enumeration."""
    s = require_finite(scenario)
    ga = as_history_strategy(s, strategy_a)
    gb = as_history_strategy(s, strategy_b)
    ra = enumerate_rollouts(s, ga)
    rb = enumerate_rollouts(s, gb)
    worst, worst_key, shared = 0.0, None, 0
    per_time = {}
    for t in range(s.horizon + 1):
        ca = conditional_joint(s, ra, t)
        cb = conditional_joint(s, rb, t)
        common = ca.keys() & cb.keys()
        shared += len(common)
        dt = 0.0
        for key in common:
            d = float(np.abs(ca[key] - cb[key]).max())
            dt = max(dt, d)
            if worst_key is None or d > worst:
                worst, worst_key = d, (t,) + key
        per_time[t] = dt
    return IndependenceReport(worst, shared, shared == 0, worst_key, per_time)


def filter_vs_enumeration(scenario: FiniteScenario, strategy) -> float:
    """Max deviation between the recursive information state and the direct conditional.

    Checked along every history reachable under ``strategy``.
    """
    s = require_finite(scenario)
    g = as_history_strategy(s, strategy)
    r = enumerate_rollouts(s, g)
    worst = 0.0
    for t in range(s.horizon + 1):
        for (ys, us), direct in conditional_joint(s, r, t).items():
            info = information_state_along(s, ys, us)
            worst = max(worst, float(np.abs(info.joint - direct).max()))
    return worst
