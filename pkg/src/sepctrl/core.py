"""Problem instances, primitive sampling and single-step evaluation.

Two scenario families are supported:

* :class:`FiniteScenario` -- every space is a finite set and every law is a
  table.  Controls, observations, disturbances and noises are referred to by
  integer index; states are referred to by index as well, but each state
  carries a numeric value used by the squared discrepancy penalty.
* :class:`LinearGaussianScenario` -- scalar states and controls with affine
  dynamics, Gaussian primitives and quadratic costs.

The model dynamics and the actual dynamics share the same state, control and
observation spaces and are driven by the *same* disturbance and noise
realizations.  The actual dynamics are only ever evaluated by the harness;
:meth:`FiniteScenario.model_view` / :meth:`LinearGaussianScenario.model_view`
strip them for code that must not see them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

MASS_TOL = 1e-9


# --------------------------------------------------------------------------
# errors
# --------------------------------------------------------------------------


class SepCtrlError(Exception):
    """Base class; ``exit_code`` is what the command line returns."""

    exit_code = 1


class DomainError(SepCtrlError, ValueError):
    """An argument lies outside the declared space."""

    exit_code = 2


class ConfigurationError(SepCtrlError):
    exit_code = 2


class UnsupportedRepresentationError(SepCtrlError):
    """The operation needs a finite-support scenario."""

    exit_code = 2


class ImpossibleObservationError(SepCtrlError):
    """An observation has zero predictive probability."""

    exit_code = 4


class ResolutionError(SepCtrlError):
    """A belief is further than the grid resolution from every grid point."""

    exit_code = 4


class InsufficientDataError(SepCtrlError):
    exit_code = 5


class TooLargeError(SepCtrlError):
    """Instance too large to enumerate exhaustively."""

    exit_code = 2


class NonInvertibleError(SepCtrlError):
    exit_code = 2


class ScenarioMismatchError(SepCtrlError):
    exit_code = 2


class InvariantViolation(SepCtrlError, ValueError):
    """A scenario invariant is violated; ``invariant`` names it."""

    exit_code = 3

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability mass over an ordered list of unique labels."""

    support: tuple
    mass: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        mass = _frozen(self.mass)
        if mass.ndim != 1 or mass.shape[0] != len(support):
            raise InvariantViolation("alignment", "support and mass lengths differ")
        if len(set(support)) != len(support):
            raise InvariantViolation("unique support")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise InvariantViolation("nonnegative mass")
        if abs(mass.sum() - 1.0) > MASS_TOL:
            raise InvariantViolation("normalization", f"mass sums to {mass.sum():.12g}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def point(cls, support: Sequence, label) -> "Distribution":
        support = tuple(support)
        mass = np.zeros(len(support))
        mass[support.index(label)] = 1.0
        return cls(support, mass)

    @classmethod
    def uniform(cls, support: Sequence) -> "Distribution":
        support = tuple(support)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    def prob(self, label) -> float:
        try:
            return float(self.mass[self.support.index(label)])
        except ValueError:
            return 0.0

    def items(self):
        return zip(self.support, self.mass.tolist())

    def __len__(self):
        return len(self.support)

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.support == other.support and np.array_equal(self.mass, other.mass)

    def __repr__(self):
        body = ", ".join(f"{s!r}: {m:.6g}" for s, m in self.items())
        return f"Distribution({{{body}}})"


@dataclass(frozen=True)
class Gaussian1D:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise InvariantViolation("nonnegative variance", repr(self.variance))


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteScenario:
    """Finite-support problem instance.

    Parameters
    ----------
    horizon : int
        Number of decision steps ``T``; states exist for ``t = 0..T``.
    state_values : sequence of float
        Numeric value of each state; the penalty uses ``|value(x) - value(x_hat)|**2``.
    model_next, actual_next : int array, shape (nx, nu, nw)
        Next-state index tables for the model and the actual system.
    obs_map : int array, shape (nx, nz)
        Observation index produced by state ``x`` under noise ``z``.
    x0_prob : array, shape (nx,)
        Law of the shared initial state.
    w_prob : array, shape (T, nw)
    z_prob : array, shape (T + 1, nz)
        One noise draw per observation time ``t = 0..T``.
    stage_cost : array, shape (T, nx, nu)
    terminal_cost : array, shape (nx,)
    beta : float
        Weight of the squared model/actual discrepancy.
    """

    horizon: int
    state_values: np.ndarray
    model_next: np.ndarray
    actual_next: Optional[np.ndarray]
    obs_map: np.ndarray
    x0_prob: np.ndarray
    w_prob: np.ndarray
    z_prob: np.ndarray
    stage_cost: np.ndarray
    terminal_cost: np.ndarray
    beta: float = 1.0
    n_obs: int = 0
    state_labels: tuple = ()
    control_labels: tuple = ()
    observation_labels: tuple = ()
    disturbance_labels: tuple = ()
    noise_labels: tuple = ()
    name: str = "finite"

    family = "finite"

    def __post_init__(self):
        T = int(self.horizon)
        if T < 1:
            raise InvariantViolation("horizon", "horizon must be >= 1")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvariantViolation("beta", "beta must be a nonnegative real")
        sv = _frozen(self.state_values)
        mn = _frozen(self.model_next, int)
        if mn.ndim != 3:
            raise InvariantViolation("model table shape", str(mn.shape))
        nx, nu, nw = mn.shape
        an = None
        if self.actual_next is not None:
            an = _frozen(self.actual_next, int)
            if an.shape != mn.shape:
                raise InvariantViolation("shared spaces", "actual table shape differs from model table")
        om = _frozen(self.obs_map, int)
        nz = om.shape[1]
        n_obs = int(self.n_obs) or int(om.max()) + 1
        x0 = _frozen(self.x0_prob)
        wp = _frozen(np.broadcast_to(self.w_prob, (T, nw)))
        zp = _frozen(np.broadcast_to(self.z_prob, (T + 1, nz)))
        sc = _frozen(np.broadcast_to(self.stage_cost, (T, nx, nu)))
        tc = _frozen(self.terminal_cost)
        if sv.shape != (nx,) or x0.shape != (nx,) or om.shape[0] != nx or tc.shape != (nx,):
            raise InvariantViolation("shared spaces", "state dimension mismatch")
        for table, name in ((mn, "model"), (an, "actual")):
            if table is not None and (table.min() < 0 or table.max() >= nx):
                raise InvariantViolation("total dynamics", f"{name} table leaves the state space")
        if om.min() < 0 or om.max() >= n_obs:
            raise InvariantViolation("total observation map")
        for p, name in ((x0, "x0"), (wp, "w"), (zp, "z")):
            if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > MASS_TOL):
                raise InvariantViolation("normalization", f"{name} masses must sum to 1")
        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "n_obs", n_obs)
        for attr, val in (("state_values", sv), ("model_next", mn), ("actual_next", an),
                          ("obs_map", om), ("x0_prob", x0), ("w_prob", wp), ("z_prob", zp),
                          ("stage_cost", sc), ("terminal_cost", tc)):
            object.__setattr__(self, attr, val)
        defaults = {
            "state_labels": [_num_label(v) for v in sv],
            "control_labels": [str(i) for i in range(nu)],
            "observation_labels": [str(i) for i in range(n_obs)],
            "disturbance_labels": [str(i) for i in range(nw)],
            "noise_labels": [str(i) for i in range(nz)],
        }
        for attr, default in defaults.items():
            labels = tuple(str(s) for s in (getattr(self, attr) or default))
            if len(labels) != len(default) or len(set(labels)) != len(labels):
                raise InvariantViolation("unique labels", attr)
            object.__setattr__(self, attr, labels)

    @property
    def nx(self) -> int:
        return self.model_next.shape[0]

    @property
    def nu(self) -> int:
        return self.model_next.shape[1]

    @property
    def nw(self) -> int:
        return self.model_next.shape[2]

    @property
    def nz(self) -> int:
        return self.obs_map.shape[1]

    @property
    def ny(self) -> int:
        return self.n_obs

    def model_view(self) -> "FiniteScenario":
        """Copy without the actual dynamics."""
        return dataclasses.replace(self, actual_next=None)

    def with_beta(self, beta: float) -> "FiniteScenario":
        return dataclasses.replace(self, beta=beta)


@dataclass(frozen=True, eq=False)
class LinearGaussianScenario:
    """Scalar affine-Gaussian instance with quadratic costs.

    Model ``x' = a[t] x + b[t] u + c[t] w``, actual
    ``x_hat' = a_hat[t] x_hat + b_hat[t] u + c_hat[t] w``, observation
    ``y = x + obs_noise_gain * z``.  Costs are ``0.5 * (Q[t] x**2 + R[t] u**2)``
    for ``t < T`` and ``0.5 * Q_T x**2`` at ``T``.
    """

    horizon: int
    a: tuple
    b: tuple
    c: tuple
    a_hat: Optional[tuple]
    b_hat: Optional[tuple]
    c_hat: Optional[tuple]
    x0: Gaussian1D
    w: tuple
    z: tuple
    x0_w0_covariance: float = 0.0
    obs_noise_gain: float = 0.0
    state_weight: tuple = ()
    control_weight: tuple = ()
    terminal_weight: float = 1.0
    beta: float = 1.0
    control_bounds: tuple = (-math.inf, math.inf)
    name: str = "linear_gaussian"

    family = "linear_gaussian"

    def __post_init__(self):
        T = int(self.horizon)
        if T < 1:
            raise InvariantViolation("horizon", "horizon must be >= 1")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvariantViolation("beta", "beta must be a nonnegative real")

        def vec(v, n, name):
            v = tuple(float(e) for e in (v if v is not None else ()))
            if len(v) != n:
                raise InvariantViolation("horizon", f"{name} needs {n} entries, got {len(v)}")
            return v

        object.__setattr__(self, "horizon", T)
        for name in ("a", "b", "c"):
            object.__setattr__(self, name, vec(getattr(self, name), T, name))
        if self.a_hat is not None:
            for name in ("a_hat", "b_hat", "c_hat"):
                object.__setattr__(self, name, vec(getattr(self, name), T, name))
        object.__setattr__(self, "state_weight", vec(self.state_weight or (0.0,) * T, T, "state_weight"))
        object.__setattr__(self, "control_weight", vec(self.control_weight or (0.0,) * T, T, "control_weight"))
        w = tuple(self.w)
        z = tuple(self.z)
        if len(w) != T or len(z) != T + 1:
            raise InvariantViolation("horizon", "need T disturbance laws and T+1 noise laws")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z", z)
        cov = float(self.x0_w0_covariance)
        if cov * cov > self.x0.variance * w[0].variance + 1e-15:
            raise InvariantViolation("covariance", "|cov(X0, W0)| exceeds sqrt(var X0 * var W0)")
        object.__setattr__(self, "x0_w0_covariance", cov)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "terminal_weight", float(self.terminal_weight))
        lo, hi = self.control_bounds
        if not lo <= hi:
            raise InvariantViolation("control interval")
        object.__setattr__(self, "control_bounds", (float(lo), float(hi)))

    def model_view(self) -> "LinearGaussianScenario":
        return dataclasses.replace(self, a_hat=None, b_hat=None, c_hat=None)

    def with_beta(self, beta: float) -> "LinearGaussianScenario":
        return dataclasses.replace(self, beta=beta)


Scenario = Union[FiniteScenario, LinearGaussianScenario]


def _num_label(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def require_finite(scenario) -> FiniteScenario:
    if not isinstance(scenario, FiniteScenario):
        raise UnsupportedRepresentationError(
            f"operation needs a finite-support scenario, got {type(scenario).__name__}")
    return scenario


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Primitives:
    x0: Any
    w: tuple
    z: tuple


@dataclass
class Trajectory:
    """One parallel rollout.

    States and observations have ``T + 1`` entries; controls and
    disturbances ``T``; noises ``T + 1``.  ``model_costs[t]`` is
    ``c_t(x_t, u_t)`` (terminal cost at ``T``), likewise ``actual_costs``;
    ``penalties[t]`` is ``beta * |x_{t+1} - x_hat_{t+1}|**2``.
    """

    xs: list = field(default_factory=list)
    x_hats: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    y_hats: list = field(default_factory=list)
    us: list = field(default_factory=list)
    ws: list = field(default_factory=list)
    zs: list = field(default_factory=list)
    model_costs: list = field(default_factory=list)
    actual_costs: list = field(default_factory=list)
    penalties: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.us)

    @property
    def model_total(self) -> float:
        return float(sum(self.model_costs))

    @property
    def actual_total(self) -> float:
        """Realized Problem 1 cost of the actual system."""
        return float(sum(self.actual_costs))

    @property
    def penalized_total(self) -> float:
        """Realized Problem 2 cost: model cost plus discrepancy penalties."""
        return self.model_total + float(sum(self.penalties))


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def draw_count(scenario: Scenario) -> int:
    """Number of raw variates consumed per rollout: one per primitive."""
    return 1 + scenario.horizon + scenario.horizon + 1


def raw_draws(scenario: Scenario, rng_seed) -> np.ndarray:
    """Raw variates for one rollout: uniforms (finite) or standard normals (Gaussian)."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if isinstance(scenario, FiniteScenario):
        return rng.random(draw_count(scenario))
    return rng.standard_normal(draw_count(scenario))


def _inverse_cdf(prob: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(prob)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(prob) - 1)


def primitives_from_draws(scenario: Scenario, draws: np.ndarray):
    """Map raw variates ``(R, draw_count)`` to primitive arrays ``(x0, w, z)``.

    Column order is x0, then the disturbances, then the noises.  ``W_0`` is
    drawn conditionally on ``X_0`` when the two are correlated.
    """
    d = np.atleast_2d(np.asarray(draws, dtype=float))
    T = scenario.horizon
    if isinstance(scenario, FiniteScenario):
        x0 = _inverse_cdf(scenario.x0_prob, d[:, 0])
        w = np.stack([_inverse_cdf(scenario.w_prob[t], d[:, 1 + t]) for t in range(T)], axis=1)
        z = np.stack([_inverse_cdf(scenario.z_prob[t], d[:, 1 + T + t]) for t in range(T + 1)], axis=1)
        return x0, w, z
    law0 = scenario.x0
    x0 = law0.mean + math.sqrt(law0.variance) * d[:, 0]
    cov = scenario.x0_w0_covariance
    w0 = scenario.w[0]
    if law0.variance > 0:
        k = cov / law0.variance
        cond_mean = w0.mean + k * (x0 - law0.mean)
        cond_var = max(w0.variance - cov * k, 0.0)
    else:
        cond_mean, cond_var = np.full_like(x0, w0.mean), w0.variance
    cols = [cond_mean + math.sqrt(cond_var) * d[:, 1]]
    cols += [g.mean + math.sqrt(g.variance) * d[:, 1 + t] for t, g in enumerate(scenario.w[1:], start=1)]
    w = np.stack(cols, axis=1)
    z = np.stack([g.mean + math.sqrt(g.variance) * d[:, 1 + T + t] for t, g in enumerate(scenario.z)], axis=1)
    return x0, w, z


def sample_primitives(scenario: Scenario, rng_seed) -> Primitives:
    """Draw ``(x0, w_0..w_{T-1}, z_0..z_T)``.

    ``rng_seed`` may be an int, a sequence of ints or a ``numpy`` Generator.
    Draw order is fixed: x0, then the disturbances, then the noises.
    """
    x0, w, z = primitives_from_draws(scenario, raw_draws(scenario, rng_seed))
    if isinstance(scenario, FiniteScenario):
        return Primitives(int(x0[0]), tuple(int(v) for v in w[0]), tuple(int(v) for v in z[0]))
    return Primitives(float(x0[0]), tuple(float(v) for v in w[0]), tuple(float(v) for v in z[0]))


def _check_time(scenario, t, upper):
    if not (isinstance(t, (int, np.integer)) and 0 <= t < upper):
        raise DomainError(f"time index {t!r} outside [0, {upper})")


def _check_index(value, n, what):
    if not (isinstance(value, (int, np.integer)) and 0 <= value < n):
        raise DomainError(f"{what} {value!r} outside [0, {n})")


def _check_real(value, what):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)):
        raise DomainError(f"{what} {value!r} is not a finite real")


def check_control(scenario: Scenario, u) -> None:
    if isinstance(scenario, FiniteScenario):
        _check_index(u, scenario.nu, "control")
    else:
        _check_real(u, "control")
        lo, hi = scenario.control_bounds
        if not lo <= u <= hi:
            raise DomainError(f"control {u!r} outside [{lo}, {hi}]")


def _step(scenario, table, coeffs, t, x, u, w):
    _check_time(scenario, t, scenario.horizon)
    if isinstance(scenario, FiniteScenario):
        _check_index(x, scenario.nx, "state")
        _check_index(u, scenario.nu, "control")
        _check_index(w, scenario.nw, "disturbance")
        return int(table[x, u, w])
    _check_real(x, "state")
    check_control(scenario, u)
    _check_real(w, "disturbance")
    a, b, c = coeffs
    return a[t] * x + b[t] * u + c[t] * w


def step_model(scenario: Scenario, t: int, x, u, w):
    """Model transition ``f_t(x, u, w)``."""
    if isinstance(scenario, FiniteScenario):
        return _step(scenario, scenario.model_next, None, t, x, u, w)
    return _step(scenario, None, (scenario.a, scenario.b, scenario.c), t, x, u, w)


def step_actual(scenario: Scenario, t: int, x_hat, u, w):
    """Actual-system transition; raises on a model-only view."""
    if isinstance(scenario, FiniteScenario):
        if scenario.actual_next is None:
            raise ConfigurationError("actual dynamics are not available on this scenario view")
        return _step(scenario, scenario.actual_next, None, t, x_hat, u, w)
    if scenario.a_hat is None:
        raise ConfigurationError("actual dynamics are not available on this scenario view")
    return _step(scenario, None, (scenario.a_hat, scenario.b_hat, scenario.c_hat), t, x_hat, u, w)


def observe(scenario: Scenario, t: int, x, z):
    """Observation ``h_t(x, z)``; used for both the model and the actual state."""
    _check_time(scenario, t, scenario.horizon + 1)
    if isinstance(scenario, FiniteScenario):
        _check_index(x, scenario.nx, "state")
        _check_index(z, scenario.nz, "noise")
        return int(scenario.obs_map[x, z])
    _check_real(x, "state")
    _check_real(z, "noise")
    return x + scenario.obs_noise_gain * z


def cost(scenario: Scenario, t: int, x, u=None) -> float:
    """Stage cost ``c_t(x, u)`` for ``t < T``; terminal ``c_T(x)`` at ``t == T``."""
    T = scenario.horizon
    _check_time(scenario, t, T + 1)
    if t == T and u is not None:
        raise DomainError("no control at the terminal time")
    if t < T and u is None:
        raise DomainError(f"stage cost at t={t} needs a control")
    if isinstance(scenario, FiniteScenario):
        _check_index(x, scenario.nx, "state")
        if t == T:
            return float(scenario.terminal_cost[x])
        _check_index(u, scenario.nu, "control")
        return float(scenario.stage_cost[t, x, u])
    _check_real(x, "state")
    if t == T:
        return 0.5 * scenario.terminal_weight * x * x
    _check_real(u, "control")
    return 0.5 * (scenario.state_weight[t] * x * x + scenario.control_weight[t] * u * u)


def state_value(scenario: Scenario, x) -> float:
    """Numeric value of a state (identity for real-valued states)."""
    if isinstance(scenario, FiniteScenario):
        return float(scenario.state_values[x])
    return float(x)


def penalized_stage_cost(scenario: Scenario, t: int, x, u, x_next, x_hat_next) -> float:
    """``c_t(x, u) + beta * |x_next - x_hat_next|**2``."""
    if t >= scenario.horizon:
        raise DomainError("penalized stage cost is defined for t < T only")
    gap = state_value(scenario, x_next) - state_value(scenario, x_hat_next)
    return cost(scenario, t, x, u) + scenario.beta * gap * gap
