"""Parallel execution of the model and the actual system on shared primitives.

Both systems receive the same initial state, the same disturbances, the same
sensor noises and the same controls.  Controllers see the model's
observations, the actual system's observations, and (for the matching law) a
probe of the actual response to a candidate control; never the actual
dynamics themselves.

Rollout ``i`` of a run with master seed ``s`` draws its primitives from
``numpy.random.default_rng([s, i])``, so any subset of rollouts can be
reproduced on its own and the vectorized batch path yields the same numbers
as :func:`run_parallel`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .core import (DomainError, FiniteScenario, LinearGaussianScenario, Trajectory, check_control, cost,
                   observe, primitives_from_draws, raw_draws, sample_primitives, state_value, step_actual,
                   step_model)
from .enumeration import HistoryStrategy, as_history_strategy
from .solver import matching_fixed_point

ZERO_TOL = 1e-9
LOG_MAGIC = "# sepctrl-run-log v1"
LOG_COLUMNS = ("rollout", "t", "x", "x_hat", "y", "y_hat", "u", "w", "z", "c_model", "c_actual", "penalty")


def rollout_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for rollout ``index`` under master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


# --------------------------------------------------------------------------
# controllers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepContext:
    """What a controller may use at time ``t``.

    In the batch path every field except ``t`` is an array with one row per
    rollout, and ``actual_response`` accepts an array of controls.
    """

    t: int
    ys: tuple
    y_hats: tuple
    us: tuple
    x: object
    w: object
    actual_response: Callable


class HistoryController:
    """Applies a deterministic table ``u_t = g_t(y_0..y_t)``."""

    def __init__(self, strategy: HistoryStrategy):
        self.strategy = strategy
        self.name = strategy.name

    def __call__(self, ctx: StepContext) -> int:
        return self.strategy(ctx.t, ctx.ys)

    def batch(self, ctx: StepContext) -> np.ndarray:
        ys = np.asarray(ctx.ys)
        ny = round(len(self.strategy.tables[0]))
        code = np.zeros(ys.shape[0], dtype=np.int64)
        for j in range(ctx.t + 1):
            code = code * ny + ys[:, j]
        return self.strategy.tables[ctx.t][code]


class MatchingController:
    """Drives the model's next state onto the actual next state."""

    def __init__(self, scenario: LinearGaussianScenario):
        self.scenario = scenario
        self.name = "matching"

    def __call__(self, ctx: StepContext) -> float:
        return float(matching_fixed_point(self.scenario, ctx.t, ctx.x, ctx.w, ctx.actual_response))

    def batch(self, ctx: StepContext) -> np.ndarray:
        return matching_fixed_point(self.scenario, ctx.t, ctx.x, ctx.w, ctx.actual_response)


class LinearController:
    """Two-step linear law ``u0 = a y0``, ``u1 = b y_hat_1 + c y0``.

    With noiseless observations ``y0 = x0`` and ``y_hat_1 = x_hat_1``.
    """

    def __init__(self, a: float, b: float, c: float, name: str = "linear"):
        self.a, self.b, self.c = float(a), float(b), float(c)
        self.name = name

    def _law(self, t, ys, y_hats):
        if t == 0:
            return self.a * ys[0]
        if t == 1:
            return self.b * y_hats[1] + self.c * ys[0]
        raise DomainError("the linear law is defined for two steps")

    def __call__(self, ctx: StepContext) -> float:
        return float(self._law(ctx.t, ctx.ys, ctx.y_hats))

    def batch(self, ctx: StepContext) -> np.ndarray:
        return self._law(ctx.t, np.asarray(ctx.ys).T, np.asarray(ctx.y_hats).T)


def batch_capable(scenario, controller):
    """Return a controller with a ``batch`` method equivalent to ``controller``, or ``None``."""
    if hasattr(controller, "batch"):
        return controller
    if isinstance(scenario, FiniteScenario) and hasattr(controller, "act") and hasattr(controller, "source"):
        # separated controllers depend on the history only through the filter: tabulate once
        def g(t, ys, us):
            return controller.act(t, controller.source.information_state(t, ys, us))

        try:
            return HistoryController(as_history_strategy(scenario, g, name=getattr(controller, "name", "separated")))
        except Exception:
            return None
    return None


# --------------------------------------------------------------------------
# single rollout
# --------------------------------------------------------------------------


def run_parallel(scenario, controller, seed: int, index: int = 0) -> Trajectory:
    """One parallel rollout of the model and the actual system."""
    s = scenario
    T = s.horizon
    prim = sample_primitives(s, rollout_rng(seed, index))
    tr = Trajectory(ws=list(prim.w), zs=list(prim.z))
    x = x_hat = prim.x0
    for t in range(T + 1):
        tr.xs.append(x)
        tr.x_hats.append(x_hat)
        tr.ys.append(observe(s, t, x, prim.z[t]))
        tr.y_hats.append(observe(s, t, x_hat, prim.z[t]))
        if t == T:
            tr.model_costs.append(cost(s, T, x))
            tr.actual_costs.append(cost(s, T, x_hat))
            break
        w = prim.w[t]
        ctx = StepContext(t, tuple(tr.ys), tuple(tr.y_hats), tuple(tr.us), x, w,
                          lambda u, t=t, xh=x_hat, w=w: step_actual(s, t, xh, u, w))
        u = controller(ctx)
        u = int(u) if isinstance(s, FiniteScenario) and isinstance(u, (int, np.integer)) else u
        check_control(s, u)
        x_next = step_model(s, t, x, u, w)
        x_hat_next = step_actual(s, t, x_hat, u, w)
        gap = state_value(s, x_next) - state_value(s, x_hat_next)
        tr.us.append(u)
        tr.model_costs.append(cost(s, t, x, u))
        tr.actual_costs.append(cost(s, t, x_hat, u))
        tr.penalties.append(s.beta * gap * gap)
        x, x_hat = x_next, x_hat_next
    return tr


# --------------------------------------------------------------------------
# vectorized batch
# --------------------------------------------------------------------------


@dataclass
class Batch:
    """Arrays for ``n`` rollouts; row ``i`` equals ``run_parallel(..., index=i)``."""

    x: np.ndarray
    x_hat: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    model_cost: np.ndarray  # (n, T + 1)
    actual_cost: np.ndarray  # (n, T + 1)
    penalty: np.ndarray  # (n, T)

    @property
    def model_total(self) -> np.ndarray:
        return self.model_cost.sum(axis=1)

    @property
    def actual_total(self) -> np.ndarray:
        return self.actual_cost.sum(axis=1)

    @property
    def penalized_total(self) -> np.ndarray:
        return self.model_total + self.penalty.sum(axis=1)


def _draws(scenario, n: int, seed: int, start: int = 0) -> np.ndarray:
    return np.stack([raw_draws(scenario, rollout_rng(seed, i)) for i in range(start, start + n)])


def simulate_batch(scenario, controller, n: int, seed: int, start: int = 0) -> Batch:
    """Vectorized :func:`run_parallel` over rollouts ``start .. start + n - 1``."""
    s = scenario
    ctrl = batch_capable(s, controller)
    if ctrl is None:
        raise DomainError("controller has no vectorized form")
    T = s.horizon
    finite = isinstance(s, FiniteScenario)
    x0, w, z = primitives_from_draws(s, _draws(s, n, seed, start))
    dt = np.int64 if finite else float
    x = np.empty((n, T + 1), dtype=dt)
    xh = np.empty((n, T + 1), dtype=dt)
    y = np.empty((n, T + 1), dtype=dt)
    yh = np.empty((n, T + 1), dtype=dt)
    u = np.empty((n, T), dtype=dt)
    mc = np.empty((n, T + 1))
    ac = np.empty((n, T + 1))
    pen = np.empty((n, T))
    x[:, 0] = xh[:, 0] = x0
    for t in range(T + 1):
        y[:, t] = _observe(s, t, x[:, t], z[:, t])
        yh[:, t] = _observe(s, t, xh[:, t], z[:, t])
        if t == T:
            mc[:, T] = _cost(s, T, x[:, T])
            ac[:, T] = _cost(s, T, xh[:, T])
            break
        xt, xht, wt = x[:, t], xh[:, t], w[:, t]
        ctx = StepContext(t, y[:, : t + 1], yh[:, : t + 1], u[:, :t], xt, wt,
                          lambda v, t=t, xht=xht, wt=wt: _step(s, t, xht, v, wt, actual=True))
        ut = np.broadcast_to(np.asarray(ctrl.batch(ctx)), (n,))
        if finite and (np.any(ut < 0) or np.any(ut >= s.nu)):
            raise DomainError("controller emitted a control outside the control space")
        u[:, t] = ut
        x[:, t + 1] = _step(s, t, xt, ut, wt, actual=False)
        xh[:, t + 1] = _step(s, t, xht, ut, wt, actual=True)
        gap = _value(s, x[:, t + 1]) - _value(s, xh[:, t + 1])
        mc[:, t] = _cost(s, t, xt, ut)
        ac[:, t] = _cost(s, t, xht, ut)
        pen[:, t] = s.beta * gap * gap
    return Batch(x, xh, y, yh, u, w, z, mc, ac, pen)


def simulate_finite_batch(scenario: FiniteScenario, strategy: HistoryStrategy, n: int, seed: int) -> Batch:
    return simulate_batch(scenario, HistoryController(strategy), n, seed)


def _observe(s, t, x, z):
    if isinstance(s, FiniteScenario):
        return s.obs_map[x, z]
    return x + s.obs_noise_gain * z


def _step(s, t, x, u, w, actual: bool):
    if isinstance(s, FiniteScenario):
        return (s.actual_next if actual else s.model_next)[x, u, w]
    if actual:
        return s.a_hat[t] * x + s.b_hat[t] * u + s.c_hat[t] * w
    return s.a[t] * x + s.b[t] * u + s.c[t] * w


def _cost(s, t, x, u=None):
    if isinstance(s, FiniteScenario):
        return s.terminal_cost[x] if t == s.horizon else s.stage_cost[t, x, u]
    if t == s.horizon:
        return 0.5 * s.terminal_weight * x * x
    return 0.5 * (s.state_weight[t] * x * x + s.control_weight[t] * u * u)


def _value(s, x):
    return s.state_values[x] if isinstance(s, FiniteScenario) else x


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CostEstimate:
    """Sample means and standard errors of the realized totals.

    ``j`` averages the realization-parameterized penalized cost over the
    sampled actual paths, so it is an aggregate over realizations.
    """

    j_hat: float
    j: float
    se_j_hat: float
    se_j: float
    n: int
    penalty_per_step: tuple = ()
    j_is_aggregate: bool = True


def _mean_se(v: np.ndarray):
    n = len(v)
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return float(np.mean(v)), se


def monte_carlo_cost(scenario, controller, n: int, seed: int) -> CostEstimate:
    """Estimate the actual-system cost and the penalized model cost from ``n`` rollouts."""
    if n < 1:
        raise DomainError("need at least one rollout")
    if batch_capable(scenario, controller) is not None:
        b = simulate_batch(scenario, controller, n, seed)
        actual, penalized, pen = b.actual_total, b.penalized_total, b.penalty
    else:
        trs = [run_parallel(scenario, controller, seed, i) for i in range(n)]
        actual = np.array([tr.actual_total for tr in trs])
        penalized = np.array([tr.penalized_total for tr in trs])
        pen = np.array([tr.penalties for tr in trs], dtype=float).reshape(n, -1)
    jh, se_jh = _mean_se(actual)
    j, se_j = _mean_se(penalized)
    return CostEstimate(jh, j, se_jh, se_j, n, tuple(float(v) for v in pen.mean(axis=0)))


# --------------------------------------------------------------------------
# cost-transfer audit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    gaps: tuple
    model_total: float
    actual_total: float
    zero_penalty: bool
    costs_equal: bool
    tol: float = ZERO_TOL

    @property
    def holds(self) -> bool:
        """Zero penalty on every step implies equal totals."""
        return (not self.zero_penalty) or self.costs_equal

    @property
    def claim(self) -> str:
        if not self.zero_penalty:
            return "nonzero penalty; no equality claimed"
        return "zero penalty; costs equal" if self.costs_equal else "zero penalty; costs differ"


def cost_transfer_audit(trajectory: Trajectory, scenario=None, tol: float = ZERO_TOL) -> AuditReport:
    """Per-step state gaps and whether zero gaps came with equal realized costs.

    Finite-scenario states are indices; pass ``scenario`` to measure gaps in
    state values rather than in indices.
    """
    value = (lambda v: state_value(scenario, v)) if scenario is not None else float
    gaps = tuple(abs(value(a) - value(b)) for a, b in zip(trajectory.xs[1:], trajectory.x_hats[1:]))
    zero = all(g <= tol for g in gaps)
    m, a = trajectory.model_total, trajectory.actual_total
    return AuditReport(gaps, m, a, zero, abs(m - a) <= tol, tol)


# --------------------------------------------------------------------------
# run logs
# --------------------------------------------------------------------------


@dataclass
class RunLog:
    """Header, one trajectory per rollout, and a summary recomputable from them."""

    scenario_hash: str
    strategy_id: str
    seed: int
    beta: float
    trajectories: list = field(default_factory=list)
    timestamp: Optional[str] = None
    tool_version: str = __version__

    def summary(self) -> dict:
        if not self.trajectories:
            return {"rollouts": 0}
        actual = np.array([tr.actual_total for tr in self.trajectories])
        penalized = np.array([tr.penalized_total for tr in self.trajectories])
        pen = np.array([tr.penalties for tr in self.trajectories], dtype=float)
        out = {"rollouts": len(self.trajectories), "J_hat": float(actual.mean()), "J": float(penalized.mean())}
        for t, v in enumerate(pen.mean(axis=0)):
            out[f"penalty_t{t}"] = float(v)
        return out

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(LOG_MAGIC + "\n")
        head = (f"# scenario={self.scenario_hash} strategy={self.strategy_id} seed={self.seed} "
                f"beta={self.beta!r} tool={self.tool_version}")
        if self.timestamp:
            head += f" timestamp={self.timestamp}"
        buf.write(head + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r, tr in enumerate(self.trajectories):
            T = tr.horizon
            for t in range(T + 1):
                last = t == T
                writer.writerow([r, t, _f(tr.xs[t]), _f(tr.x_hats[t]), _f(tr.ys[t]), _f(tr.y_hats[t]),
                                 "" if last else _f(tr.us[t]), "" if last else _f(tr.ws[t]), _f(tr.zs[t]),
                                 _f(tr.model_costs[t]), _f(tr.actual_costs[t]),
                                 "" if last else _f(tr.penalties[t])])
        buf.write("# summary\n")
        for k, v in self.summary().items():
            buf.write(f"# {k}={_f(v)}\n")
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> tuple:
        """Parse a log; returns ``(RunLog, stored_summary)``."""
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != LOG_MAGIC:
            raise DomainError(f"{path}: not a run log")
        meta = dict(tok.split("=", 1) for tok in lines[1][2:].split())
        body, stored = [], {}
        in_summary = False
        for line in lines[2:]:
            if line == "# summary":
                in_summary = True
            elif in_summary:
                k, v = line[2:].split("=", 1)
                stored[k] = int(v) if k == "rollouts" else float(v)
            else:
                body.append(line)
        trajs: dict = {}
        for row in csv.DictReader(body):
            tr = trajs.setdefault(int(row["rollout"]), Trajectory())
            tr.xs.append(_num(row["x"]))
            tr.x_hats.append(_num(row["x_hat"]))
            tr.ys.append(_num(row["y"]))
            tr.y_hats.append(_num(row["y_hat"]))
            tr.zs.append(_num(row["z"]))
            tr.model_costs.append(float(row["c_model"]))
            tr.actual_costs.append(float(row["c_actual"]))
            if row["u"] != "":
                tr.us.append(_num(row["u"]))
                tr.ws.append(_num(row["w"]))
                tr.penalties.append(float(row["penalty"]))
        log = cls(meta["scenario"], meta["strategy"], int(meta["seed"]), float(meta["beta"]),
                  [trajs[k] for k in sorted(trajs)], meta.get("timestamp"), meta.get("tool", ""))
        return log, stored


def _f(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _num(text: str):
    return int(text) if text.lstrip("-").isdigit() else float(text)


def run_log(scenario, controller, n: int, seed: int, scenario_hash: str = "",
            timestamp: Optional[str] = None) -> RunLog:
    """Run ``n`` rollouts through :func:`run_parallel` and collect them in a log."""
    if n < 1:
        raise DomainError("need at least one rollout")
    trs = [run_parallel(scenario, controller, seed, i) for i in range(n)]
    return RunLog(scenario_hash, getattr(controller, "name", type(controller).__name__), seed, scenario.beta,
                  trs, timestamp)


# name used by the operation catalogue
theorem3_audit = cost_transfer_audit
