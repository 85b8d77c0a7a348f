"""Exhaustive enumeration over primitive realizations of a finite scenario.

Every oracle in the package goes through :func:`enumerate_rollouts`: it lists
each joint realization of ``(x0, w_0..w_{T-1}, z_0..z_T)`` with its
probability and runs the model and the actual system side by side under a
deterministic history-dependent strategy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import FiniteScenario, TooLargeError, require_finite

ENUMERATION_LIMIT = 10**6


def history_code(ys: Sequence[int], ny: int) -> int:
    """Base-``ny`` code of an observation history, oldest symbol most significant."""
    code = 0
    for y in ys:
        code = code * ny + int(y)
    return code


def decode_history(code: int, length: int, ny: int) -> tuple:
    out = []
    for _ in range(length):
        code, r = divmod(code, ny)
        out.append(r)
    return tuple(reversed(out))


@dataclass(frozen=True, eq=False)
class HistoryStrategy:
    """Deterministic strategy ``u_t = g_t(y_0..y_t)``.

    ``tables[t]`` has ``ny ** (t + 1)`` entries indexed by :func:`history_code`.
    Under a deterministic strategy the past controls are themselves functions
    of the past observations, so this covers every law ``g_t(y_{0:t}, u_{0:t-1})``.
    """

    tables: tuple
    name: str = "history"

    def __post_init__(self):
        object.__setattr__(self, "tables", tuple(np.asarray(t, dtype=int) for t in self.tables))

    def __call__(self, t: int, ys, us=()) -> int:
        ny = round(len(self.tables[0]))
        return int(self.tables[t][history_code(ys[: t + 1], ny)])

    @property
    def horizon(self) -> int:
        return len(self.tables)

    def key(self) -> tuple:
        return tuple(tuple(t.tolist()) for t in self.tables)


def constant_strategy(scenario: FiniteScenario, u: int | Sequence[int]) -> HistoryStrategy:
    """Open-loop strategy applying ``u`` (or ``u[t]``) regardless of observations."""
    T, ny = scenario.horizon, scenario.ny
    us = [u] * T if np.isscalar(u) else list(u)
    return HistoryStrategy(tuple(np.full(ny ** (t + 1), us[t], dtype=int) for t in range(T)),
                           name=f"open-loop{tuple(us)}")


def as_history_strategy(scenario: FiniteScenario, g: Callable, name: str = "tabulated") -> HistoryStrategy:
    """Tabulate ``g(t, ys, us)`` over all observation histories."""
    if isinstance(g, HistoryStrategy):
        return g
    T, ny = scenario.horizon, scenario.ny
    tables = []
    prev_us: dict = {(): ()}
    for t in range(T):
        table = np.zeros(ny ** (t + 1), dtype=int)
        cur = {}
        for code in range(ny ** (t + 1)):
            ys = decode_history(code, t + 1, ny)
            us = prev_us[ys[:-1]]
            u = int(g(t, ys, us))
            table[code] = u
            cur[ys] = us + (u,)
        tables.append(table)
        prev_us = cur
    return HistoryStrategy(tuple(tables), name=name)


def enumeration_size(scenario: FiniteScenario) -> int:
    T = scenario.horizon
    return scenario.nx * scenario.nw**T * scenario.nz ** (T + 1)


@dataclass(frozen=True)
class Rollouts:
    """All primitive realizations and the resulting parallel trajectories.

    Arrays have a leading realization axis of length ``R``; state, observation
    and noise arrays have ``T + 1`` columns, control and disturbance arrays ``T``.
    """

    prob: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray

    def y_code(self, t: int, ny: int) -> np.ndarray:
        return _codes(self.y[:, : t + 1], ny)

    def y_hat_code(self, t: int, ny: int) -> np.ndarray:
        return _codes(self.y_hat[:, : t + 1], ny)

    def u_code(self, t: int, nu: int) -> np.ndarray:
        """Code of ``u_0..u_{t-1}`` (empty history -> 0)."""
        return _codes(self.u[:, :t], nu)


def _codes(cols: np.ndarray, base: int) -> np.ndarray:
    code = np.zeros(cols.shape[0], dtype=np.int64)
    for j in range(cols.shape[1]):
        code = code * base + cols[:, j]
    return code


def primitive_grid(scenario: FiniteScenario):
    """Every primitive realization with its probability."""
    s = require_finite(scenario)
    T = s.horizon
    size = enumeration_size(s)
    if size > ENUMERATION_LIMIT:
        raise TooLargeError(f"{size} primitive realizations exceed the limit {ENUMERATION_LIMIT}")
    dims = [s.nx] + [s.nw] * T + [s.nz] * (T + 1)
    idx = np.indices(dims).reshape(len(dims), -1).T
    x0 = idx[:, 0]
    w = idx[:, 1 : 1 + T]
    z = idx[:, 1 + T :]
    prob = s.x0_prob[x0].copy()
    for t in range(T):
        prob *= s.w_prob[t][w[:, t]]
    for t in range(T + 1):
        prob *= s.z_prob[t][z[:, t]]
    return prob, x0, w, z


def simulate_arrays(scenario: FiniteScenario, strategy: HistoryStrategy, x0, w, z):
    """Vectorized parallel rollout for given primitive index arrays."""
    s = scenario
    T, ny = s.horizon, s.ny
    R = x0.shape[0]
    x = np.empty((R, T + 1), dtype=int)
    xh = np.empty((R, T + 1), dtype=int)
    y = np.empty((R, T + 1), dtype=int)
    yh = np.empty((R, T + 1), dtype=int)
    u = np.empty((R, T), dtype=int)
    x[:, 0] = x0
    xh[:, 0] = x0
    code = np.zeros(R, dtype=np.int64)
    for t in range(T + 1):
        y[:, t] = s.obs_map[x[:, t], z[:, t]]
        yh[:, t] = s.obs_map[xh[:, t], z[:, t]]
        if t == T:
            break
        code = code * ny + y[:, t]
        u[:, t] = strategy.tables[t][code]
        x[:, t + 1] = s.model_next[x[:, t], u[:, t], w[:, t]]
        xh[:, t + 1] = s.actual_next[xh[:, t], u[:, t], w[:, t]]
    return x, xh, y, yh, u


def enumerate_rollouts(scenario: FiniteScenario, strategy: HistoryStrategy) -> Rollouts:
    s = require_finite(scenario)
    prob, x0, w, z = primitive_grid(s)
    x, xh, y, yh, u = simulate_arrays(s, strategy, x0, w, z)
    return Rollouts(prob, x, xh, y, yh, u, w, z)


def exact_costs(scenario: FiniteScenario, strategy: HistoryStrategy) -> tuple:
    """Exact expected ``(J, J_hat)`` of a strategy.

    ``J`` is the penalized model cost, ``J_hat`` the actual-system cost.
    """
    s = require_finite(scenario)
    r = enumerate_rollouts(s, strategy)
    return realized_costs(s, r.x, r.x_hat, r.u, r.prob)


def realized_costs(s: FiniteScenario, x, xh, u, prob) -> tuple:
    T = s.horizon
    model = s.terminal_cost[x[:, T]].copy()
    actual = s.terminal_cost[xh[:, T]].copy()
    pen = np.zeros_like(model)
    for t in range(T):
        model += s.stage_cost[t, x[:, t], u[:, t]]
        actual += s.stage_cost[t, xh[:, t], u[:, t]]
        gap = s.state_values[x[:, t + 1]] - s.state_values[xh[:, t + 1]]
        pen += s.beta * gap * gap
    return float(prob @ (model + pen)), float(prob @ actual)


def conditional_joint(scenario: FiniteScenario, rollouts: Rollouts, t: int) -> dict:
    """Direct ``p(x_t, x_hat_t | y_{0:t}, u_{0:t-1})`` for each history with positive mass.

    Keys are ``(ys, us)`` tuples, values ``(nx, nx)`` arrays (model state major).
    """
    s = scenario
    yc = rollouts.y_code(t, s.ny)
    uc = rollouts.u_code(t, s.nu)
    keys, inv = np.unique(np.stack([yc, uc], axis=1), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    acc = np.zeros((len(keys), s.nx, s.nx))
    np.add.at(acc, (inv, rollouts.x[:, t], rollouts.x_hat[:, t]), rollouts.prob)
    out = {}
    for k, (ycode, ucode) in enumerate(keys):
        total = acc[k].sum()
        if total <= 0:
            continue
        key = (decode_history(int(ycode), t + 1, s.ny), decode_history(int(ucode), t, s.nu))
        out[key] = acc[k] / total
    return out
