"""Online estimation of the actual-system observation law and learned information states.

The controller never sees the actual dynamics.  What it can collect, by running
the actual system alongside the model, are pairs of control histories and
actual observation histories.  :class:`EmpiricalConditional` turns those pairs
into frequency estimates of ``p(y_hat_{0:t} | u_{0:t-1})``, which then weight
the per-history actual beliefs in :func:`sepctrl.filtering.factorize`.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (ConfigurationError, Distribution, DomainError, FiniteScenario,
                   InsufficientDataError, ScenarioMismatchError, require_finite)
from .enumeration import HistoryStrategy, decode_history, enumerate_rollouts
from .filtering import (InformationState, actual_history_weights, actual_kernel, factorize,
                        information_state_along, initial_model_belief, theta_update)
from .solver import SeparatedStrategy

SIDECAR_MAGIC = "# sepctrl-counts v1"


def _key(hist) -> tuple:
    return tuple(int(v) for v in hist)


class EmpiricalConditional:
    """Frequency table for ``p(y_hat_{0:t} | u_{0:t-1})``.

    Parameters
    ----------
    ny : int
        Size of the observation alphabet; fixes the support of each query.
    alpha : float, optional
        Additive pseudo-count per observation history.  With ``alpha = 0`` an
        unseen control history cannot be queried.

    Notes
    -----
    The table is single-writer.  Batches produced elsewhere are merged with
    :meth:`merge`.
    """

    def __init__(self, ny: int, alpha: float = 0.0):
        if ny < 1:
            raise DomainError("ny must be positive")
        if alpha < 0:
            raise DomainError("smoothing alpha must be nonnegative")
        self.ny = int(ny)
        self.alpha = float(alpha)
        self.counts: dict = {}
        self.totals: dict = {}

    # -- writing ---------------------------------------------------------
    def record_transition(self, u_history: Sequence[int], y_hat_history: Sequence[int]) -> "EmpiricalConditional":
        us, ys = _key(u_history), _key(y_hat_history)
        if len(ys) != len(us) + 1:
            raise DomainError(f"history lengths {len(us)} and {len(ys)}: need |y_hat| = |u| + 1")
        if any(y < 0 or y >= self.ny for y in ys):
            raise DomainError(f"observation outside 0..{self.ny - 1}")
        self._add(us, ys, 1)
        return self

    def record_arrays(self, u: np.ndarray, y_hat: np.ndarray, t: Optional[int] = None) -> "EmpiricalConditional":
        """Bulk-record rows of control and observation arrays.

        Row ``r`` contributes the pair ``(u[r, :t], y_hat[r, :t+1])`` for every
        ``t`` up to the available length (or only the given ``t``).
        """
        u = np.asarray(u, dtype=np.int64)
        y_hat = np.asarray(y_hat, dtype=np.int64)
        if u.ndim != 2 or y_hat.ndim != 2 or u.shape[0] != y_hat.shape[0]:
            raise DomainError("expected 2-d arrays with matching row counts")
        steps = range(min(u.shape[1], y_hat.shape[1] - 1) + 1) if t is None else [t]
        for step in steps:
            block = np.concatenate([u[:, :step], y_hat[:, : step + 1]], axis=1)
            rows, n = np.unique(block, axis=0, return_counts=True)
            for row, c in zip(rows, n):
                self._add(_key(row[:step]), _key(row[step:]), int(c))
        return self

    def merge(self, other: "EmpiricalConditional") -> "EmpiricalConditional":
        if other.ny != self.ny:
            raise ConfigurationError("cannot merge tables over different alphabets")
        for (us, ys), c in other.counts.items():
            self._add(us, ys, c)
        return self

    def _add(self, us: tuple, ys: tuple, c: int) -> None:
        self.counts[(us, ys)] = self.counts.get((us, ys), 0) + c
        self.totals[us] = self.totals.get(us, 0) + c

    # -- reading ---------------------------------------------------------
    def n_obs(self, u_history: Sequence[int] = ()) -> int:
        return self.totals.get(_key(u_history), 0)

    @property
    def total(self) -> int:
        """Number of records at the root (empty control history)."""
        return self.totals.get((), 0)

    def query(self, u_history: Sequence[int]) -> Distribution:
        """Estimated law of the actual observation history given ``u_history``."""
        us = _key(u_history)
        n = self.totals.get(us, 0)
        if n == 0 and self.alpha == 0:
            raise InsufficientDataError(f"no records for control history {us} and alpha = 0")
        support = list(itertools.product(range(self.ny), repeat=len(us) + 1))
        counts = np.array([self.counts.get((us, ys), 0) for ys in support], dtype=float)
        mass = (counts + self.alpha) / (n + self.alpha * len(support))
        return Distribution(support, mass)

    # -- sidecar ---------------------------------------------------------
    def write_sidecar(self, path, header: Optional[Mapping] = None) -> None:
        """Write ``key,count`` rows; keys are ``u-history|y_hat-history``."""
        meta = {"ny": self.ny, "alpha": self.alpha, **(header or {})}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(SIDECAR_MAGIC + "\n")
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["key", "count"])
            for (us, ys), c in sorted(self.counts.items(), key=lambda kv: (len(kv[0][0]), kv[0])):
                writer.writerow([_fmt(us) + "|" + _fmt(ys), c])

    @classmethod
    def read_sidecar(cls, path) -> "EmpiricalConditional":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != SIDECAR_MAGIC:
            raise ConfigurationError(f"{path}: not a count sidecar")
        meta = dict(tok.split("=", 1) for tok in lines[1].lstrip("# ").split())
        emp = cls(int(meta["ny"]), float(meta["alpha"]))
        for row in csv.DictReader(lines[2:]):
            us, ys = row["key"].split("|")
            emp._add(_parse(us), _parse(ys), int(row["count"]))
        return emp

    def __eq__(self, other) -> bool:
        return (isinstance(other, EmpiricalConditional) and self.ny == other.ny
                and self.alpha == other.alpha and self.counts == other.counts)


def _fmt(hist: tuple) -> str:
    return " ".join(str(v) for v in hist)


def _parse(text: str) -> tuple:
    return tuple(int(v) for v in text.split())


def tv_distance(p: Distribution, q: Distribution) -> float:
    """Total variation distance ``0.5 * sum |p - q|`` over a shared support."""
    if set(p.support) != set(q.support):
        raise DomainError("distributions have different supports")
    return 0.5 * sum(abs(p.prob(v) - q.prob(v)) for v in p.support)


# --------------------------------------------------------------------------
# exact counterparts used as oracles
# --------------------------------------------------------------------------


def exact_conditional(scenario: FiniteScenario, strategy: HistoryStrategy, t: int) -> dict:
    """``p(y_hat_{0:t} | u_{0:t-1})`` under ``strategy``, by enumeration.

    Returns a mapping from each control history with positive probability to a
    Distribution over all observation histories of length ``t + 1``.
    """
    s = require_finite(scenario)
    r = enumerate_rollouts(s, strategy)
    uc = r.u_code(t, s.nu)
    yc = r.y_hat_code(t, s.ny)
    n_hist = s.ny ** (t + 1)
    out = {}
    for code in np.unique(uc):
        sel = uc == code
        mass = np.bincount(yc[sel], weights=r.prob[sel], minlength=n_hist)
        if mass.sum() <= 0:
            continue
        support = [decode_history(k, t + 1, s.ny) for k in range(n_hist)]
        out[decode_history(int(code), t, s.nu)] = Distribution(support, mass / mass.sum())
    return out


def sample_records(scenario: FiniteScenario, strategy: HistoryStrategy, n: int, seed: int):
    """Draw ``n`` parallel rollouts and return ``(u, y_hat)`` index arrays.

    Vectorized counterpart of running the harness ``n`` times.
    """
    from .harness import simulate_finite_batch

    batch = simulate_finite_batch(scenario, strategy, n, seed)
    return batch.u, batch.y_hat


# --------------------------------------------------------------------------
# learned information state
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LearnedInformationState(InformationState):
    """Information state assembled from learned observation-history weights."""

    samples: int = 0
    alpha: float = 0.0
    scenario_hash: str = ""


def learned_information_state(emp: EmpiricalConditional, model_belief, actual_belief_by_history: Mapping,
                              u_history: Sequence[int], scenario_hash: str = "") -> LearnedInformationState:
    """Compose the joint from the model belief and the empirical history weights."""
    us = _key(u_history)
    weights = emp.query(us)
    info = factorize(model_belief, actual_belief_by_history, weights, t=len(us))
    return LearnedInformationState(info.t, info.joint, samples=emp.n_obs(us), alpha=emp.alpha,
                                   scenario_hash=scenario_hash)


class LearnedBeliefSource:
    """Produces learned information states along a model history.

    The model belief is filtered exactly; the actual beliefs per observation
    history come from the actual filter; the history weights come from ``emp``.
    """

    def __init__(self, scenario: FiniteScenario, emp: EmpiricalConditional, scenario_hash: str = ""):
        self.scenario = require_finite(scenario)
        self.emp = emp
        self.scenario_hash = scenario_hash
        self._kernel = actual_kernel(self.scenario, 0)
        self._cache: dict = {}

    def information_state(self, t: int, ys: Sequence[int], us: Sequence[int]) -> LearnedInformationState:
        s = self.scenario
        ys, us = _key(ys[: t + 1]), _key(us[:t])
        belief = initial_model_belief(s, ys[0])
        for k in range(t):
            belief = theta_update(s, k, belief, ys[k + 1], us[k])
        if us not in self._cache:
            self._cache[us] = actual_history_weights(s, us, self._kernel)[1]
        return learned_information_state(self.emp, belief, self._cache[us], us, self.scenario_hash)


class ExactBeliefSource:
    """Exact information states from the joint filter."""

    def __init__(self, scenario: FiniteScenario, scenario_hash: str = ""):
        self.scenario = require_finite(scenario)
        self.scenario_hash = scenario_hash

    def information_state(self, t: int, ys: Sequence[int], us: Sequence[int]) -> InformationState:
        return information_state_along(self.scenario, ys[: t + 1], us[:t])


class SeparatedController:
    """Executable form of a separated strategy.

    :meth:`act` is a pure function of the information state; calling the
    controller with a step context first obtains that state from the source.
    """

    def __init__(self, strategy: SeparatedStrategy, source):
        self.strategy = strategy
        self.source = source
        self.name = "separated"

    def act(self, t: int, info: InformationState) -> int:
        return self.strategy.control(t, info)

    def __call__(self, ctx) -> int:
        info = self.source.information_state(ctx.t, ctx.ys, ctx.us)
        return self.act(ctx.t, info)


def instantiate_strategy(strategy: SeparatedStrategy, source) -> SeparatedController:
    """Bind a separated strategy to a source of (learned or exact) information states.

    ``source`` may also be a single :class:`LearnedInformationState`; only its
    scenario hash is checked and :meth:`SeparatedController.act` must then be
    fed states explicitly.
    """
    src_hash = getattr(source, "scenario_hash", "")
    if strategy.scenario_hash and src_hash and src_hash != strategy.scenario_hash:
        raise ScenarioMismatchError(f"strategy was solved for scenario {strategy.scenario_hash}, "
                                 f"information state belongs to {src_hash}")
    return SeparatedController(strategy, source)
