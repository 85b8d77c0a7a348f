"""Built-in problem instances and the scenario file format.

Scenario files are INI documents read with :mod:`configparser`.  Every file
has the sections ``[meta] [spaces] [model] [actual] [observation]
[primitives] [costs]``; ``[meta]`` carries ``schema``, ``family``,
``horizon``, ``beta`` and optionally ``name``.

Finite family (``family = finite``)::

    [spaces]
    states = 0, 1                 # numeric state values
    controls = stay, toggle       # labels, one per control
    observations = 0, 1
    disturbances = calm, kick
    noises = keep, flip

    [model]                       # one row per (x, u, w): next state
    0, stay, calm = 0
    ...
    [actual]                      # same layout as [model]
    [observation]                 # one row per (x, z): observation
    0, keep = 0
    [primitives]
    x0 = 0.6, 0.4                 # masses aligned with the declared labels
    w = 0.8, 0.2                  # or w.0, w.1, ... per time step
    z = 0.9, 0.1                  # or z.0, ..., z.T
    [costs]
    stage: 0, toggle = 0.1        # c(x, u), time invariant; missing rows are 0
    terminal: 1 = 1.0             # c_T(x); missing rows are 0

Linear-Gaussian family (``family = linear_gaussian``)::

    [spaces]
    states = real
    controls = real               # or "lo, hi" for an interval
    observations = real
    [model]
    a = 2, 2                      # one coefficient per t = 0..T-1
    b = 3, 4
    c = 4, 0
    [actual]                      # same keys as [model]
    [observation]
    noise_gain = 0                # y = x + noise_gain * z
    [primitives]
    x0 = 0, 1                     # mean, variance
    w.0 = 0, 1
    w.1 = 0, 0
    z.0 = 0, 0                    # one per t = 0..T
    x0_w0_covariance = 0.5
    [costs]                       # costs are 0.5 * (Q x^2 + R u^2), 0.5 * Q_T x^2
    state_weight = 0, 0
    control_weight = 0, 1
    terminal_weight = 1
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .core import (
    MASS_TOL,
    FiniteScenario,
    Gaussian1D,
    InvariantViolation,
    LinearGaussianScenario,
    SepCtrlError,
)

SCHEMA_VERSION = 1
SECTIONS = ("meta", "spaces", "model", "actual", "observation", "primitives", "costs")


class ScenarioParseError(SepCtrlError):
    exit_code = 3

    def __init__(self, message: str, line: int | None = None, section: str | None = None):
        self.line = line
        self.section = section
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


# --------------------------------------------------------------------------
# built-ins
# --------------------------------------------------------------------------


def builtin_lqg() -> LinearGaussianScenario:
    """The two-step scalar example.

    Actual system ``x1 = x0 + u0 + w0``, ``x2 = x1 + u1``; model
    ``x1 = 2 x0 + 3 u0 + 4 w0``, ``x2 = 2 x1 + 4 u1``; identity observations;
    cost ``0.5 * (x2**2 + u1**2)``; ``X0`` and ``W0`` zero-mean, unit-variance,
    covariance 0.5; ``beta = 1``.
    """
    return LinearGaussianScenario(
        horizon=2,
        a=(2.0, 2.0), b=(3.0, 4.0), c=(4.0, 0.0),
        a_hat=(1.0, 1.0), b_hat=(1.0, 1.0), c_hat=(1.0, 0.0),
        x0=Gaussian1D(0.0, 1.0),
        w=(Gaussian1D(0.0, 1.0), Gaussian1D(0.0, 0.0)),
        z=(Gaussian1D(0.0, 0.0),) * 3,
        x0_w0_covariance=0.5,
        obs_noise_gain=0.0,
        state_weight=(0.0, 0.0),
        control_weight=(0.0, 1.0),
        terminal_weight=1.0,
        beta=1.0,
        name="lqg",
    )


def _xor_table(nx=2, nu=2, nw=2):
    return np.array([[[x ^ u ^ w for w in range(nw)] for u in range(nu)] for x in range(nx)])


def builtin_discrete_toy() -> FiniteScenario:
    """Two-state verification instance with horizon 2.

    Model: ``x' = x xor u xor w`` with ``P(w = 1) = 0.2``.  The actual system
    differs in one entry: toggling out of state 1 in calm conditions fails
    (``f_hat(1, toggle, calm) = 1``).  Observations pass through a binary
    symmetric channel with flip probability 0.1.  Toggling costs 0.1 per
    step, ending in state 1 costs 1, ``beta = 0.5``.
    """
    model = _xor_table()
    actual = model.copy()
    actual[1, 1, 0] = 1
    return FiniteScenario(
        horizon=2,
        state_values=[0.0, 1.0],
        model_next=model,
        actual_next=actual,
        obs_map=np.array([[0, 1], [1, 0]]),
        x0_prob=[0.6, 0.4],
        w_prob=[0.8, 0.2],
        z_prob=[0.9, 0.1],
        stage_cost=np.array([[0.0, 0.1], [0.0, 0.1]]),
        terminal_cost=[0.0, 1.0],
        beta=0.5,
        control_labels=("stay", "toggle"),
        disturbance_labels=("calm", "kick"),
        noise_labels=("keep", "flip"),
        name="toy",
    )


def builtin_decoupled_toy() -> FiniteScenario:
    """Variant of the toy whose actual state is independent of the model data.

    The initial state is deterministic and the model ignores the disturbance,
    so the model state is a function of the controls alone and the
    observations carry no information about the actual state.  Used to
    exercise the three-factor decomposition of the information state where
    its independence premise holds.
    """
    model = np.array([[[u, u] for u in range(2)] for _ in range(2)])
    actual = _xor_table()
    actual[1, 1, 0] = 1
    return FiniteScenario(
        horizon=2,
        state_values=[0.0, 1.0],
        model_next=model,
        actual_next=actual,
        obs_map=np.array([[0, 1], [1, 0]]),
        x0_prob=[1.0, 0.0],
        w_prob=[0.7, 0.3],
        z_prob=[0.9, 0.1],
        stage_cost=np.array([[0.0, 0.1], [0.0, 0.1]]),
        terminal_cost=[0.0, 1.0],
        beta=0.5,
        control_labels=("stay", "toggle"),
        disturbance_labels=("calm", "kick"),
        noise_labels=("keep", "flip"),
        name="decoupled_toy",
    )


BUILTINS = {
    "lqg": builtin_lqg,
    "toy": builtin_discrete_toy,
    "decoupled_toy": builtin_decoupled_toy,
}


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def _join(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def serialize_scenario(scenario) -> str:
    """Canonical text form; ``load_scenario`` of it gives back an equal scenario."""
    out = io.StringIO()
    w = out.write
    T = scenario.horizon
    w("[meta]\n")
    w(f"schema = {SCHEMA_VERSION}\nfamily = {scenario.family}\nname = {scenario.name}\n")
    w(f"horizon = {T}\nbeta = {_fmt(scenario.beta)}\n\n")
    if isinstance(scenario, FiniteScenario):
        s = scenario
        if s.actual_next is None:
            raise SepCtrlError("cannot serialize a model-only view")
        sl, cl, ol, dl, nl = (s.state_labels, s.control_labels, s.observation_labels,
                              s.disturbance_labels, s.noise_labels)
        w("[spaces]\n")
        w(f"states = {_join(s.state_values)}\n")
        for key, labels in (("controls", cl), ("observations", ol),
                            ("disturbances", dl), ("noises", nl)):
            w(f"{key} = {', '.join(labels)}\n")
        for section, table in (("model", s.model_next), ("actual", s.actual_next)):
            w(f"\n[{section}]\n")
            for x in range(s.nx):
                for u in range(s.nu):
                    for k in range(s.nw):
                        w(f"{sl[x]}, {cl[u]}, {dl[k]} = {sl[table[x, u, k]]}\n")
        w("\n[observation]\n")
        for x in range(s.nx):
            for k in range(s.nz):
                w(f"{sl[x]}, {nl[k]} = {ol[s.obs_map[x, k]]}\n")
        w("\n[primitives]\n")
        w(f"x0 = {_join(s.x0_prob)}\n")
        for t in range(T):
            w(f"w.{t} = {_join(s.w_prob[t])}\n")
        for t in range(T + 1):
            w(f"z.{t} = {_join(s.z_prob[t])}\n")
        w("\n[costs]\n")
        if np.all(s.stage_cost == s.stage_cost[0]):
            for x in range(s.nx):
                for u in range(s.nu):
                    w(f"stage: {sl[x]}, {cl[u]} = {_fmt(s.stage_cost[0, x, u])}\n")
        else:
            for t in range(T):
                for x in range(s.nx):
                    for u in range(s.nu):
                        w(f"stage.{t}: {sl[x]}, {cl[u]} = {_fmt(s.stage_cost[t, x, u])}\n")
        for x in range(s.nx):
            w(f"terminal: {sl[x]} = {_fmt(s.terminal_cost[x])}\n")
        return out.getvalue()

    s = scenario
    if s.a_hat is None:
        raise SepCtrlError("cannot serialize a model-only view")
    lo, hi = s.control_bounds
    controls = "real" if (lo, hi) == (-math.inf, math.inf) else f"{_fmt(lo)}, {_fmt(hi)}"
    w(f"[spaces]\nstates = real\ncontrols = {controls}\nobservations = real\n\n")
    w(f"[model]\na = {_join(s.a)}\nb = {_join(s.b)}\nc = {_join(s.c)}\n\n")
    w(f"[actual]\na = {_join(s.a_hat)}\nb = {_join(s.b_hat)}\nc = {_join(s.c_hat)}\n\n")
    w(f"[observation]\nnoise_gain = {_fmt(s.obs_noise_gain)}\n\n")
    w(f"[primitives]\nx0 = {_fmt(s.x0.mean)}, {_fmt(s.x0.variance)}\n")
    for t, g in enumerate(s.w):
        w(f"w.{t} = {_fmt(g.mean)}, {_fmt(g.variance)}\n")
    for t, g in enumerate(s.z):
        w(f"z.{t} = {_fmt(g.mean)}, {_fmt(g.variance)}\n")
    w(f"x0_w0_covariance = {_fmt(s.x0_w0_covariance)}\n\n")
    w(f"[costs]\nstate_weight = {_join(s.state_weight)}\n")
    w(f"control_weight = {_join(s.control_weight)}\nterminal_weight = {_fmt(s.terminal_weight)}\n")
    return out.getvalue()


def scenario_hash(scenario) -> str:
    """Short content hash of the canonical serialization."""
    return hashlib.sha256(serialize_scenario(scenario).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioFile:
    path: Union[str, None]
    scenario: object
    source: str

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]


class _Reader:
    """Thin wrapper that remembers the line of every key for error messages."""

    def __init__(self, text: str):
        self.text = text
        self.parser = configparser.ConfigParser(
            delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
            interpolation=None, strict=True)
        self.parser.optionxform = str  # keep label case
        try:
            self.parser.read_string(text)
        except configparser.MissingSectionHeaderError as exc:
            raise ScenarioParseError("content before the first section header", exc.lineno) from exc
        except configparser.DuplicateOptionError as exc:
            raise ScenarioParseError(f"duplicate row {exc.option!r} in [{exc.section}]",
                                     exc.lineno, exc.section) from exc
        except configparser.DuplicateSectionError as exc:
            raise ScenarioParseError(f"duplicate section [{exc.section}]", exc.lineno, exc.section) from exc
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ScenarioParseError("malformed line", lineno) from exc
        self.lines = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
            elif section and "=" in line and not line.startswith(("#", ";")):
                self.lines[(section, line.split("=", 1)[0].strip())] = i
        for sec in SECTIONS:
            if not self.parser.has_section(sec):
                raise ScenarioParseError(f"missing section [{sec}]", section=sec)

    def line(self, section, key):
        return self.lines.get((section, key))

    def get(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        if default is not None:
            return default
        raise ScenarioParseError(f"missing key {key!r} in [{section}]", section=section)

    def floats(self, section, key, default=None):
        raw = self.get(section, key, default)
        try:
            return [float(v) for v in _split(raw)]
        except ValueError as exc:
            raise ScenarioParseError(f"{key!r}: expected numbers, got {raw!r}",
                                     self.line(section, key), section) from exc

    def items(self, section):
        return [(k, v, self.line(section, k)) for k, v in self.parser.items(section)]


def _split(raw: str):
    return [p.strip() for p in raw.split(",") if p.strip()]


def parse_scenario(text: str):
    r = _Reader(text)
    try:
        schema = int(r.get("meta", "schema"))
    except ValueError as exc:
        raise ScenarioParseError("schema must be an integer", r.line("meta", "schema"), "meta") from exc
    if schema != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema version {schema}", r.line("meta", "schema"), "meta")
    family = r.get("meta", "family")
    try:
        horizon = int(r.get("meta", "horizon"))
        beta = float(r.get("meta", "beta"))
    except ValueError as exc:
        raise ScenarioParseError("horizon/beta must be numeric", section="meta") from exc
    name = r.get("meta", "name", "scenario")
    if family == "finite":
        return _parse_finite(r, horizon, beta, name)
    if family == "linear_gaussian":
        return _parse_linear(r, horizon, beta, name)
    raise ScenarioParseError(f"unknown family {family!r}", r.line("meta", "family"), "meta")


def _parse_finite(r: _Reader, T: int, beta: float, name: str) -> FiniteScenario:
    state_values = r.floats("spaces", "states")
    state_labels = [_fmt(v) for v in state_values]
    labels = {key: _split(r.get("spaces", key))
              for key in ("controls", "observations", "disturbances", "noises")}
    nx, nu, nw, nz = (len(state_labels), len(labels["controls"]),
                      len(labels["disturbances"]), len(labels["noises"]))

    def lookup(kind, names, token, section, line):
        try:
            return names.index(token)
        except ValueError:
            raise ScenarioParseError(f"unknown {kind} label {token!r}", line, section) from None

    def state_index(token, section, line):
        try:
            return state_labels.index(_fmt(float(token)))
        except ValueError:
            raise ScenarioParseError(f"unknown state {token!r}", line, section) from None

    tables = {}
    for section in ("model", "actual"):
        table = np.full((nx, nu, nw), -1, dtype=int)
        for key, value, line in r.items(section):
            parts = _split(key)
            if len(parts) != 3:
                raise ScenarioParseError("transition rows need 'x, u, w = x_next'", line, section)
            x = state_index(parts[0], section, line)
            u = lookup("control", labels["controls"], parts[1], section, line)
            k = lookup("disturbance", labels["disturbances"], parts[2], section, line)
            table[x, u, k] = state_index(value.strip(), section, line)
        if (table < 0).any():
            raise InvariantViolation("total dynamics", f"[{section}] table has missing rows")
        tables[section] = table
    obs = np.full((nx, nz), -1, dtype=int)
    for key, value, line in r.items("observation"):
        parts = _split(key)
        if len(parts) != 2:
            raise ScenarioParseError("observation rows need 'x, z = y'", line, "observation")
        x = state_index(parts[0], "observation", line)
        k = lookup("noise", labels["noises"], parts[1], "observation", line)
        obs[x, k] = lookup("observation", labels["observations"], value.strip(), "observation", line)
    if (obs < 0).any():
        raise InvariantViolation("total observation map", "[observation] has missing rows")

    def masses(key, n, default_key=None):
        raw_key = key if r.parser.has_option("primitives", key) else default_key
        if raw_key is None or not r.parser.has_option("primitives", raw_key):
            raise ScenarioParseError(f"missing law {key!r} in [primitives]", section="primitives")
        m = r.floats("primitives", raw_key)
        if len(m) != n:
            raise ScenarioParseError(f"{raw_key!r} needs {n} masses", r.line("primitives", raw_key), "primitives")
        if any(v < 0 for v in m) or abs(sum(m) - 1.0) > MASS_TOL:
            raise InvariantViolation("normalization", f"{raw_key!r} masses sum to {sum(m):.12g}")
        return m

    x0 = masses("x0", nx)
    w = [masses(f"w.{t}", nw, "w") for t in range(T)]
    z = [masses(f"z.{t}", nz, "z") for t in range(T + 1)]

    stage = np.zeros((T, nx, nu))
    terminal = np.zeros(nx)
    for key, value, line in r.items("costs"):
        head, _, rest = key.partition(":")
        head = head.strip()
        parts = _split(rest)
        try:
            v = float(value)
        except ValueError:
            raise ScenarioParseError(f"cost value {value!r} is not a number", line, "costs") from None
        if head == "terminal" and len(parts) == 1:
            terminal[state_index(parts[0], "costs", line)] = v
        elif (head == "stage" or head.startswith("stage.")) and len(parts) == 2:
            x = state_index(parts[0], "costs", line)
            u = lookup("control", labels["controls"], parts[1], "costs", line)
            if head == "stage":
                stage[:, x, u] = v
            else:
                t = int(head.split(".", 1)[1])
                if not 0 <= t < T:
                    raise ScenarioParseError(f"stage time {t} outside horizon", line, "costs")
                stage[t, x, u] = v
        else:
            raise ScenarioParseError(f"unrecognized cost row {key!r}", line, "costs")

    return FiniteScenario(
        horizon=T, state_values=state_values, model_next=tables["model"], actual_next=tables["actual"],
        obs_map=obs, x0_prob=x0, w_prob=w, z_prob=z, stage_cost=stage, terminal_cost=terminal,
        beta=beta, n_obs=len(labels["observations"]), control_labels=tuple(labels["controls"]),
        observation_labels=tuple(labels["observations"]),
        disturbance_labels=tuple(labels["disturbances"]), noise_labels=tuple(labels["noises"]),
        name=name,
    )


def _parse_linear(r: _Reader, T: int, beta: float, name: str) -> LinearGaussianScenario:
    def gauss(key):
        v = r.floats("primitives", key)
        if len(v) != 2:
            raise ScenarioParseError(f"{key!r} needs 'mean, variance'", r.line("primitives", key), "primitives")
        return Gaussian1D(*v)

    def law(prefix, n):
        if r.parser.has_option("primitives", prefix):
            return (gauss(prefix),) * n
        return tuple(gauss(f"{prefix}.{t}") for t in range(n))

    controls = r.get("spaces", "controls", "real")
    bounds = (-math.inf, math.inf)
    if controls.strip() != "real":
        lohi = r.floats("spaces", "controls")
        if len(lohi) != 2:
            raise ScenarioParseError("controls must be 'real' or 'lo, hi'", r.line("spaces", "controls"), "spaces")
        bounds = tuple(lohi)
    return LinearGaussianScenario(
        horizon=T,
        a=r.floats("model", "a"), b=r.floats("model", "b"), c=r.floats("model", "c"),
        a_hat=r.floats("actual", "a"), b_hat=r.floats("actual", "b"), c_hat=r.floats("actual", "c"),
        x0=gauss("x0"), w=law("w", T), z=law("z", T + 1),
        x0_w0_covariance=r.floats("primitives", "x0_w0_covariance", "0")[0],
        obs_noise_gain=r.floats("observation", "noise_gain", "0")[0],
        state_weight=r.floats("costs", "state_weight"),
        control_weight=r.floats("costs", "control_weight"),
        terminal_weight=r.floats("costs", "terminal_weight")[0],
        beta=beta, control_bounds=bounds, name=name,
    )


def load_scenario(path) -> object:
    """Read and validate a scenario file, or resolve a built-in by name."""
    return load_scenario_file(path).scenario


def load_scenario_file(path) -> ScenarioFile:
    key = str(path)
    if key in BUILTINS and not Path(key).exists():
        scenario = BUILTINS[key]()
        return ScenarioFile(None, scenario, serialize_scenario(scenario))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from exc
    return ScenarioFile(key, parse_scenario(text), text)


def save_scenario(scenario, path) -> None:
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")


def scenarios_equal(a, b) -> bool:
    """Structural equality of two scenarios (same canonical form)."""
    return type(a) is type(b) and serialize_scenario(a) == serialize_scenario(b)
