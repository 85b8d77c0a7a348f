import numpy as np
import pytest

from sepctrl.core import InvariantViolation
from sepctrl.scenarios import (BUILTINS, ScenarioParseError, load_scenario, parse_scenario, save_scenario,
                               scenario_hash, scenarios_equal, serialize_scenario)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_round_trip(name, tmp_path):
    s = BUILTINS[name]()
    again = parse_scenario(serialize_scenario(s))
    assert scenarios_equal(s, again)
    assert scenario_hash(s) == scenario_hash(again)
    path = tmp_path / f"{name}.ini"
    save_scenario(s, path)
    assert scenarios_equal(load_scenario(path), s)


def test_builtin_names_resolve():
    assert load_scenario("toy").name == BUILTINS["toy"]().name


def test_hash_tracks_beta(toy):
    assert scenario_hash(toy) != scenario_hash(toy.with_beta(1.0))


def test_missing_section_is_reported(toy):
    text = serialize_scenario(toy)
    start = text.index("[actual]")
    end = text.index("[", start + 1)
    with pytest.raises(ScenarioParseError, match=r"\[actual\]"):
        parse_scenario(text[:start] + text[end:])


def test_bad_mass_is_an_invariant_violation(toy):
    text = serialize_scenario(toy)
    lines = text.splitlines()
    i = next(k for k, line in enumerate(lines) if line.replace(" ", "").startswith("x0="))
    lines[i] = "x0 = 0.5 0.6"
    with pytest.raises((InvariantViolation, ScenarioParseError)):
        parse_scenario("\n".join(lines))


def test_garbage_is_a_parse_error():
    with pytest.raises(ScenarioParseError):
        parse_scenario("this is not a scenario")


def test_lqg_builtin_values(lqg):
    assert lqg.horizon == 2
    assert lqg.a == (2.0, 2.0) and lqg.b == (3.0, 4.0) and lqg.c == (4.0, 0.0)
    assert lqg.a_hat == (1.0, 1.0) and lqg.b_hat == (1.0, 1.0) and lqg.c_hat == (1.0, 0.0)
    assert lqg.x0_w0_covariance == 0.5


def test_toy_actual_differs_in_one_entry(toy):
    diff = np.argwhere(toy.model_next != toy.actual_next)
    assert diff.tolist() == [[1, 1, 0]]
