import subprocess
import sys


from sepctrl import __version__
from sepctrl.cli import main
from sepctrl.scenarios import builtin_discrete_toy, scenario_hash


def run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_verify_toy_passes(tmp_path, capsys):
    assert run(tmp_path, "verify", "--scenario", "toy", "--rollouts", "500") == 0
    text = (tmp_path / "verify.csv").read_text()
    assert "FAIL" not in text


def test_verify_lqg_passes(tmp_path):
    assert run(tmp_path, "verify", "--scenario", "lqg", "--rollouts", "500") == 0


def test_solve_lqg_lists_both_solutions(tmp_path):
    assert run(tmp_path, "solve", "--scenario", "lqg") == 0
    text = (tmp_path / "lqg_strategy.csv").read_text()
    assert "stated,0.5,0.0,-0.25" in text
    assert "oracle,-1.5" in text


def test_solve_toy_writes_value_table(tmp_path):
    assert run(tmp_path, "solve", "--scenario", "toy") == 0
    text = (tmp_path / "value_table.csv").read_text()
    assert scenario_hash(builtin_discrete_toy()) in text and __version__ in text


def test_zero_rollouts_is_a_usage_error(tmp_path):
    assert run(tmp_path, "simulate", "--scenario", "toy", "--rollouts", "0") == 2


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[meta]\nschema = 1\n")
    assert run(tmp_path, "solve", "--scenario", str(bad)) == 3


def test_insufficient_data_exit_code(tmp_path):
    assert run(tmp_path, "learn", "--scenario", "toy", "--rollouts", "1") == 5


def test_learn_writes_sidecar_and_curve(tmp_path):
    assert run(tmp_path, "learn", "--scenario", "toy", "--rollouts", "5000") == 0
    assert (tmp_path / "counts.csv").read_text().startswith("# sepctrl-counts v1")
    assert "samples,max_tv" in (tmp_path / "tv_curve.csv").read_text()


def test_report_tables(tmp_path):
    assert run(tmp_path, "report", "--scenario", "lqg", "--rollouts", "1000") == 0
    for name in ("cost_vs_samples.csv", "penalty_per_step.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0].startswith("# scenario=") and __version__ in lines[0]


def test_beta_override_changes_hash(tmp_path):
    assert run(tmp_path, "simulate", "--scenario", "toy", "--rollouts", "10", "--beta", "2") == 0
    head = (tmp_path / "run_log.csv").read_text().splitlines()[1]
    assert scenario_hash(builtin_discrete_toy().with_beta(2.0)) in head


def test_artifacts_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--scenario", "lqg", "--rollouts", "50", "--seed", "3", "--out", str(d)]) == 0
    for name in ("run_log.csv", "simulate_summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "sepctrl.cli", "nonsense"], capture_output=True, text=True)
    assert proc.returncode == 2
