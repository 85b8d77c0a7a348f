"""Command line: ``sepctrl {solve,simulate,learn,verify,report}``.

Every table starts with a comment line carrying the scenario hash and the tool
version, followed by a comma-separated header row.  Nothing time-dependent is
written, so the same command and seed reproduce the same bytes.

Exit codes: 0 success, 2 usage, 3 parse, 4 verification or resolution
failure, 5 insufficient data.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .core import FiniteScenario, SepCtrlError, UnsupportedRepresentationError
from .enumeration import (as_history_strategy, conditional_joint, constant_strategy, enumerate_rollouts,
                          exact_costs)
from .filtering import (actual_history_weights, actual_kernel, factorize, filter_vs_enumeration,
                        initial_model_belief, theta_update, verify_policy_independence)
from .harness import (LinearController, MatchingController, run_log, simulate_batch,
                      cost_transfer_audit)
from .learner import (EmpiricalConditional, ExactBeliefSource, LearnedBeliefSource, exact_conditional,
                      instantiate_strategy, sample_records, tv_distance)
from .scenarios import load_scenario, scenario_hash
from .solver import (STATED_SOLUTION, dp_solve, exhaustive_oracle, initial_value, lqg_stagewise_solve, make_grid,
                     separated_strategy_costs, to_history_strategy, write_value_table)

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 2, 4
TOL = 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 2, as argparse does, without the traceback noise
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sepctrl", description="Separated learning and control toolkit.")
    p.add_argument("--version", action="version", version=f"sepctrl {__version__}")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb, help_text in [("solve", "offline strategy tables"), ("simulate", "parallel rollouts and run logs"),
                            ("learn", "empirical conditional and learned-state diagnostics"),
                            ("verify", "oracle checks with pass/fail"), ("report", "tables for plotting")]:
        q = sub.add_parser(verb, help=help_text)
        q.add_argument("--scenario", required=True, help="scenario file or builtin name (lqg, toy, decoupled_toy)")
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--rollouts", type=int, default=10**4)
        q.add_argument("--beta", type=float, default=None, help="override the penalty weight")
        q.add_argument("--grid-delta", type=float, default=None,
                       help="simplex grid resolution; default is the exact reachable grid")
        q.add_argument("--smoothing-alpha", type=float, default=0.0)
        q.add_argument("--out", default="sepctrl-out", help="output directory")
    return p


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


class _Out:
    def __init__(self, directory: str, shash: str):
        self.dir = directory
        self.hash = shash
        os.makedirs(directory, exist_ok=True)

    def table(self, name: str, header, rows) -> str:
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# scenario={self.hash} tool=sepctrl {__version__}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return path

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "FAIL"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _say(msg: str) -> None:
    print(msg)


def _finite_solution(s: FiniteScenario, delta: Optional[float]):
    grid = make_grid(s, delta)
    vf, strategy = dp_solve(s, grid)
    return vf, strategy


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------


def cmd_solve(s, args, out: _Out) -> int:
    if isinstance(s, FiniteScenario):
        vf, strategy = _finite_solution(s, args.grid_delta)
        path = out.path("value_table.csv")
        write_value_table(path, vf, strategy, out.hash, s.beta)
        v0 = initial_value(s, vf)
        out.table("solve_summary.csv", ["quantity", "value"],
                  [("V0", v0), ("grid", vf.grid.kind), ("grid_points_t0", vf.grid.size(0))])
        _say(f"V0 = {v0:.12g}; value table written to {path}")
        return EXIT_OK
    rep = lqg_stagewise_solve(s)
    rows = [(name, a, b, c, cost) for name, a, b, c, cost in rep.rows()]
    out.table("lqg_strategy.csv", ["source", "a", "b", "c", "exact_cost"], rows)
    _say("u0 = a*x0, u1 = b*x_hat_1 + c*x0")
    for row in rows:
        _say("  {:<13} a={:+.4f} b={:+.4f} c={:+.4f} cost={:.6g}".format(*row))
    _say(rep.discrepancy)
    return EXIT_OK


def _controller_for(s, args):
    if isinstance(s, FiniteScenario):
        _, strategy = _finite_solution(s, args.grid_delta)
        return instantiate_strategy(strategy, ExactBeliefSource(s, strategy.scenario_hash))
    return MatchingController(s)


def cmd_simulate(s, args, out: _Out) -> int:
    ctrl = _controller_for(s, args)
    log = run_log(s, ctrl, args.rollouts, args.seed, out.hash)
    log.write(out.path("run_log.csv"))
    summ = log.summary()
    rows = [("J_hat", summ["J_hat"]), ("J", summ["J"])]
    rows += [(k, v) for k, v in summ.items() if k.startswith("penalty")]
    audits = [cost_transfer_audit(tr, s) for tr in log.trajectories]
    rows.append(("zero_penalty_rollouts", sum(a.zero_penalty for a in audits)))
    rows.append(("cost_transfer_holds", all(a.holds for a in audits)))
    out.table("simulate_summary.csv", ["quantity", "value"], rows)
    _say(f"{args.rollouts} rollouts: J_hat={summ['J_hat']:.6g} J={summ['J']:.6g} (J averaged over realizations)")
    return EXIT_OK


def cmd_learn(s, args, out: _Out) -> int:
    if not isinstance(s, FiniteScenario):
        raise UnsupportedRepresentationError("learning runs on finite scenarios")
    _, strategy = _finite_solution(s, args.grid_delta)
    hs = to_history_strategy(s, strategy)
    u, yh = sample_records(s, hs, args.rollouts, args.seed)
    emp = EmpiricalConditional(s.ny, args.smoothing_alpha).record_arrays(u, yh)
    emp.write_sidecar(out.path("counts.csv"), {"scenario": out.hash, "tool": f"sepctrl-{__version__}"})
    curve = _tv_curve(s, hs, u, yh, args.smoothing_alpha)
    out.table("tv_curve.csv", ["samples", "max_tv"], curve)
    src = LearnedBeliefSource(s, emp, strategy.scenario_hash)
    rows = []
    r = enumerate_rollouts(s, hs)
    for t in range(s.horizon + 1):
        for (ys, us), joint in sorted(conditional_joint(s, r, t).items()):
            info = src.information_state(t, ys, us)
            rows.append((t, _hist(ys), _hist(us), info.samples, 0.5 * float(np.abs(info.joint - joint).sum())))
    out.table("learned_state.csv", ["t", "y_history", "u_history", "samples", "tv_to_true_joint"], rows)
    _say(f"recorded {emp.total} rollouts; final max TV {curve[-1][1]:.4g}")
    return EXIT_OK


def _hist(h) -> str:
    return " ".join(str(v) for v in h)


def _tv_curve(s, hs, u, yh, alpha):
    exact = {t: exact_conditional(s, hs, t) for t in range(s.horizon + 1)}
    n = u.shape[0]
    sizes = sorted({max(1, n >> k) for k in range(0, 12)})
    rows = []
    for m in sizes:
        emp = EmpiricalConditional(s.ny, alpha).record_arrays(u[:m], yh[:m])
        worst = 0.0
        for t, table in exact.items():
            for us, dist in table.items():
                if emp.n_obs(us) == 0 and alpha == 0:
                    worst = 1.0
                    continue
                worst = max(worst, tv_distance(emp.query(us), dist))
        rows.append((m, worst))
    return rows


def _finite_checks(s: FiniteScenario, args):
    checks = []
    strategies = [constant_strategy(s, 0), constant_strategy(s, 1),
                  as_history_strategy(s, lambda t, ys, us: ys[-1], "y-feedback"),
                  as_history_strategy(s, lambda t, ys, us: 1 - ys[-1], "y-inverse"),
                  as_history_strategy(s, lambda t, ys, us: (sum(ys) + t) % s.nu, "parity")]
    pairs = [(strategies[i], strategies[j]) for i in range(len(strategies)) for j in range(i + 1, len(strategies))]
    worst = max(verify_policy_independence(s, a, b).max_discrepancy for a, b in pairs)
    checks.append(("policy independence", f"{len(pairs)} pairs", worst, worst <= TOL))
    fw = max(filter_vs_enumeration(s, g) for g in strategies)
    checks.append(("filter vs enumeration", "max abs error", fw, fw <= TOL))

    vf, strategy = _finite_solution(s, args.grid_delta)
    v0 = initial_value(s, vf)
    best, _ = exhaustive_oracle(s)
    gap = abs(v0 - best)
    checks.append(("dp vs exhaustive oracle", f"V0={v0:.12g} oracle={best:.12g}", gap, gap <= TOL))
    costs = separated_strategy_costs(s)
    slack = v0 - min(costs)
    checks.append(("V0 below every separated strategy", f"{len(costs)} strategies", max(slack, 0.0), slack <= TOL))

    hs = to_history_strategy(s, strategy)
    j, j_hat = exact_costs(s, hs)
    checks.append(("cost transfer: instantiated J equals V0", f"J={j:.12g} J_hat={j_hat:.12g}", abs(j - v0),
                   abs(j - v0) <= TOL))
    ctrl = instantiate_strategy(strategy, ExactBeliefSource(s, strategy.scenario_hash))
    n = min(args.rollouts, 2000)
    b = simulate_batch(s, ctrl, n, args.seed)
    gaps = np.abs(s.state_values[b.x[:, 1:]] - s.state_values[b.x_hat[:, 1:]]).max(axis=1)
    zero = gaps <= 1e-9
    diff = np.abs(b.model_total - b.actual_total)[zero]
    worst_diff = float(diff.max()) if diff.size else 0.0
    checks.append(("zero penalty implies equal costs", f"{int(zero.sum())}/{n} zero-penalty rollouts", worst_diff,
                   worst_diff <= 1e-9))
    return checks, _factorization_note(s, strategies)


def _factorization_note(s, strategies):
    worst = 0.0
    kernel = actual_kernel(s, 0)
    for g in strategies:
        r = enumerate_rollouts(s, g)
        for t in range(s.horizon + 1):
            for (ys, us), joint in conditional_joint(s, r, t).items():
                weights, beliefs = actual_history_weights(s, us, kernel)
                mb = initial_model_belief(s, ys[0])
                for k in range(t):
                    mb = theta_update(s, k, mb, ys[k + 1], us[k])
                worst = max(worst, float(np.abs(factorize(mb, beliefs, weights, t).joint - joint).max()))
    return ("product-form factorization (informational)", "max abs error vs enumerated joint", worst, worst <= TOL)


def _linear_checks(s, args):
    checks = []
    ctrl = MatchingController(s)
    n = args.rollouts
    b = simulate_batch(s, ctrl, n, args.seed)
    gap = float(np.abs(b.x[:, 1:] - b.x_hat[:, 1:]).max())
    checks.append(("matching control zeroes the penalty", f"{n} rollouts", gap, gap < 1e-9))
    diff = float(np.abs(b.model_total - b.actual_total).max())
    checks.append(("model cost equals actual cost", f"{n} rollouts", diff, diff <= 1e-9))
    rep = lqg_stagewise_solve(s)
    oracle = rep.oracle
    cond_gap = rep.costs["conditional"] - rep.costs["oracle"]
    checks.append(("stagewise conditional solution attains oracle", f"a={rep.conditional['a']:.4f} "
                   f"b={rep.conditional['b']:.4f} c={rep.conditional['c']:.4f}", cond_gap, cond_gap <= 1e-6))
    info = [("reported coefficients (informational)",
             "a={a} b={b} c={c} ".format(**STATED_SOLUTION) + f"cost={rep.costs['stated']:.6g} "
             f"vs oracle a={oracle['a']:.4f} b={oracle['b']:.4f} c={oracle['c']:.4f} cost={oracle['cost']:.6g}",
             rep.costs["stated"] - oracle["cost"], None)]
    return checks, info


def cmd_verify(s, args, out: _Out) -> int:
    if isinstance(s, FiniteScenario):
        checks, note = _finite_checks(s, args)
        info = [note]
    else:
        checks, info = _linear_checks(s, args)
    rows = [(name, detail, value, ok) for name, detail, value, ok in checks]
    rows += [(name, detail, value, "info") for name, detail, value, _ in info]
    out.table("verify.csv", ["check", "detail", "value", "status"], rows)
    for name, detail, value, ok in checks:
        _say(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({value:.3g})")
    for name, detail, value, _ in info:
        _say(f"[INFO] {name}: {detail} ({value:.3g})")
    return EXIT_OK if all(ok for *_, ok in checks) else EXIT_VERIFY


def cmd_report(s, args, out: _Out) -> int:
    n = args.rollouts
    sizes = sorted({max(1, n >> k) for k in range(0, 10)})
    if isinstance(s, FiniteScenario):
        _, strategy = _finite_solution(s, args.grid_delta)
        hs = to_history_strategy(s, strategy)
        ctrls = [("separated", instantiate_strategy(strategy, ExactBeliefSource(s, strategy.scenario_hash)),
                  exact_costs(s, hs)[1])]
        u, yh = sample_records(s, hs, n, args.seed)
        out.table("tv_vs_samples.csv", ["samples", "max_tv"], _tv_curve(s, hs, u, yh, args.smoothing_alpha))
    else:
        rep = lqg_stagewise_solve(s)
        o = rep.oracle
        ctrls = [("matching", MatchingController(s), None),
                 ("stated", LinearController(**STATED_SOLUTION), rep.costs["stated"]),
                 ("oracle", LinearController(o["a"], o["b"], o["c"]), rep.costs["oracle"])]
    cost_rows, pen_rows = [], []
    for name, ctrl, exact in ctrls:
        b = simulate_batch(s, ctrl, n, args.seed)
        for m in sizes:
            v = b.actual_total[:m]
            se = float(np.std(v, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
            cost_rows.append((name, m, float(v.mean()), se, "" if exact is None else exact))
        for t, p in enumerate(b.penalty.mean(axis=0)):
            pen_rows.append((name, t, float(p)))
    out.table("cost_vs_samples.csv", ["controller", "samples", "J_hat", "std_error", "exact"], cost_rows)
    out.table("penalty_per_step.csv", ["controller", "t", "mean_penalty"], pen_rows)
    _say(f"tables written to {out.dir}")
    return EXIT_OK


VERBS = {"solve": cmd_solve, "simulate": cmd_simulate, "learn": cmd_learn, "verify": cmd_verify,
         "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.rollouts < 1:
        print("sepctrl: error: --rollouts must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    if args.smoothing_alpha < 0:
        print("sepctrl: error: --smoothing-alpha must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    try:
        s = load_scenario(args.scenario)
        if args.beta is not None:
            s = s.with_beta(args.beta)
        out = _Out(args.out, scenario_hash(s))
        return VERBS[args.verb](s, args, out)
    except SepCtrlError as exc:
        print(f"sepctrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sepctrl: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
