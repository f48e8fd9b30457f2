"""Command-line entry point: ``safevi <subcommand> ...``.

Subcommands: ``env dump``, ``counter-eval``, ``vi``, ``pi-trace``, ``sweep``, ``check``.
Every subcommand accepts ``--config FILE`` with ``key = value`` lines naming
the same options; flags given on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import SolverConfig, property_report, solve, sweep_theta
from .environments import (
    COUNTER_START,
    CliffworldParams,
    CounterParams,
    build_cliffworld,
    build_counter_mdp,
    cliff_start,
)
from .exact import closed_form_counter, evaluate_policy
from .mdp import MdpSpec, Policy
from .naive import naive_policy_iteration, naive_value_iteration
from .recursive import recursive_policy_iteration, recursive_value_iteration
from .textformat import format_mdp, load_mdp

class UsageError(ValueError):
    """Mutually inconsistent flags; reported with exit status 2."""


SWEEP_HEADER = ["threshold", "P-values-true", "P-values-est", "V-values-true", "V-values-est"]


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def parse_cell(text: str) -> tuple[int, int]:
    x, y = text.split(",")
    return int(x), int(y)


def parse_thetas(text: str) -> list[float]:
    """``start:stop:step`` or a comma list. Values >= 1 are dropped."""
    if ":" in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ValueError("theta grid step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        values = [float(t) for t in text.split(",") if t.strip()]
    values = sorted(v for v in values if v < 1.0)
    if not values or values[0] < 0.0:
        raise ValueError(f"bad theta grid {text!r}")
    return values


def parse_pairs(text: str) -> list[tuple[float, float]]:
    pairs = []
    for item in text.split(","):
        lo, hi = item.split(":")
        pairs.append((float(lo), float(hi)))
    return pairs


# --- argument groups ------------------------------------------------------

def add_env_args(p: argparse.ArgumentParser, default_env: str = "counter") -> None:
    g = p.add_argument_group("environment")
    g.add_argument("--env", choices=["counter", "cliff"], default=default_env)
    g.add_argument("--mdp", help="load the MDP from a text file instead of --env")
    g.add_argument("--p", type=float, default=0.7, help="counter-MDP success probability")
    g.add_argument("--gamma", type=float, default=0.95)
    g.add_argument("--width", type=int, default=4)
    g.add_argument("--height", type=int, default=3)
    g.add_argument("--slip", type=float, default=0.5)
    g.add_argument("--slip-mode", choices=["include", "exclude"], default="include")
    g.add_argument("--start-cell", type=parse_cell, default=(0, 0))
    g.add_argument("--goal-cell", type=parse_cell, default=(3, 0))
    g.add_argument("--cliff", type=lambda s: tuple(parse_cell(c) for c in s.split(";") if c),
                   default=((1, 0), (2, 0)), help="cells as 'x,y;x,y'")
    g.add_argument("--start", help="start state name (default: environment start)")


def add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--mode", choices=["naive", "recursive"], default="recursive")
    g.add_argument("--theta", type=float, default=0.85)
    g.add_argument("--iterations", type=int, default=None,
                   help="k; defaults to 50 (naive) or 15 (recursive)")
    g.add_argument("--horizon", type=int, default=None, help="N, recursive mode only (default 15)")
    g.add_argument("--init-p", default="0", help="naive mode: constant in [0,1] or 'uniform'")
    g.add_argument("--seed", type=int, default=0)


def build_env(args) -> tuple[MdpSpec, str]:
    if args.mdp:
        spec = load_mdp(args.mdp)
        start = args.start
        if start is None:
            start = next(spec.state_names[s] for s in np.flatnonzero(spec.nonterminal))
        return spec, start
    if args.env == "counter":
        spec = build_counter_mdp(CounterParams(args.p, args.gamma))
        return spec, args.start or COUNTER_START
    params = CliffworldParams(
        width=args.width, height=args.height, slip=args.slip, gamma=args.gamma,
        start_cell=args.start_cell, goal_cell=args.goal_cell, cliff_cells=args.cliff,
        slip_mode=args.slip_mode,
    )
    return build_cliffworld(params), args.start or cliff_start(params)


def solver_config(args, spec: MdpSpec) -> SolverConfig:
    if args.mode == "naive" and args.horizon is not None:
        raise UsageError("--horizon only applies to --mode recursive")
    init_p: float | np.ndarray
    if args.init_p == "uniform":
        if args.mode != "naive":
            raise UsageError("--init-p only applies to --mode naive")
        init_p = np.random.default_rng(args.seed).uniform(size=(spec.n_states, spec.n_actions))
    else:
        init_p = float(args.init_p)
        if init_p != 0.0 and args.mode != "naive":
            raise UsageError("--init-p only applies to --mode naive")
    return SolverConfig(args.mode, args.iterations, args.horizon or 15, init_p)


def policy_label(spec: MdpSpec, policy: Policy) -> str:
    """``pi_<a>`` when a single state has a choice, else ``state:action`` pairs."""
    choice_states = [s for s in np.flatnonzero(spec.nonterminal) if len(spec.actions_of(s)) > 1]
    if len(choice_states) == 1:
        return f"pi_{spec.action_names[policy[choice_states[0]]]}"
    return ",".join(f"{spec.state_names[s]}:{spec.action_names[policy[s]]}" for s in np.flatnonzero(spec.nonterminal))


def parse_policy(spec: MdpSpec, text: str) -> Policy:
    """Either a single action name (used wherever available) or ``state=action,...``."""
    if "=" in text:
        mapping = dict(item.split("=") for item in text.split(","))
        return Policy.from_names(spec, mapping)
    a = spec.action_index(text)
    choice = [a if spec.available[s, a] else spec.actions_of(s)[0] for s in range(spec.n_states)]
    return Policy(tuple(choice))


# --- subcommands ----------------------------------------------------------

def cmd_env_dump(args, out) -> None:
    spec, _ = build_env(args)
    text = format_mdp(spec)
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)


def cmd_counter_eval(args, out) -> None:
    spec = build_counter_mdp(CounterParams(args.p, args.gamma))
    closed = closed_form_counter(args.p, args.gamma)
    s1 = spec.state_index("s1")
    evs = {b: evaluate_policy(spec, Policy.from_names(spec, {"s1": b})) for b in "LR"}
    out.write("quantity\tclosed_form\tlinear_system\tabs_deviation\n")
    worst = 0.0
    for name, value in closed._asdict().items():
        kind, (a, b) = name.split("_")[0], name.split("_")[1]
        ev = evs[b]
        table = ev.q if kind == "Q" else ev.p_action
        solved = float(table[s1, spec.action_index(a)])
        dev = abs(solved - value)
        worst = max(worst, dev)
        out.write(f"{name}\t{fmt(value)}\t{fmt(solved)}\t{dev:.3e}\n")
    out.write(f"max_abs_deviation\t{worst:.3e}\n")


def cmd_vi(args, out) -> None:
    spec, start = build_env(args)
    config = solver_config(args, spec)
    s0 = spec.state_index(start)
    lines = [("mode", config.mode), ("theta", fmt(args.theta)), ("iterations", str(config.iterations))]
    if config.mode == "naive":
        policy, values, trace = naive_value_iteration(spec, args.theta, config.iterations, init_p=config.init_p)
        lines += [
            ("converged", str(trace.converged).lower()),
            ("settled", str(trace.settled).lower()),
            ("oscillation_period", str(trace.oscillation_period or "none")),
        ]
    else:
        policy, stack, report = recursive_value_iteration(spec, args.theta, config.iterations, config.horizon)
        values = stack.stage(stack.horizon)
        lines += [
            ("horizon", str(config.horizon)),
            ("converged", str(report.converged).lower()),
            ("settled", str(report.settled).lower()),
            ("stabilization_horizon", str(report.stabilization)),
        ]
    ev = evaluate_policy(spec, policy)
    a0 = policy[s0]
    lines += [
        ("start", spec.state_names[s0]),
        ("P-true", fmt(ev.p[s0])),
        ("P-est", fmt(values.p[s0, a0])),
        ("V-true", fmt(ev.v[s0])),
        ("V-est", fmt(values.q[s0, a0])),
    ]
    buf = io.StringIO()
    for key, val in lines:
        buf.write(f"{key}\t{val}\n")
    for s in np.flatnonzero(spec.nonterminal):
        buf.write(f"policy\t{spec.state_names[s]}\t{spec.action_names[policy[s]]}\n")
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)


def render_trace(spec: MdpSpec, trace, state: int) -> str:
    """Tab-separated rows: iteration, given policy, per-action constraint truth and reachability at ``state``."""
    buf = io.StringIO()
    acts = spec.actions_of(state)
    for snap in trace.snapshots:
        cells = [str(snap.iteration), policy_label(spec, snap.policy)]
        cells += [f"constraint:{spec.action_names[a]}={str(bool(snap.constraint[state, a])).lower()}" for a in acts]
        cells += [f"P:{spec.action_names[a]}={fmt(snap.values.p[state, a])}" for a in acts]
        buf.write("\t".join(cells) + "\n")
    return buf.getvalue()


def cmd_pi_trace(args, out) -> None:
    spec, start = build_env(args)
    initial = parse_policy(spec, args.init_policy)
    runner = naive_policy_iteration if args.mode == "naive" else recursive_policy_iteration
    trace = runner(spec, args.theta, initial, args.iterations)
    text = render_trace(spec, trace, spec.state_index(start))
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)


def cmd_sweep(args, out) -> None:
    spec, start = build_env(args)
    config = solver_config(args, spec)
    records = sweep_theta(spec, config, parse_thetas(args.thetas), start, jobs=args.jobs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = SWEEP_HEADER + (["converged", "violation", "feasible"] if args.diagnostics else [])
    writer.writerow(header)
    for r in records:
        row = [fmt(r.theta), fmt(r.p_true), fmt(r.p_est), fmt(r.v_true), fmt(r.v_est)]
        if args.diagnostics:
            row += [str(r.converged).lower(), str(r.violation).lower(), str(r.feasible).lower()]
        writer.writerow(row)
    errors = [r for r in records if r.error]
    for r in errors:
        print(f"warning: theta={fmt(r.theta)}: {r.error}", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())


def cmd_check(args, out) -> None:
    spec, _ = build_env(args)
    config = solver_config(args, spec)
    props = [p.strip().lower() for p in args.props.split(",") if p.strip()]

    def solver(theta: float):
        res = solve(spec, theta, config)
        return res.policy, res.converged

    if args.candidate:
        candidate = parse_policy(spec, args.candidate)
    else:
        candidate = solver(args.theta)[0]
    pairs = parse_pairs(args.theta_pairs) if args.theta_pairs else []
    report = property_report(spec, args.theta, candidate, props, solver, pairs, cap=args.cap)
    text = report.render() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safevi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    env = sub.add_parser("env", help="environment utilities")
    env_sub = env.add_subparsers(dest="env_command", required=True)
    dump = env_sub.add_parser("dump", help="write an environment in the MDP text format")
    add_env_args(dump)
    dump.add_argument("--out")
    dump.set_defaults(func=cmd_env_dump)

    ce = sub.add_parser("counter-eval", help="closed-form vs linear-system values on the counter-MDP")
    ce.add_argument("--p", type=float, default=0.7)
    ce.add_argument("--gamma", type=float, default=0.95)
    ce.set_defaults(func=cmd_counter_eval)

    vi = sub.add_parser("vi", help="run naive or recursive value iteration")
    add_env_args(vi)
    add_solver_args(vi)
    vi.add_argument("--out")
    vi.set_defaults(func=cmd_vi)

    pt = sub.add_parser("pi-trace", help="policy-iteration trace in tabular form")
    add_env_args(pt)
    pt.add_argument("--mode", choices=["naive", "recursive"], default="naive")
    pt.add_argument("--theta", type=float, default=0.85)
    pt.add_argument("--init-policy", default="R")
    pt.add_argument("--iterations", type=int, default=20)
    pt.add_argument("--out")
    pt.set_defaults(func=cmd_pi_trace)

    sw = sub.add_parser("sweep", help="threshold sweep written as CSV")
    add_env_args(sw, default_env="cliff")
    add_solver_args(sw)
    sw.add_argument("--thetas", default="0:1:0.01")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--diagnostics", action="store_true", help="append converged/violation/feasible columns")
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)

    ck = sub.add_parser("check", help="brute-force property checks")
    add_env_args(ck)
    add_solver_args(ck)
    ck.add_argument("--props", default="p1,p2,p3,p4")
    ck.add_argument("--candidate", help="policy to check; default is the solver output at --theta")
    ck.add_argument("--theta-pairs", help="P3 pairs as 'lo:hi,lo:hi'")
    ck.add_argument("--cap", type=int, default=10**6)
    ck.add_argument("--out")
    ck.set_defaults(func=cmd_check)
    return parser


def _config_tokens(path: str) -> list[str]:
    tokens = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line without '=': {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() == "true":
            tokens.append(flag)
        elif value.lower() != "false":
            tokens += [flag, value]
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise SystemExit("safevi: error: --config needs a file")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    depth = 2 if rest[:1] == ["env"] else 1
    return rest[:depth] + _config_tokens(path) + rest[depth:]


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except (OSError, ValueError) as exc:
        print(f"safevi: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, out)
    except UsageError as exc:
        print(f"safevi: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"safevi: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
