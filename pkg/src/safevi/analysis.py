"""Threshold sweeps and brute-force checks of the constrained-optimality properties.

Property checks enumerate every deterministic policy and evaluate each one
exactly, so they only run below the enumeration cap. Implications whose
premise is false are counted as passes but reported as vacuous.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exact import DEFAULT_CAP, PolicySpaceTooLarge, count_policies, enumerate_policies, evaluate_policy
from .mdp import MdpSpec, Policy, ValueTables
from .naive import bellman_step, naive_value_iteration
from .recursive import recursive_value_iteration

CMP_TOL = 1e-10
P3_NOTE = "P3 is checked on solver outputs, so it tests the solver rather than the assumed optimal policy"


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "recursive"
    k: int | None = None
    horizon: int = 15
    init_p: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.mode not in ("naive", "recursive"):
            raise ValueError(f"unknown solver mode {self.mode!r}")

    @property
    def iterations(self) -> int:
        if self.k is not None:
            return self.k
        return 50 if self.mode == "naive" else 15


@dataclass(frozen=True, eq=False)
class SolveResult:
    policy: Policy
    values: ValueTables      # the solver's own estimate tables at termination
    feasible: np.ndarray     # bool[S, A], final constrained action sets
    converged: bool


def solve(spec: MdpSpec, theta: float, config: SolverConfig) -> SolveResult:
    if config.mode == "naive":
        policy, values, trace = naive_value_iteration(spec, theta, config.iterations, init_p=config.init_p)
        feasible = spec.available & (values.p <= theta)
        return SolveResult(policy, values, feasible, trace.converged)
    policy, stack, report = recursive_value_iteration(spec, theta, config.iterations, config.horizon)
    return SolveResult(policy, stack.stage(stack.horizon), stack.constraint[-1], report.converged)


@dataclass(frozen=True)
class SweepRecord:
    theta: float
    p_true: float
    p_est: float
    v_true: float
    v_est: float
    converged: bool
    violation: bool
    feasible: bool = True
    error: str | None = None


def _sweep_one(args) -> SweepRecord:
    spec, config, theta, s0 = args
    try:
        res = solve(spec, theta, config)
        a0 = res.policy[s0]
        p_est = float(res.values.p[s0, a0])
        v_est = float(res.values.q[s0, a0])
        feasible = bool(res.feasible[s0].any())
        ev = evaluate_policy(spec, res.policy)
    except ValueError as exc:
        nan = float("nan")
        return SweepRecord(theta, nan, nan, nan, nan, False, False, False, error=str(exc))
    p_true, v_true = float(ev.p[s0]), float(ev.v[s0])
    return SweepRecord(
        theta=theta, p_true=p_true, p_est=p_est, v_true=v_true, v_est=v_est,
        converged=res.converged, violation=bool(p_est <= theta < p_true), feasible=feasible,
    )


def sweep_theta(
    spec: MdpSpec,
    config: SolverConfig,
    thetas: Sequence[float],
    start: int | str,
    jobs: int = 1,
) -> list[SweepRecord]:
    """One independent solve per threshold, each re-evaluated exactly at ``start``.

    Errors are recorded per threshold instead of aborting the sweep.
    """
    s0 = spec.state_index(start)
    if spec.terminal[s0]:
        raise ValueError(f"start state {spec.state_names[s0]} is terminal")
    thetas = sorted(float(t) for t in thetas)
    if any(not 0.0 <= t < 1.0 for t in thetas):
        raise ValueError("thresholds must lie in [0, 1)")
    tasks = [(spec, config, t, s0) for t in thetas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]


# --- property checks -------------------------------------------------------

@dataclass(eq=False)
class PropertyResult:
    """Outcome of one property check.

    ``status`` is one of "pass", "fail", "not checked", "not evaluable".
    For implication checks ``premise`` and ``conclusion`` hold the truth
    value per (competitor policy, state) pair; pairs outside the quantified
    state set are False in both.
    """

    name: str
    status: str
    witnesses: list[dict] = field(default_factory=list)
    vacuous: int = 0
    checked: int = 0
    premise: np.ndarray | None = None
    conclusion: np.ndarray | None = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(eq=False)
class PropertyReport:
    theta: float | None
    results: list[PropertyResult]
    header: str = ""

    def get(self, name: str) -> PropertyResult:
        for res in self.results:
            if res.name == name:
                return res
        raise KeyError(name)

    def render(self) -> str:
        lines = []
        if self.header:
            lines.append(f"# {self.header}")
        for res in self.results:
            extra = f" checked={res.checked} vacuous={res.vacuous}" if res.checked else ""
            lines.append(f"{res.name}\t{res.status}{extra}" + (f"\t{res.note}" if res.note else ""))
            for w in res.witnesses[:5]:
                lines.append("  witness " + " ".join(f"{k}={_fmt(v)}" for k, v in w.items()))
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _policy_label(spec: MdpSpec, policy: Policy) -> str:
    return ",".join(
        f"{spec.state_names[s]}:{spec.action_names[policy[s]]}"
        for s in np.flatnonzero(spec.nonterminal)
    )


def _all_evaluations(spec: MdpSpec, cap: int):
    pols = list(enumerate_policies(spec, cap))
    return pols, [evaluate_policy(spec, pol) for pol in pols]


def _not_checked(name: str, exc: PolicySpaceTooLarge) -> PropertyResult:
    return PropertyResult(name, "not checked", note=str(exc))


def check_p1(spec: MdpSpec, theta: float, candidate: Policy, cap: int = DEFAULT_CAP) -> list[PropertyResult]:
    """Pareto optimality of ``candidate`` against every deterministic policy.

    On the candidate's safe states: lower-or-equal reachability implies
    lower-or-equal value. On its unsafe states: higher-or-equal value implies
    higher-or-equal reachability. Also checks that the candidate's action is
    a Q-maximiser among actions no riskier than the candidate itself.
    """
    names = ("P1-performance", "P1-safety", "P1-argmax")
    try:
        pols, evs = _all_evaluations(spec, cap)
    except PolicySpaceTooLarge as exc:
        return [_not_checked(n, exc) for n in names]
    ref = evaluate_policy(spec, candidate)
    safe = ref.p <= theta
    unsafe = ~safe
    vs = np.array([ev.v for ev in evs])
    ps = np.array([ev.p for ev in evs])

    perf_premise = (ps <= ref.p + CMP_TOL) & safe
    perf_concl = (vs <= ref.v + CMP_TOL) & safe
    safety_premise = (ref.v <= vs + CMP_TOL) & unsafe
    safety_concl = (ref.p <= ps + CMP_TOL) & unsafe

    out = []
    for name, region, prem, concl, kind in (
        (names[0], safe, perf_premise, perf_concl, "performance"),
        (names[1], unsafe, safety_premise, safety_concl, "safety"),
    ):
        witnesses = []
        for i, s in zip(*np.nonzero(prem & ~concl)):
            witnesses.append({
                "state": spec.state_names[s], "policy": _policy_label(spec, pols[i]),
                "P_other": float(ps[i, s]), "P_cand": float(ref.p[s]),
                "V_other": float(vs[i, s]), "V_cand": float(ref.v[s]),
            })
        n_pairs = int(region.sum()) * len(pols)
        out.append(PropertyResult(
            name, "fail" if witnesses else "pass", witnesses,
            vacuous=n_pairs - int(prem.sum()), checked=n_pairs,
            premise=prem, conclusion=concl,
        ))

    witnesses = []
    checked = 0
    for s in np.flatnonzero(safe & spec.nonterminal):
        checked += 1
        acts = [a for a in spec.actions_of(s) if ref.p_action[s, a] <= ref.p[s] + CMP_TOL]
        best = max(ref.q[s, a] for a in acts)
        if ref.q[s, candidate[s]] < best - CMP_TOL:
            witnesses.append({
                "state": spec.state_names[s], "action": spec.action_names[candidate[s]],
                "Q_cand": float(ref.q[s, candidate[s]]), "Q_best": float(best),
            })
    out.append(PropertyResult(names[2], "fail" if witnesses else "pass", witnesses, checked=checked))
    return out


def check_p2(spec: MdpSpec, theta: float, candidate: Policy, cap: int = DEFAULT_CAP) -> PropertyResult:
    """Least-unsafe check over the candidate's unsafe states.

    Competitors are the policies that agree with the candidate on its
    non-terminal safe states.
    """
    try:
        pols, evs = _all_evaluations(spec, cap)
    except PolicySpaceTooLarge as exc:
        return _not_checked("P2", exc)
    ref = evaluate_policy(spec, candidate)
    safe = ref.p <= theta
    unsafe = ~safe
    fixed = np.flatnonzero(safe & spec.nonterminal)
    witnesses = []
    checked = 0
    for pol, ev in zip(pols, evs):
        if any(pol[s] != candidate[s] for s in fixed):
            continue
        for s in np.flatnonzero(unsafe):
            checked += 1
            if ref.p[s] > ev.p[s] + CMP_TOL:
                witnesses.append({
                    "state": spec.state_names[s], "policy": _policy_label(spec, pol),
                    "P_other": float(ev.p[s]), "P_cand": float(ref.p[s]),
                })
    note = "" if (unsafe & spec.nonterminal).any() else "vacuous on non-terminal states"
    return PropertyResult("P2", "fail" if witnesses else "pass", witnesses, checked=checked, note=note)


def check_p3(
    spec: MdpSpec,
    theta_pairs: Sequence[tuple[float, float]],
    solver: Callable[[float], tuple[Policy, bool]],
) -> PropertyResult:
    """Monotonicity of solver outputs in the threshold, evaluated exactly.

    ``solver(theta)`` returns ``(policy, converged)``.
    """
    witnesses = []
    checked = 0
    for lo, hi in theta_pairs:
        if lo > hi:
            raise ValueError(f"threshold pair ({lo}, {hi}) is not ordered")
        pol_lo, ok_lo = solver(lo)
        pol_hi, ok_hi = solver(hi)
        if not (ok_lo and ok_hi):
            return PropertyResult(
                "P3", "not evaluable", note=f"solver did not converge at theta in ({lo}, {hi})",
            )
        ev_lo, ev_hi = evaluate_policy(spec, pol_lo), evaluate_policy(spec, pol_hi)
        safe_hi = ev_hi.p <= hi
        for s in range(spec.n_states):
            checked += 1
            if safe_hi[s] and ev_lo.v[s] > ev_hi.v[s] + CMP_TOL:
                witnesses.append({"pair": f"{lo}:{hi}", "state": spec.state_names[s], "quantity": "V",
                                  "lo": float(ev_lo.v[s]), "hi": float(ev_hi.v[s])})
            if ev_lo.p[s] > ev_hi.p[s] + CMP_TOL:
                witnesses.append({"pair": f"{lo}:{hi}", "state": spec.state_names[s], "quantity": "P",
                                  "lo": float(ev_lo.p[s]), "hi": float(ev_hi.p[s])})
    return PropertyResult("P3", "fail" if witnesses else "pass", witnesses, checked=checked, note=P3_NOTE)


@dataclass(frozen=True, eq=False)
class P4Residual:
    residual: float
    policy_before: Policy
    policy_after: Policy
    policy_changed: bool


def check_p4_residual(
    spec: MdpSpec, theta: float, values: ValueTables, policy: Policy | None = None,
) -> P4Residual:
    """Sup-norm distance between ``values`` and one application of the threshold operator.

    ``policy_before`` is ``policy`` if given (the policy the tables belong
    to), else the greedy policy of the input tables; ``policy_after`` is the
    greedy policy of the output tables.
    """
    new, used = bellman_step(spec, theta, values)
    if policy is None:
        before, after = used, bellman_step(spec, theta, new)[1]
    else:
        before, after = policy, used
    residual = new.sup_distance(values, spec.available)
    return P4Residual(residual, before, after, before != after)


def p4_result(spec: MdpSpec, theta: float, policy: Policy, tol: float = 1e-8) -> PropertyResult:
    ev = evaluate_policy(spec, policy)
    res = check_p4_residual(spec, theta, ValueTables(ev.q, ev.p_action), policy)
    ok = res.residual < tol and not res.policy_changed
    witnesses = [] if ok else [{
        "residual": res.residual,
        "before": _policy_label(spec, res.policy_before),
        "after": _policy_label(spec, res.policy_after),
    }]
    return PropertyResult("P4", "pass" if ok else "fail", witnesses)


def property_report(
    spec: MdpSpec,
    theta: float,
    candidate: Policy,
    props: Sequence[str],
    solver: Callable[[float], tuple[Policy, bool]] | None = None,
    theta_pairs: Sequence[tuple[float, float]] = (),
    cap: int = DEFAULT_CAP,
) -> PropertyReport:
    results: list[PropertyResult] = []
    for prop in props:
        if prop == "p1":
            results.extend(check_p1(spec, theta, candidate, cap))
        elif prop == "p2":
            results.append(check_p2(spec, theta, candidate, cap))
        elif prop == "p3":
            if solver is None:
                raise ValueError("P3 needs a solver")
            results.append(check_p3(spec, theta_pairs or [(theta, theta)], solver))
        elif prop == "p4":
            results.append(p4_result(spec, theta, candidate))
        else:
            raise ValueError(f"unknown property {prop!r}")
    header = f"theta={theta} candidate={_policy_label(spec, candidate)} policies={count_policies(spec)}"
    if "p3" in props:
        header += f"; {P3_NOTE}"
    return PropertyReport(theta, results, header)
