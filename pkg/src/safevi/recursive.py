"""Dynamic programming with recursive (accumulated) safety constraints.

An action stays feasible at stage n only if it passed every threshold test
at stages 1..n. The stage-1 reachability is the one-step failure mass, which
no policy can perturb, so the constraint sets are anchored and shrink
monotonically along the horizon axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import MdpSpec, Policy, ValueTables
from .naive import (
    CONVERGENCE_TOL,
    SolveTrace,
    _policy_iteration,
    backup,
    get_policy,
    policy_settled,
)


@dataclass(eq=False)
class ReachStack:
    """Per-horizon tables, stage n at index n-1."""

    horizon: int
    p_hat: np.ndarray        # [N, S, A]
    q_hat: np.ndarray        # [N, S, A]
    constraint: np.ndarray   # bool[N, S, A], C_a(n; s) restricted to available actions

    def stage(self, n: int) -> ValueTables:
        return ValueTables(self.q_hat[n - 1], self.p_hat[n - 1])


@dataclass(eq=False)
class RecursiveSolveReport:
    policy: Policy
    stack: ReachStack
    set_sizes: np.ndarray                 # int[k, N, S], |A_hat(s)| after each stage
    stage_policies: list[Policy]          # policies of the final outer iteration, stage 1..N
    outer_policies: list[Policy] = field(default_factory=list)
    outer_changes: list[float] = field(default_factory=list)
    stabilization: int | None = None
    converged: bool = False
    settled: bool = False

    @property
    def final_sets(self) -> np.ndarray:
        return self.stack.constraint


def recursive_policy_iteration(spec: MdpSpec, theta: float, initial: Policy, iterations: int = 20) -> SolveTrace:
    """Policy iteration whose feasibility flags are the running conjunction of all past tests."""
    return _policy_iteration(spec, theta, initial, iterations, accumulate=True)


def _shrink_all(spec: MdpSpec, p_hat: np.ndarray, theta: float) -> np.ndarray:
    allowed = spec.available.copy()
    masks = np.empty(p_hat.shape, dtype=bool)
    for n in range(p_hat.shape[0]):
        allowed = allowed & (p_hat[n] <= theta)
        masks[n] = allowed
    return masks


def _first_stable(masks: np.ndarray) -> int:
    m = masks.shape[0]
    while m > 1 and np.array_equal(masks[m - 2], masks[-1]):
        m -= 1
    return m


def recursive_value_iteration(
    spec: MdpSpec,
    theta: float,
    k: int = 15,
    horizon: int = 15,
    init_q: float = 0.0,
) -> tuple[Policy, ReachStack, RecursiveSolveReport]:
    """Value iteration over a horizon stack of reachability tables.

    Each outer pass walks n = 1..N: narrow the feasible set with the stage-n
    reachability, pick the stage policy, sweep Q^n once, and push the stage
    reachability one step further into stage n+1.
    """
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    if k < 1 or horizon < 1:
        raise ValueError("k and horizon must be >= 1")
    n_s, n_a = spec.n_states, spec.n_actions
    nt, term, avail = spec.nonterminal, spec.terminal, spec.available
    idx = np.arange(n_s)

    q_hat = np.zeros((horizon, n_s, n_a))
    p_hat = np.zeros((horizon, n_s, n_a))
    q_hat[:, nt] = np.where(avail[nt], float(init_q), 0.0)
    p_hat[0, nt] = np.where(avail[nt], spec.failure_mass[nt], 0.0)
    q_hat[:, term] = spec.terminal_reward[term]
    p_hat[:, term] = np.where(avail[term], spec.failure[term, None], False).astype(float)

    sizes = np.zeros((k, horizon, n_s), dtype=int)
    outer_policies: list[Policy] = []
    outer_changes: list[float] = []
    stage_policies: list[Policy] = []
    for outer in range(k):
        before_q, before_p = q_hat[-1].copy(), p_hat[-1].copy()
        allowed = avail.copy()
        stage_policies = []
        for n in range(horizon):
            allowed = allowed & (p_hat[n] <= theta)
            sizes[outer, n] = allowed.sum(axis=1)
            pi = get_policy(spec, allowed, ValueTables(q_hat[n], p_hat[n]))
            stage_policies.append(pi)
            q_new = backup(spec, pi, q_hat[n])
            if n + 1 < horizon:
                prop = spec.transitions @ p_hat[n][idx, pi.as_array()]
                p_hat[n + 1, nt] = np.where(avail[nt], prop[nt], 0.0)
            q_hat[n] = q_new
        masks = _shrink_all(spec, p_hat, theta)
        outer_policies.append(get_policy(spec, masks[-1], ValueTables(q_hat[-1], p_hat[-1])))
        dq = np.abs(q_hat[-1] - before_q)[avail]
        dp = np.abs(p_hat[-1] - before_p)[avail]
        outer_changes.append(float(max(dq.max(initial=0.0), dp.max(initial=0.0))))

    masks = _shrink_all(spec, p_hat, theta)
    policy = get_policy(spec, masks[-1], ValueTables(q_hat[-1], p_hat[-1]))
    stack = ReachStack(horizon, p_hat, q_hat, masks)
    converged = policy_settled(outer_policies + [policy])
    report = RecursiveSolveReport(
        policy=policy,
        stack=stack,
        set_sizes=sizes,
        stage_policies=stage_policies,
        outer_policies=outer_policies,
        outer_changes=outer_changes,
        converged=converged,
        settled=converged and outer_changes[-1] < CONVERGENCE_TOL,
    )
    report.stabilization = stabilization_horizon(report)
    return policy, stack, report


def stabilization_horizon(report: RecursiveSolveReport) -> int:
    """First stage after which the constrained action sets stop shrinking."""
    return _first_stable(report.final_sets)
