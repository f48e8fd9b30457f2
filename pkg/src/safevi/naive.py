"""Threshold-constrained dynamic programming without constraint memory.

This is the baseline that can chatter: the constrained action set is rebuilt
from the current reachability estimate at every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import evaluate_policy
from .mdp import MdpSpec, Policy, ValueTables

CONVERGENCE_TOL = 1e-9
MAX_PERIOD = 8


@dataclass(frozen=True, eq=False)
class Snapshot:
    """One iteration: the policy in force, the tables it was judged on, and the feasibility mask."""

    iteration: int
    policy: Policy
    values: ValueTables
    constraint: np.ndarray   # bool[S, A]
    change: float = 0.0      # sup-norm table change produced by this iteration


@dataclass(eq=False)
class SolveTrace:
    snapshots: list[Snapshot] = field(default_factory=list)
    final_policy: Policy | None = None
    converged: bool = False
    settled: bool = False
    oscillation_period: int | None = None

    @property
    def policies(self) -> list[Policy]:
        return [snap.policy for snap in self.snapshots]


def constrained_action_sets(spec: MdpSpec, p: np.ndarray, theta: float) -> np.ndarray:
    """Mask of available actions whose reachability estimate is at most ``theta``."""
    return spec.available & (p <= theta)


def get_policy(spec: MdpSpec, allowed: np.ndarray, values: ValueTables) -> Policy:
    """Greedy-in-Q over the allowed actions, or least-reachability when none is allowed.

    Ties go to the lowest action index.
    """
    q_masked = np.where(allowed, values.q, -np.inf)
    p_masked = np.where(spec.available, values.p, np.inf)
    best_q = np.argmax(q_masked, axis=1)
    safest = np.argmin(p_masked, axis=1)
    choice = np.where(allowed.any(axis=1), best_q, safest)
    return Policy(tuple(choice.tolist()))


def backup(spec: MdpSpec, policy: Policy, q: np.ndarray, p: np.ndarray | None = None):
    """One synchronous expected backup of Q (and P, if given) under ``policy``.

    Terminal rows keep R(s, a, s) and 1(s in F).
    """
    pi = policy.as_array()
    idx = np.arange(spec.n_states)
    q_next = spec.expected_reward + spec.gamma * (spec.transitions @ q[idx, pi])
    q_next[spec.terminal] = spec.terminal_reward[spec.terminal]
    q_next[~spec.available] = 0.0
    if p is None:
        return q_next
    p_next = spec.transitions @ p[idx, pi]
    p_next[spec.terminal] = spec.failure[spec.terminal, None].astype(float)
    p_next[~spec.available] = 0.0
    return q_next, p_next


def bellman_step(spec: MdpSpec, theta: float, values: ValueTables) -> tuple[ValueTables, Policy]:
    """Apply the threshold Bellman operator once; also return the policy it used."""
    allowed = constrained_action_sets(spec, values.p, theta)
    policy = get_policy(spec, allowed, values)
    q, p = backup(spec, policy, values.q, values.p)
    return ValueTables(q, p), policy


def initial_tables(spec: MdpSpec, init_q: float = 0.0, init_p: float | np.ndarray = 0.0) -> ValueTables:
    q = np.where(spec.available, float(init_q), 0.0)
    p = np.broadcast_to(np.asarray(init_p, dtype=float), q.shape).copy()
    if np.any((p < 0) | (p > 1)):
        raise ValueError("initial reachability values must lie in [0, 1]")
    q[spec.terminal] = spec.terminal_reward[spec.terminal]
    p[spec.terminal] = spec.failure[spec.terminal, None].astype(float)
    p[~spec.available] = 0.0
    return ValueTables(q, p)


def detect_period(policies: list[Policy], max_period: int = MAX_PERIOD) -> int | None:
    """Smallest period d <= max_period of the tail (second half) of the sequence.

    Returns 1 for a constant tail and None if no cycle is found.
    """
    tail = policies[len(policies) // 2:]
    for d in range(1, max_period + 1):
        if len(tail) < 2 * d:
            break
        if all(tail[i] == tail[i - d] for i in range(d, len(tail))):
            return d
    return None


def policy_settled(policies: list[Policy]) -> bool:
    """True when the second half of the sequence is one repeated policy."""
    return len(policies) >= 2 and detect_period(policies) == 1


def _finish(trace: SolveTrace, final_policy: Policy, values_settled: bool) -> SolveTrace:
    trace.final_policy = final_policy
    seq = trace.policies + [final_policy]
    trace.converged = policy_settled(seq)
    trace.settled = bool(trace.converged and values_settled)
    period = detect_period(seq)
    trace.oscillation_period = period if period is not None and period > 1 else None
    return trace


def naive_value_iteration(
    spec: MdpSpec,
    theta: float,
    k: int = 50,
    init_p: float | np.ndarray = 0.0,
    init_q: float = 0.0,
) -> tuple[Policy, ValueTables, SolveTrace]:
    """Naive value iteration: k synchronous sweeps of the threshold Bellman operator."""
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    if k < 1:
        raise ValueError("k must be >= 1")
    values = initial_tables(spec, init_q, init_p)
    trace = SolveTrace()
    for i in range(1, k + 1):
        allowed = constrained_action_sets(spec, values.p, theta)
        policy = get_policy(spec, allowed, values)
        q, p = backup(spec, policy, values.q, values.p)
        new = ValueTables(q, p)
        change = new.sup_distance(values, spec.available)
        trace.snapshots.append(Snapshot(i, policy, values, allowed, change))
        values = new
    final = get_policy(spec, constrained_action_sets(spec, values.p, theta), values)
    _finish(trace, final, trace.snapshots[-1].change < CONVERGENCE_TOL)
    return final, values, trace


def _policy_iteration(spec, theta, initial, iterations, accumulate):
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    trace = SolveTrace()
    policy = initial
    memory = spec.available.copy()
    for i in range(1, iterations + 1):
        ev = evaluate_policy(spec, policy)
        values = ValueTables(ev.q, ev.p_action)
        feasible = constrained_action_sets(spec, ev.p_action, theta)
        if accumulate:
            memory = memory & feasible
            feasible = memory.copy()
        trace.snapshots.append(Snapshot(i, policy, values, feasible))
        policy = get_policy(spec, feasible, values)
    # exact evaluation: a repeated policy means repeated tables
    return _finish(trace, policy, True)


def naive_policy_iteration(spec: MdpSpec, theta: float, initial: Policy, iterations: int = 20) -> SolveTrace:
    """Policy iteration that judges feasibility on the current exact evaluation only."""
    return _policy_iteration(spec, theta, initial, iterations, accumulate=False)
