"""Ground truth: exact policy evaluation, bounded reachability, policy enumeration.

Reachability is never discounted. Linear systems are solved directly
(LU with partial pivoting); fixed-point iteration is available on request.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .mdp import MdpSpec, Policy, check_policy

ITER_TOL = 1e-12
ITER_MAX_SWEEPS = 10**6
DEFAULT_CAP = 10**6


class NonAbsorbingError(ValueError):
    """The policy leaves some states in a recurrent class that never terminates."""

    def __init__(self, states: list[str]):
        self.states = states
        super().__init__(f"non-absorbing under policy: states {', '.join(states)} never reach a terminal state")


class PolicySpaceTooLarge(ValueError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"policy space exceeds cap: {count} policies > {cap}")


@dataclass(frozen=True, eq=False)
class ExactEvaluation:
    v: np.ndarray         # [S]
    q: np.ndarray         # [S, A]
    p: np.ndarray         # [S]
    p_action: np.ndarray  # [S, A]


@dataclass(frozen=True, eq=False)
class BoundedReach:
    horizon: int
    p_n: np.ndarray         # [S]
    p_n_action: np.ndarray  # [S, A]


def _policy_matrix(spec: MdpSpec, policy: Policy) -> np.ndarray:
    return spec.transitions[np.arange(spec.n_states), policy.as_array()]


def _non_absorbing(spec: MdpSpec, t_pi: np.ndarray) -> list[int]:
    """Non-terminal states with no positive-probability path to a terminal state."""
    reach = spec.terminal.copy()
    while True:
        grown = reach | (spec.nonterminal & ((t_pi[:, reach] > 0.0).any(axis=1)))
        if np.array_equal(grown, reach):
            break
        reach = grown
    return [int(s) for s in np.flatnonzero(~reach)]


def _one_step(spec: MdpSpec, v: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand state values into action values; terminal rows take their boundary values."""
    q = spec.expected_reward + spec.gamma * spec.transitions @ v
    pa = spec.transitions @ p
    term = spec.terminal
    q[term] = spec.terminal_reward[term]
    pa[term] = spec.failure[term, None].astype(float)
    q[~spec.available] = 0.0
    pa[~spec.available] = 0.0
    return q, pa


def _fixed_point(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x = np.zeros_like(rhs)
    for _ in range(ITER_MAX_SWEEPS):
        nxt = rhs + matrix @ x
        if np.max(np.abs(nxt - x), initial=0.0) < ITER_TOL:
            return nxt
        x = nxt
    raise RuntimeError("fixed-point iteration did not reach tolerance")


def evaluate_policy(spec: MdpSpec, policy: Policy, method: str = "direct") -> ExactEvaluation:
    """Exact V, Q, P and action-reachability of ``policy``.

    Raises NonAbsorbingError if some state never terminates under the policy,
    since its reachability system is singular there.
    """
    check_policy(spec, policy)
    if method not in ("direct", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    pi = policy.as_array()
    t_pi = _policy_matrix(spec, policy)
    stuck = _non_absorbing(spec, t_pi)
    if stuck:
        raise NonAbsorbingError([spec.state_names[s] for s in stuck])

    nt, term = spec.nonterminal, spec.terminal
    idx = np.arange(spec.n_states)
    v = np.zeros(spec.n_states)
    p = np.zeros(spec.n_states)
    v[term] = spec.terminal_reward[idx[term], pi[term]]
    p[term] = spec.failure[term].astype(float)

    t_nn = t_pi[np.ix_(nt, nt)]
    t_nt = t_pi[np.ix_(nt, term)]
    r_n = spec.expected_reward[idx[nt], pi[nt]]
    rhs_v = r_n + spec.gamma * t_nt @ v[term]
    rhs_p = t_nt @ p[term]
    if method == "direct":
        eye = np.eye(int(nt.sum()))
        v[nt] = np.linalg.solve(eye - spec.gamma * t_nn, rhs_v)
        p[nt] = np.linalg.solve(eye - t_nn, rhs_p)
    else:
        v[nt] = _fixed_point(spec.gamma * t_nn, rhs_v)
        p[nt] = _fixed_point(t_nn, rhs_p)

    q, pa = _one_step(spec, v, p)
    # state values read back from the action tables so both paths agree bit for bit
    v = q[idx, pi].copy()
    p = np.clip(pa[idx, pi], 0.0, 1.0)
    pa = np.clip(pa, 0.0, 1.0)
    return ExactEvaluation(v=v, q=q, p=p, p_action=pa)


def reachability_profile(spec: MdpSpec, policy: Policy, n_max: int) -> np.ndarray:
    """P^n(s; pi) for n = 0..n_max as an array [n_max + 1, S]."""
    check_policy(spec, policy)
    t_pi = _policy_matrix(spec, policy)
    fail = spec.failure.astype(float)
    out = np.empty((n_max + 1, spec.n_states))
    out[0] = fail
    for m in range(n_max):
        nxt = t_pi @ out[m]
        nxt[spec.terminal] = fail[spec.terminal]
        out[m + 1] = nxt
    return out


def bounded_reachability(spec: MdpSpec, policy: Policy, n: int) -> BoundedReach:
    """Probability of sitting in a failure state at step min(T, n)."""
    if n < 1:
        raise ValueError("horizon n must be >= 1")
    profile = reachability_profile(spec, policy, n - 1)
    p_prev = profile[n - 1]
    pa = spec.transitions @ p_prev
    pa[spec.terminal] = spec.failure[spec.terminal, None].astype(float)
    pa[~spec.available] = 0.0
    p_n = pa[np.arange(spec.n_states), policy.as_array()].copy()
    return BoundedReach(horizon=n, p_n=p_n, p_n_action=pa)


class CounterClosedForm(NamedTuple):
    Q_LL: float
    Q_RL: float
    Q_LR: float
    Q_RR: float
    P_LL: float
    P_RL: float
    P_LR: float
    P_RR: float


def closed_form_counter(p: float, gamma: float) -> CounterClosedForm:
    """Analytic Q and reachability values at s1 of the counter-MDP.

    ``X_ab`` is the value of taking ``a`` at s1 and following pi_b after.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    q = 1.0 - p
    g = gamma
    return CounterClosedForm(
        Q_LL=-(1 + g * q) / (1 - g**2 * p * q),
        Q_RL=-(1 + g * p + g**2 * p * (p - q)) / (1 - g**2 * p * q),
        Q_LR=-(1 + g * (1 - 2 * p)) / (1 - g * p),
        Q_RR=-1 / (1 - g * p),
        P_LL=p / (1 - p * q),
        P_RL=1 - p * q / (1 - p * q),
        P_LR=2 * p / (p + 1),
        P_RR=1 / (p + 1),
    )


def count_policies(spec: MdpSpec) -> int:
    return math.prod(len(spec.actions_of(s)) for s in np.flatnonzero(spec.nonterminal))


def enumerate_policies(spec: MdpSpec, cap: int = DEFAULT_CAP) -> Iterator[Policy]:
    """Every deterministic policy, lexicographic in action index by state index.

    Only non-terminal choices are enumerated; terminal states take their
    lowest-index available action.
    """
    count = count_policies(spec)
    if count > cap:
        raise PolicySpaceTooLarge(count, cap)
    nonterm = [int(s) for s in np.flatnonzero(spec.nonterminal)]
    base = [spec.actions_of(s)[0] for s in range(spec.n_states)]

    def gen():
        for combo in itertools.product(*(spec.actions_of(s) for s in nonterm)):
            choice = list(base)
            for s, a in zip(nonterm, combo):
                choice[s] = a
            yield Policy(tuple(choice))

    return gen()
