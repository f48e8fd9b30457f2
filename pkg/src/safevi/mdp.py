"""Finite MDP data model with terminal and failure states.

States and actions are dense integer indices; names live in side tables.
Transition and reward tensors are indexed ``[s, a, s']``. Terminal states
store no transition rows; their self-reward R(s, a, s) sits on the diagonal
of the reward tensor.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

PROB_TOL = 1e-12
DEFAULT_MAX_STEPS = 10**6


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MdpSpec:
    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    terminal: np.ndarray      # bool[S]
    failure: np.ndarray       # bool[S]
    available: np.ndarray     # bool[S, A]
    transitions: np.ndarray   # float[S, A, S]
    rewards: np.ndarray       # float[S, A, S]
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "action_names", tuple(self.action_names))
        object.__setattr__(self, "terminal", _frozen(self.terminal, bool))
        object.__setattr__(self, "failure", _frozen(self.failure, bool))
        object.__setattr__(self, "available", _frozen(self.available, bool))
        object.__setattr__(self, "transitions", _frozen(self.transitions, float))
        object.__setattr__(self, "rewards", _frozen(self.rewards, float))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_tables(
        cls,
        states: Sequence[str],
        actions: Sequence[str],
        gamma: float,
        terminal: Sequence[str],
        failure: Sequence[str],
        transitions: Mapping[tuple[str, str], Mapping[str, tuple[float, float]]],
        terminal_rewards: Mapping[tuple[str, str], float],
    ) -> "MdpSpec":
        """Build a spec from name-keyed tables.

        ``transitions[(s, a)][s2] = (prob, reward)``. Available actions are
        the keys present in ``transitions`` (non-terminal states) and in
        ``terminal_rewards`` (terminal states).
        """
        sidx = {name: i for i, name in enumerate(states)}
        aidx = {name: i for i, name in enumerate(actions)}
        n_s, n_a = len(states), len(actions)
        term = np.zeros(n_s, bool)
        fail = np.zeros(n_s, bool)
        for name in terminal:
            term[sidx[name]] = True
        for name in failure:
            fail[sidx[name]] = True
        avail = np.zeros((n_s, n_a), bool)
        trans = np.zeros((n_s, n_a, n_s))
        rew = np.zeros((n_s, n_a, n_s))
        for (s, a), row in transitions.items():
            i, j = sidx[s], aidx[a]
            avail[i, j] = True
            for s2, (prob, reward) in row.items():
                trans[i, j, sidx[s2]] += prob
                rew[i, j, sidx[s2]] = reward
        for (s, a), reward in terminal_rewards.items():
            i, j = sidx[s], aidx[a]
            avail[i, j] = True
            rew[i, j, i] = reward
        return cls(tuple(states), tuple(actions), term, fail, avail, trans, rew, gamma)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    @cached_property
    def nonterminal(self) -> np.ndarray:
        return ~self.terminal

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """One-step expected reward sum_s' T(s,a)(s') R(s,a,s') for non-terminal rows."""
        return np.einsum("ijk,ijk->ij", self.transitions, self.rewards)

    @cached_property
    def terminal_reward(self) -> np.ndarray:
        """R(s, a, s) for terminal s; zero elsewhere."""
        diag = np.einsum("iji->ij", self.rewards).copy()
        diag[~self.terminal] = 0.0
        diag[~self.available] = 0.0
        return diag

    @cached_property
    def failure_mass(self) -> np.ndarray:
        """Probability of entering a failure state in one step, per (s, a)."""
        return self.transitions[:, :, self.failure].sum(axis=2)

    @cached_property
    def sampling_rows(self) -> dict[tuple[int, int], tuple[list[float], list[int]]]:
        return _cumulative_rows(self)

    def actions_of(self, s: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.available[s]))

    def state_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self.state_names.index(name)
        except ValueError:
            raise KeyError(f"unknown state {name!r}") from None

    def action_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self.action_names.index(name)
        except ValueError:
            raise KeyError(f"unknown action {name!r}") from None


@dataclass(frozen=True)
class Policy:
    """Deterministic policy as a tuple of action indices, one per state."""

    choice: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(int(a) for a in self.choice))

    def __getitem__(self, s: int) -> int:
        return self.choice[s]

    def __len__(self) -> int:
        return len(self.choice)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.choice, dtype=np.intp)

    @classmethod
    def from_names(cls, spec: MdpSpec, mapping: Mapping[str, str]) -> "Policy":
        """Policy from a partial ``{state: action}`` map.

        States not mentioned take their lowest-index available action.
        """
        choice = [spec.actions_of(s)[0] if spec.actions_of(s) else 0 for s in range(spec.n_states)]
        for s, a in mapping.items():
            choice[spec.state_index(s)] = spec.action_index(a)
        policy = cls(tuple(choice))
        check_policy(spec, policy)
        return policy

    def describe(self, spec: MdpSpec) -> dict[str, str]:
        return {spec.state_names[s]: spec.action_names[a] for s, a in enumerate(self.choice)}


def check_policy(spec: MdpSpec, policy: Policy) -> None:
    if len(policy) != spec.n_states:
        raise ValueError(f"policy covers {len(policy)} states, spec has {spec.n_states}")
    for s, a in enumerate(policy.choice):
        if not (0 <= a < spec.n_actions) or not spec.available[s, a]:
            raise ValueError(f"policy picks unavailable action {a} at state {spec.state_names[s]}")


@dataclass(frozen=True, eq=False)
class ValueTables:
    """Paired action-value tables: expected return ``q`` and reachability ``p``, both [S, A]."""

    q: np.ndarray
    p: np.ndarray

    def sup_distance(self, other: "ValueTables", mask: np.ndarray | None = None) -> float:
        dq = np.abs(self.q - other.q)
        dp = np.abs(self.p - other.p)
        if mask is not None:
            dq, dp = dq[mask], dp[mask]
        if dq.size == 0:
            return 0.0
        return float(max(dq.max(), dp.max()))


@dataclass(frozen=True)
class EpisodeOutcome:
    trajectory: tuple[tuple[int, int, float], ...]
    discounted_return: float
    hit_failure: bool
    length: int
    truncated: bool = False


def validate(spec: MdpSpec) -> list[str]:
    """Return every invariant violation of ``spec``; empty when valid."""
    problems: list[str] = []
    n_s, n_a = spec.n_states, spec.n_actions
    names, acts = spec.state_names, spec.action_names
    if len(set(names)) != n_s:
        problems.append("duplicate state names")
    if len(set(acts)) != n_a:
        problems.append("duplicate action names")
    shapes = {
        "terminal": (spec.terminal.shape, (n_s,)),
        "failure": (spec.failure.shape, (n_s,)),
        "available": (spec.available.shape, (n_s, n_a)),
        "transitions": (spec.transitions.shape, (n_s, n_a, n_s)),
        "rewards": (spec.rewards.shape, (n_s, n_a, n_s)),
    }
    bad_shape = [f"{k} has shape {got}, expected {want}" for k, (got, want) in shapes.items() if got != want]
    if bad_shape:
        return problems + bad_shape

    if not 0.0 <= spec.gamma < 1.0:
        problems.append(f"discount {spec.gamma} outside [0, 1)")
    for s in np.flatnonzero(spec.failure & ~spec.terminal):
        problems.append(f"failure state {names[s]} is not terminal")
    for s in range(n_s):
        if not spec.available[s].any():
            problems.append(f"empty action set at {names[s]}")
    if not np.all(np.isfinite(spec.rewards)):
        problems.append("non-finite reward entries")

    for s in range(n_s):
        for a in range(n_a):
            row = spec.transitions[s, a]
            has_mass = bool(np.any(row != 0.0))
            if spec.terminal[s]:
                if has_mass:
                    problems.append(f"terminal state {names[s]} has outgoing transitions under {acts[a]}")
                continue
            if not spec.available[s, a]:
                if has_mass:
                    problems.append(f"transition row for unavailable action {acts[a]} at {names[s]}")
                continue
            if np.any(row < 0.0):
                problems.append(f"negative mass in T({names[s]},{acts[a]})")
            total = float(row.sum())
            if abs(total - 1.0) > PROB_TOL:
                problems.append(f"distribution T({names[s]},{acts[a]}) sums to {total:.12g}")
    return problems


def _cumulative_rows(spec: MdpSpec) -> dict[tuple[int, int], tuple[list[float], list[int]]]:
    rows = {}
    for s in np.flatnonzero(spec.nonterminal):
        for a in spec.actions_of(s):
            support = np.flatnonzero(spec.transitions[s, a] > 0.0)
            cum = np.cumsum(spec.transitions[s, a, support]).tolist()
            rows[int(s), a] = (cum, support.tolist())
    return rows


def simulate_episode(
    spec: MdpSpec,
    policy: Policy,
    start: int | str,
    rng_seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> EpisodeOutcome:
    """Sample one path from ``start`` following ``policy``.

    The path ends with the terminal state-action and its self-reward. If no
    terminal state is entered within ``max_steps`` transitions the outcome is
    flagged ``truncated`` and ``hit_failure`` is False.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    rows = spec.sampling_rows
    rng = np.random.default_rng(rng_seed)
    s = spec.state_index(start)
    gamma = spec.gamma
    traj: list[tuple[int, int, float]] = []
    ret, disc = 0.0, 1.0
    steps = 0
    while not spec.terminal[s]:
        if steps >= max_steps:
            return EpisodeOutcome(tuple(traj), ret, False, steps, truncated=True)
        a = policy[s]
        cum, support = rows[s, a]
        k = bisect.bisect_right(cum, rng.random() * cum[-1])
        s2 = support[min(k, len(support) - 1)]
        r = float(spec.rewards[s, a, s2])
        traj.append((s, a, r))
        ret += disc * r
        disc *= gamma
        s = s2
        steps += 1
    a = policy[s]
    r = float(spec.rewards[s, a, s])
    traj.append((s, a, r))
    ret += disc * r
    return EpisodeOutcome(tuple(traj), ret, bool(spec.failure[s]), steps)
