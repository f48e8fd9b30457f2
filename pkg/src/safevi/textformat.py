"""Line-oriented MDP text format.

Example::

    # counter-MDP
    states
    s1
    s2
    X T F
    G T
    actions
    L
    R
    gamma 0.95
    transition s1 L X 0.7 -1
    transition s1 L s2 0.3 -1
    terminal_reward X L 0

Names are whitespace-free tokens. A state's flags are ``T`` (terminal) and
``F`` (failure). The available actions of a non-terminal state are those
with ``transition`` lines; of a terminal state, those with
``terminal_reward`` lines.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .mdp import MdpSpec

_SECTIONS = ("states", "actions")


class MdpFormatError(ValueError):
    pass


def parse_mdp(text: str) -> MdpSpec:
    states: list[str] = []
    actions: list[str] = []
    terminal: list[str] = []
    failure: list[str] = []
    gamma = None
    transitions: dict[tuple[str, str], dict[str, tuple[float, float]]] = defaultdict(dict)
    terminal_rewards: dict[tuple[str, str], float] = {}
    section = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        try:
            if head in _SECTIONS and len(tok) == 1:
                section = head
            elif head == "gamma":
                (gamma,) = (float(x) for x in tok[1:])
                section = None
            elif head == "transition":
                s, a, s2, prob, reward = tok[1:]
                if s2 in transitions[s, a]:
                    raise MdpFormatError(f"line {lineno}: duplicate transition {s} {a} {s2}")
                transitions[s, a][s2] = (float(prob), float(reward))
                section = None
            elif head == "terminal_reward":
                s, a, reward = tok[1:]
                terminal_rewards[s, a] = float(reward)
                section = None
            elif section == "states":
                flags = set(tok[1:])
                if not flags <= {"T", "F"}:
                    raise MdpFormatError(f"line {lineno}: unknown state flags {sorted(flags - {'T', 'F'})}")
                states.append(head)
                if "T" in flags:
                    terminal.append(head)
                if "F" in flags:
                    failure.append(head)
            elif section == "actions":
                if len(tok) != 1:
                    raise MdpFormatError(f"line {lineno}: expected one action name")
                actions.append(head)
            else:
                raise MdpFormatError(f"line {lineno}: unexpected {head!r}")
        except ValueError as exc:
            if isinstance(exc, MdpFormatError):
                raise
            raise MdpFormatError(f"line {lineno}: malformed {head!r} line") from exc

    if gamma is None:
        raise MdpFormatError("missing gamma")
    known_s, known_a = set(states), set(actions)
    for s, a in list(transitions) + list(terminal_rewards):
        if s not in known_s:
            raise MdpFormatError(f"unknown state {s!r}")
        if a not in known_a:
            raise MdpFormatError(f"unknown action {a!r}")
    for row in transitions.values():
        for s2 in row:
            if s2 not in known_s:
                raise MdpFormatError(f"unknown state {s2!r}")
    return MdpSpec.from_tables(states, actions, gamma, terminal, failure, transitions, terminal_rewards)


def format_mdp(spec: MdpSpec) -> str:
    names, acts = spec.state_names, spec.action_names
    out = ["states"]
    for s, name in enumerate(names):
        flags = ("T" if spec.terminal[s] else "") + (" F" if spec.failure[s] else "")
        out.append(f"{name} {flags.strip()}".rstrip())
    out.append("actions")
    out.extend(acts)
    out.append(f"gamma {spec.gamma!r}")
    for s in range(spec.n_states):
        for a in spec.actions_of(s):
            if spec.terminal[s]:
                out.append(f"terminal_reward {names[s]} {acts[a]} {float(spec.rewards[s, a, s])!r}")
                continue
            for s2 in np.flatnonzero(spec.transitions[s, a]):
                prob = float(spec.transitions[s, a, s2])
                reward = float(spec.rewards[s, a, s2])
                out.append(f"transition {names[s]} {acts[a]} {names[s2]} {prob!r} {reward!r}")
    return "\n".join(out) + "\n"


def load_mdp(path: str | Path) -> MdpSpec:
    return parse_mdp(Path(path).read_text())


def dump_mdp(spec: MdpSpec, path: str | Path) -> None:
    Path(path).write_text(format_mdp(spec))
