"""Benchmark MDPs: the two-state counter-MDP and a slippery cliffworld."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpSpec, Policy

STEP_REWARD = -1.0
MOVES = {"up": (0, 1), "down": (0, -1), "left": (-1, 0), "right": (1, 0)}
CLIFF_ACTIONS = tuple(MOVES)
COUNTER_START = "s1"


@dataclass(frozen=True)
class CounterParams:
    p: float = 0.7
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"counter-MDP needs 0 < p < 1, got {self.p}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount {self.gamma} outside [0, 1)")


def build_counter_mdp(params: CounterParams = CounterParams()) -> MdpSpec:
    """States s1, s2, X (failure) and G (goal). Only s1 has a choice.

    From s1 the chosen direction succeeds with probability p; L leads to X,
    R leads to s2. From s2, R reaches G with probability 1-p and falls back
    to s1 otherwise.
    """
    p, q = params.p, 1.0 - params.p
    r = STEP_REWARD
    transitions = {
        ("s1", "L"): {"X": (p, r), "s2": (q, r)},
        ("s1", "R"): {"s2": (p, r), "X": (q, r)},
        ("s2", "R"): {"G": (q, r), "s1": (p, r)},
    }
    terminal_rewards = {(s, a): 0.0 for s in ("X", "G") for a in ("L", "R")}
    return MdpSpec.from_tables(
        ["s1", "s2", "X", "G"], ["L", "R"], params.gamma,
        terminal=["X", "G"], failure=["X"],
        transitions=transitions, terminal_rewards=terminal_rewards,
    )


def counter_policy(spec: MdpSpec, action: str) -> Policy:
    """pi_L or pi_R: the given action at s1, R at s2."""
    return Policy.from_names(spec, {"s1": action, "s2": "R"})


@dataclass(frozen=True)
class CliffworldParams:
    """Grid geometry in (column, row) coordinates, row 0 at the bottom."""

    width: int = 4
    height: int = 3
    slip: float = 0.5
    gamma: float = 0.95
    start_cell: tuple[int, int] = (0, 0)
    goal_cell: tuple[int, int] = (3, 0)
    cliff_cells: tuple[tuple[int, int], ...] = ((1, 0), (2, 0))
    slip_mode: str = "include"

    def __post_init__(self):
        object.__setattr__(self, "start_cell", tuple(self.start_cell))
        object.__setattr__(self, "goal_cell", tuple(self.goal_cell))
        object.__setattr__(self, "cliff_cells", tuple(sorted(set(map(tuple, self.cliff_cells)))))
        if self.width < 2 or self.height < 2:
            raise ValueError("cliffworld needs width and height >= 2")
        if not 0.0 <= self.slip <= 1.0:
            raise ValueError(f"slip {self.slip} outside [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount {self.gamma} outside [0, 1)")
        if self.slip_mode not in ("include", "exclude"):
            raise ValueError(f"slip_mode must be 'include' or 'exclude', got {self.slip_mode!r}")
        for cell in (self.start_cell, self.goal_cell, *self.cliff_cells):
            if not (0 <= cell[0] < self.width and 0 <= cell[1] < self.height):
                raise ValueError(f"cell {cell} outside the {self.width}x{self.height} grid")
        if self.goal_cell in self.cliff_cells:
            raise ValueError("goal cell lies on the cliff")
        if self.start_cell in self.cliff_cells or self.start_cell == self.goal_cell:
            raise ValueError("start cell must be off the cliff and distinct from the goal")


def cell_name(cell: tuple[int, int]) -> str:
    return f"x{cell[0]}y{cell[1]}"


def cliff_start(params: CliffworldParams) -> str:
    return cell_name(params.start_cell)


def _direction_weights(params: CliffworldParams, chosen: str) -> dict[str, float]:
    if params.slip_mode == "include":
        w = {d: params.slip / 4 for d in MOVES}
    else:
        w = {d: params.slip / 3 for d in MOVES}
        w[chosen] = 0.0
    w[chosen] += 1.0 - params.slip
    return w


def build_cliffworld(params: CliffworldParams = CliffworldParams()) -> MdpSpec:
    """Slippery grid with one failure terminal (the cliff) and one goal terminal.

    Each move goes in the chosen direction with probability 1-slip and in a
    uniformly drawn direction with probability slip (``slip_mode="include"``
    draws from all four, ``"exclude"`` from the other three). Moves off the
    grid stay put. Every transition costs 1.
    """
    cliff = set(params.cliff_cells)
    cells = [
        (x, y) for y in range(params.height) for x in range(params.width)
        if (x, y) not in cliff and (x, y) != params.goal_cell
    ]
    states = [cell_name(c) for c in cells] + ["CLIFF", "GOAL"]

    def target(cell, d):
        dx, dy = MOVES[d]
        x, y = cell[0] + dx, cell[1] + dy
        if not (0 <= x < params.width and 0 <= y < params.height):
            return cell_name(cell)
        if (x, y) in cliff:
            return "CLIFF"
        if (x, y) == params.goal_cell:
            return "GOAL"
        return cell_name((x, y))

    transitions = {}
    for cell in cells:
        for a in CLIFF_ACTIONS:
            row: dict[str, float] = {}
            for d, w in _direction_weights(params, a).items():
                if w > 0.0:
                    s2 = target(cell, d)
                    row[s2] = row.get(s2, 0.0) + w
            transitions[cell_name(cell), a] = {s2: (w, STEP_REWARD) for s2, w in row.items()}
    terminal_rewards = {(s, a): 0.0 for s in ("CLIFF", "GOAL") for a in CLIFF_ACTIONS}
    return MdpSpec.from_tables(
        states, CLIFF_ACTIONS, params.gamma,
        terminal=["CLIFF", "GOAL"], failure=["CLIFF"],
        transitions=transitions, terminal_rewards=terminal_rewards,
    )


def random_policy(spec: MdpSpec, seed: int) -> Policy:
    rng = np.random.default_rng(seed)
    return Policy(tuple(int(rng.choice(spec.actions_of(s))) for s in range(spec.n_states)))
