"""Finite-MDP planning under a probabilistic-reachability safety threshold."""
from .analysis import (
    PropertyReport,
    PropertyResult,
    SolverConfig,
    SweepRecord,
    check_p1,
    check_p2,
    check_p3,
    check_p4_residual,
    property_report,
    solve,
    sweep_theta,
)
from .environments import (
    CliffworldParams,
    CounterParams,
    build_cliffworld,
    build_counter_mdp,
    counter_policy,
)
from .exact import (
    NonAbsorbingError,
    PolicySpaceTooLarge,
    bounded_reachability,
    closed_form_counter,
    enumerate_policies,
    evaluate_policy,
)
from .mdp import EpisodeOutcome, MdpSpec, Policy, ValueTables, simulate_episode, validate
from .naive import bellman_step, get_policy, naive_policy_iteration, naive_value_iteration
from .recursive import (
    ReachStack,
    RecursiveSolveReport,
    recursive_policy_iteration,
    recursive_value_iteration,
    stabilization_horizon,
)
from .textformat import dump_mdp, format_mdp, load_mdp, parse_mdp

__version__ = "0.1.0"
