import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safevi.environments import CounterParams, build_counter_mdp, counter_policy, random_policy
from safevi.exact import (
    NonAbsorbingError,
    PolicySpaceTooLarge,
    bounded_reachability,
    closed_form_counter,
    enumerate_policies,
    evaluate_policy,
    reachability_profile,
)
from safevi.mdp import MdpSpec, Policy


def _counter_values(spec):
    """The eight X_ab values read from exact evaluation: take a at s1, follow pi_b."""
    s1 = spec.state_index("s1")
    out = {}
    for b in "LR":
        ev = evaluate_policy(spec, counter_policy(spec, b))
        for a in "LR":
            j = spec.action_index(a)
            out[f"Q_{a}{b}"] = ev.q[s1, j]
            out[f"P_{a}{b}"] = ev.p_action[s1, j]
    return out


@pytest.mark.parametrize("p", [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95])
@pytest.mark.parametrize("gamma", [0.9, 0.95, 0.99])
def test_closed_form_grid(p, gamma):
    spec = build_counter_mdp(CounterParams(p, gamma))
    got = _counter_values(spec)
    for name, value in closed_form_counter(p, gamma)._asdict().items():
        assert abs(got[name] - value) < 1e-10, name


def test_counter_reachability_two_decimals(counter, pi_l, pi_r):
    s1, L, R = counter.state_index("s1"), 0, 1
    ev_r = evaluate_policy(counter, pi_r)
    ev_l = evaluate_policy(counter, pi_l)
    assert round(ev_r.p[s1], 2) == 0.59
    assert round(ev_r.p_action[s1, L], 2) == 0.82
    assert round(ev_l.p[s1], 2) == 0.89
    assert round(ev_l.p_action[s1, R], 2) == 0.73


def test_symmetric_counter():
    spec = build_counter_mdp(CounterParams(0.5, 0.95))
    for b in "LR":
        assert evaluate_policy(spec, counter_policy(spec, b)).p[0] == pytest.approx(2 / 3, abs=1e-15)
    cf = closed_form_counter(0.5, 0.95)
    for value in (cf.P_LL, cf.P_RL, cf.P_LR, cf.P_RR):
        assert value == pytest.approx(2 / 3, abs=1e-15)
    assert cf.Q_LL == pytest.approx(-1.904, abs=1e-3)  # reference value is truncated from -1.90476


def test_consistency_exact(cliff):
    for seed in range(5):
        pol = random_policy(cliff, seed)
        ev = evaluate_policy(cliff, pol)
        idx = np.arange(cliff.n_states)
        assert np.array_equal(ev.q[idx, pol.as_array()], ev.v)
        assert np.array_equal(ev.p_action[idx, pol.as_array()], ev.p)
        assert np.all(ev.p[cliff.failure] == 1.0)
        assert np.all(ev.p[cliff.terminal & ~cliff.failure] == 0.0)


def test_iterative_matches_direct(cliff):
    pol = random_policy(cliff, 7)
    a = evaluate_policy(cliff, pol)
    b = evaluate_policy(cliff, pol, method="iterative")
    np.testing.assert_allclose(a.v, b.v, atol=1e-9)
    np.testing.assert_allclose(a.p, b.p, atol=1e-9)


def test_non_absorbing_named():
    spec = MdpSpec.from_tables(
        states=["a", "b", "F"], actions=["loop", "exit"], gamma=0.9,
        terminal=["F"], failure=["F"],
        transitions={
            ("a", "loop"): {"b": (1.0, -1.0)},
            ("b", "loop"): {"a": (1.0, -1.0)},
            ("a", "exit"): {"F": (1.0, -1.0)},
        },
        terminal_rewards={("F", "loop"): 0.0},
    )
    with pytest.raises(NonAbsorbingError) as info:
        evaluate_policy(spec, Policy((0, 0, 0)))
    assert info.value.states == ["a", "b"]
    assert evaluate_policy(spec, Policy((1, 0, 0))).p[0] == 1.0


def test_bounded_one_step_policy_free(counter, pi_l, pi_r):
    a = bounded_reachability(counter, pi_l, 1).p_n_action
    b = bounded_reachability(counter, pi_r, 1).p_n_action
    np.testing.assert_array_equal(a, b)
    assert a[0, 0] == pytest.approx(0.7)
    assert a[0, 1] == pytest.approx(0.3)


@pytest.mark.parametrize("env", ["counter", "cliff"])
def test_bounded_monotone_and_below_unbounded(env, counter, cliff):
    spec = counter if env == "counter" else cliff
    for seed in range(5):
        pol = random_policy(spec, seed)
        prof = reachability_profile(spec, pol, 200)
        full = evaluate_policy(spec, pol).p
        assert np.all(np.diff(prof, axis=0) >= -1e-15)
        assert np.all(prof <= full + 1e-12)
        assert np.array_equal(bounded_reachability(spec, pol, 200).p_n, prof[200])


def test_bounded_limit_counter(counter, pi_l, pi_r):
    for pol in (pi_l, pi_r):
        gap = np.abs(reachability_profile(counter, pol, 200)[200] - evaluate_policy(counter, pol).p)
        assert gap.max() < 1e-9


def _transient_radius(spec, pol):
    nt = spec.nonterminal
    t = spec.transitions[np.arange(spec.n_states), pol.as_array()][np.ix_(nt, nt)]
    return float(np.max(np.abs(np.linalg.eigvals(t))))


@pytest.mark.parametrize("seed", range(5))
def test_bounded_limit_rate_cliff(cliff, seed):
    # the tail P - P^n decays like rho^n, rho = spectral radius of the transient block
    pol = random_policy(cliff, seed)
    rho = _transient_radius(cliff, pol)
    n = int(np.ceil(np.log(1e-11) / np.log(rho)))
    prof = reachability_profile(cliff, pol, n)
    full = evaluate_policy(cliff, pol).p
    assert np.abs(prof[n] - full).max() < 1e-9
    ratio = np.abs(prof[n - 1] - full).max() / max(np.abs(prof[n - 101] - full).max(), 1e-300)
    assert ratio == pytest.approx(rho**100, rel=0.05) or np.abs(prof[n - 101] - full).max() < 1e-13


def test_enumeration_counts(counter, cliff):
    single = MdpSpec.from_tables(
        states=["a", "G"], actions=["x", "y", "z"], gamma=0.5, terminal=["G"], failure=[],
        transitions={(("a"), act): {"G": (1.0, 0.0)} for act in "xyz"},
        terminal_rewards={("G", "x"): 0.0},
    )
    pols = list(enumerate_policies(single))
    assert [p[0] for p in pols] == [0, 1, 2]
    assert len(list(enumerate_policies(counter))) == 2
    with pytest.raises(PolicySpaceTooLarge) as info:
        enumerate_policies(cliff, cap=1000)
    assert info.value.count == 4**9


def test_enumeration_is_lexicographic_and_unique(counter):
    pols = list(enumerate_policies(counter))
    assert len(set(pols)) == len(pols)
    assert pols == sorted(pols, key=lambda p: p.choice)


def test_closed_form_rejects_bad_inputs():
    with pytest.raises(ValueError):
        closed_form_counter(1.0, 0.9)
    with pytest.raises(ValueError):
        closed_form_counter(0.5, 1.0)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.01, 0.99), gamma=st.floats(0.0, 0.99))
def test_closed_form_property(p, gamma):
    got = _counter_values(build_counter_mdp(CounterParams(p, gamma)))
    for name, value in closed_form_counter(p, gamma)._asdict().items():
        assert got[name] == pytest.approx(value, abs=1e-9)
