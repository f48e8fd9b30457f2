import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safevi.analysis import check_p4_residual
from safevi.environments import counter_policy, random_policy
from safevi.exact import closed_form_counter, evaluate_policy
from safevi.mdp import ValueTables
from safevi.naive import (
    backup,
    bellman_step,
    detect_period,
    get_policy,
    initial_tables,
    naive_policy_iteration,
    naive_value_iteration,
)

CF = closed_form_counter(0.7, 0.95)
S1, S2, X, G = 0, 1, 2, 3
L, R = 0, 1


def _tables(counter, q_s1, p_s1):
    q = np.zeros((4, 2))
    p = np.zeros((4, 2))
    q[S1] = q_s1
    p[S1] = p_s1
    p[X] = 1.0
    return ValueTables(q, p)


def _exact(counter, pol):
    ev = evaluate_policy(counter, pol)
    return ValueTables(ev.q, ev.p_action)


def test_get_policy_argmax(counter):
    allowed = counter.available.copy()
    pol = get_policy(counter, allowed, _tables(counter, [-1.0, -2.0], [0.5, 0.5]))
    assert pol[S1] == L


def test_get_policy_fallback(counter):
    allowed = counter.available.copy()
    allowed[S1] = False
    pol = get_policy(counter, allowed, _tables(counter, [-1.0, -2.0], [0.89, 0.73]))
    assert pol[S1] == R


def test_get_policy_ties_lowest_index(counter):
    allowed = counter.available.copy()
    assert get_policy(counter, allowed, _tables(counter, [-1.5, -1.5], [0.2, 0.2]))[S1] == L
    allowed[S1] = False
    assert get_policy(counter, allowed, _tables(counter, [-1.5, -1.5], [0.4, 0.4]))[S1] == L


def test_get_policy_never_picks_unavailable(counter):
    allowed = np.zeros_like(counter.available)
    pol = get_policy(counter, allowed, _tables(counter, [0.0, 0.0], [0.0, 0.0]))
    assert pol[S2] == R


def test_bellman_step_terminal_rows(counter, pi_l):
    new, _ = bellman_step(counter, 0.85, _exact(counter, pi_l))
    assert np.all(new.q[[X, G]] == 0.0)
    assert np.all(new.p[X] == 1.0)
    assert np.all(new.p[G] == 0.0)


def test_bellman_step_flips_from_pi_l(counter, pi_l):
    _, used = bellman_step(counter, 0.85, _exact(counter, pi_l))
    assert used[S1] == R


def test_bellman_step_flips_from_pi_r(counter, pi_r):
    _, used = bellman_step(counter, 0.85, _exact(counter, pi_r))
    assert used[S1] == L


def test_bellman_step_is_pure(counter, pi_r):
    tables = _exact(counter, pi_r)
    before = tables.q.copy(), tables.p.copy()
    a, _ = bellman_step(counter, 0.85, tables)
    b, _ = bellman_step(counter, 0.85, tables)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)
    assert np.array_equal(tables.q, before[0]) and np.array_equal(tables.p, before[1])


def test_initial_tables_reject_bad_p(counter):
    with pytest.raises(ValueError):
        initial_tables(counter, init_p=1.5)


def test_vi_oscillates_at_085(counter):
    pol, _, trace = naive_value_iteration(counter, 0.85, k=50)
    assert not trace.converged
    assert len(trace.snapshots) == 50
    seq = trace.policies + [pol]
    # the lagged reachability estimate makes the s1 cycle LLRRLLRRRR, period 10
    assert detect_period(seq, max_period=12) == 10
    assert detect_period(seq) is None
    assert trace.oscillation_period is None


def test_vi_converges_at_095(counter):
    pol, values, trace = naive_value_iteration(counter, 0.95, k=50)
    assert trace.converged and trace.settled
    assert pol == counter_policy(counter, "L")
    assert abs(values.p[S1, L] - CF.P_LL) < 1e-6
    assert abs(values.q[S1, L] - CF.Q_LL) < 1e-6
    assert check_p4_residual(counter, 0.95, values).residual < 1e-8


def test_vi_fallback_at_05(counter):
    pol, values, trace = naive_value_iteration(counter, 0.5, k=50)
    assert trace.converged
    assert pol == counter_policy(counter, "R")
    assert not np.any(counter.available[S1] & (values.p[S1] <= 0.5))
    assert abs(values.p[S1, R] - CF.P_RR) < 1e-6
    assert abs(values.p[S1, L] - CF.P_LR) < 1e-6


def _plain_vi(spec, k):
    tables = initial_tables(spec)
    for _ in range(k):
        pol = get_policy(spec, spec.available, tables)
        q, p = backup(spec, pol, tables.q, tables.p)
        tables = ValueTables(q, p)
    return tables


def test_inactive_constraint_matches_plain_vi(counter):
    # from zero init the reachability estimates rise monotonically to at most P_LL < 0.9
    _, values, _ = naive_value_iteration(counter, 0.9, k=30)
    plain = _plain_vi(counter, 30)
    assert np.array_equal(values.q, plain.q)
    assert np.array_equal(values.p, plain.p)


def test_vi_uniform_init_is_seeded(cliff):
    init = np.random.default_rng(4).uniform(size=(cliff.n_states, cliff.n_actions))
    a = naive_value_iteration(cliff, 0.4, k=20, init_p=init)
    b = naive_value_iteration(cliff, 0.4, k=20, init_p=init.copy())
    assert a[0] == b[0]
    assert np.array_equal(a[1].q, b[1].q)


def test_vi_rejects_bad_theta(counter):
    with pytest.raises(ValueError):
        naive_value_iteration(counter, 1.0)


def test_pi_oscillates_period_two(counter, pi_r):
    trace = naive_policy_iteration(counter, 0.85, pi_r, iterations=20)
    labels = ["LR"[p[S1]] for p in trace.policies]
    assert labels == ["R", "L"] * 10
    assert not trace.converged
    assert trace.oscillation_period == 2
    c_l = [bool(s.constraint[S1, L]) for s in trace.snapshots[:4]]
    c_r = [bool(s.constraint[S1, R]) for s in trace.snapshots[:4]]
    assert c_l == [True, False, True, False]
    assert c_r == [True, True, True, True]


def test_pi_converges_above(counter, pi_r):
    trace = naive_policy_iteration(counter, 0.95, pi_r, iterations=5)
    assert trace.policies[1] == counter_policy(counter, "L")
    assert trace.converged


def test_pi_fallback_below(counter, pi_l):
    trace = naive_policy_iteration(counter, 0.5, pi_l, iterations=5)
    assert trace.policies[1:] == [counter_policy(counter, "R")] * 4
    assert trace.converged


@pytest.mark.parametrize("theta", [0.83, 0.84, 0.85, 0.86, 0.87, 0.88])
def test_pi_oscillates_between_p_lr_and_p_ll(counter, pi_r, theta):
    assert naive_policy_iteration(counter, theta, pi_r, 20).oscillation_period == 2


@pytest.mark.parametrize("theta", [0.75, 0.78, 0.8, 0.82])
def test_pi_settles_below_p_lr(counter, pi_r, theta):
    # L is infeasible under pi_R already, so the start policy is kept
    trace = naive_policy_iteration(counter, theta, pi_r, 20)
    assert trace.converged
    assert trace.final_policy == pi_r


def test_detect_period_basics():
    a, b, c = (0,), (1,), (2,)
    from safevi.mdp import Policy
    pa, pb, pc = Policy(a), Policy(b), Policy(c)
    assert detect_period([pa, pb] * 6) == 2
    assert detect_period([pc] * 3 + [pa] * 8) == 1
    assert detect_period([pa, pb, pc] * 6) == 3
    assert detect_period([pa, pb]) is None


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), theta=st.floats(0.0, 0.99))
def test_bellman_step_keeps_probabilities_in_range(cliff, seed, theta):
    pol = random_policy(cliff, seed)
    new, used = bellman_step(cliff, theta, _exact(cliff, pol))
    assert np.all((new.p >= 0) & (new.p <= 1 + 1e-12))
    assert all(cliff.available[s, used[s]] for s in range(cliff.n_states))
