import numpy as np
import pytest
from hypothesis import given, strategies as st

from rltrade.agents import SarsaAgent, run_episode
from rltrade.control import (
    ExplorationSchedule,
    QTraceTable,
    epsilon_greedy,
    epsilon_greedy_policy,
    expected_q_learning_update,
    lambda_q_return,
    lambda_q_returns,
    n_step_q_return,
    q_learning_update,
    sarsa0_update,
    sarsa_lambda_backward_episode,
    sarsa_lambda_backward_step,
    sarsa_lambda_forward_episode,
)
from rltrade.environments import make_gridworld
from rltrade.mdp import (
    Step,
    TabularPolicy,
    Trajectory,
    action_values_exact,
    discounted_return,
    greedy_policy_from_q,
    policy_evaluation_exact,
    random_mdp,
    sample_episode,
    value_iteration_exact,
)


def sa_episode():
    # (s, a): (0,1) -> (1,0) -> (2,1) -> terminal 3; rewards 1, 2, 3
    return Trajectory([Step(0, 1, 1.0, 1, False), Step(1, 0, 2.0, 2, False), Step(2, 1, 3.0, 3, True)])


def random_sa_episodes(n, seed, n_states=6, n_actions=3, max_len=10):
    mdp = random_mdp(n_states, n_actions, 0.9, seed=seed, n_terminals=1)
    pol = TabularPolicy.uniform(n_states, n_actions)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        traj = sample_episode(mdp, pol, int(rng.integers(n_states - 1)), seed=rng, max_steps=max_len)
        if traj.terminated:
            out.append(traj)
    return mdp, out


# --- exploration ----------------------------------------------------------------

def test_epsilon_greedy_examples():
    q = np.array([[0.0, 1.0, 5.0, 2.0]])
    assert np.allclose(epsilon_greedy(q, 0, 0.2), [0.05, 0.05, 0.85, 0.05], atol=1e-15)
    assert np.array_equal(epsilon_greedy(q, 0, 0.0), [0, 0, 1, 0])
    assert np.allclose(epsilon_greedy(q, 0, 1.0), [0.25] * 4)
    assert np.array_equal(epsilon_greedy(np.array([[1.0, 1.0]]), 0, 0.0), [1, 0])
    with pytest.raises(ValueError):
        epsilon_greedy(q, 0, 1.1)


@given(
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8),
    st.floats(0.0, 1.0),
)
def test_epsilon_greedy_is_a_distribution(row, eps):
    p = epsilon_greedy(np.array([row]), 0, eps)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 10_000))
def test_schedule_stays_in_unit_interval(e0, emin, decay, k):
    eps = ExplorationSchedule(e0, emin, decay)(k)
    assert 0.0 <= eps <= 1.0


def test_schedule_decays_to_floor():
    sched = ExplorationSchedule(0.5, 0.01, 0.9)
    assert sched(0) == 0.5 and sched(1) == pytest.approx(0.45)
    assert sched(1000) == 0.01
    with pytest.raises(ValueError):
        ExplorationSchedule(1.5)


# --- SARSA(0) -----------------------------------------------------------------

def test_sarsa0_example():
    q = np.array([[1.0], [2.0]])
    sarsa0_update(q, 0, 0, 0.0, 1, 0, 0.5, 0.9)
    assert q[0, 0] == pytest.approx(1.4, abs=1e-15)


def test_sarsa0_fixed_point_and_terminal():
    q = np.array([[1.8], [2.0]])
    sarsa0_update(q, 0, 0, 0.0, 1, 0, 0.5, 0.9)
    assert q[0, 0] == 1.8
    q = np.array([[0.0], [9.0]])
    sarsa0_update(q, 0, 0, 1.0, 1, 0, 1.0, 0.9, done=True)
    assert q[0, 0] == 1.0


def test_sarsa_gridworld_greedy_policy_is_optimal():
    env, mdp = make_gridworld()
    v_star, _ = value_iteration_exact(mdp)
    env_ss, agent_ss = np.random.SeedSequence(0).spawn(2)
    env.rng = np.random.default_rng(env_ss)
    rng = np.random.default_rng(agent_ss)
    agent = SarsaAgent(16, 4, 1.0, ExplorationSchedule(0.5, 0.01, 0.995), alpha=0.1)
    for _ in range(1000):
        run_episode(env, agent, rng, 1000)
    v = policy_evaluation_exact(mdp, greedy_policy_from_q(agent.q))
    assert np.max(np.abs(v - v_star)) <= 0.1


# --- n-step Q-returns and forward SARSA(lambda) ---------------------------------

def test_n_step_q_return_examples():
    traj = sa_episode()
    q = np.arange(12, dtype=float).reshape(4, 3)
    q[3] = 0.0
    assert n_step_q_return(traj, 0, 1, q, 0.9) == 1.0 + 0.9 * q[1, 0]
    assert n_step_q_return(traj, 1, 4, q, 0.9) == discounted_return([2.0, 3.0], 0.9)
    # three steps from t=0 reach the terminal: no bootstrap term
    assert n_step_q_return(traj, 0, 3, q, 0.5) == 1.0 + 0.5 * 2.0 + 0.25 * 3.0
    assert n_step_q_return(traj, 0, 2, q, 0.5) == 1.0 + 0.5 * 2.0 + 0.25 * q[2, 1]
    with pytest.raises(IndexError):
        n_step_q_return(traj, 5, 1, q, 0.9)


def test_lambda_q_return_two_step_example():
    traj = Trajectory([Step(0, 1, 1.0, 1, False), Step(1, 0, 2.0, 2, True)])
    q = np.zeros((3, 2))
    q[1, 0] = 10.0
    # q^(1) = 11, q^(2) = 3
    assert lambda_q_return(traj, 0, q, 0.5, 1.0) == pytest.approx(7.0, abs=1e-15)
    fwd = sarsa_lambda_forward_episode(traj, q.copy(), 1.0, 0.5, 1.0)
    assert fwd[0, 1] == pytest.approx(7.0) and fwd[1, 0] == pytest.approx(2.0)


def test_forward_sarsa_reductions():
    traj = sa_episode()
    q0 = np.random.default_rng(0).normal(size=(4, 3))
    q0[3] = 0.0
    fwd = sarsa_lambda_forward_episode(traj, q0.copy(), 0.5, 0.0, 0.9)
    expected = q0.copy()
    steps = traj.steps
    for t, step in enumerate(steps):
        target = step.reward if step.done else step.reward + 0.9 * q0[steps[t + 1].state, steps[t + 1].action]
        expected[step.state, step.action] += 0.5 * (target - q0[step.state, step.action])
    assert np.allclose(fwd, expected, atol=1e-15)
    full = lambda_q_returns(traj, q0, 1.0, 0.9)
    assert np.allclose(full, [1 + 0.9 * 2 + 0.81 * 3, 2 + 0.9 * 3, 3], atol=1e-12)


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_q_lambda_recursion_matches_enumeration(seed, lam):
    _, (traj,) = random_sa_episodes(1, seed)
    q = np.random.default_rng(seed).normal(size=(6, 3))
    rec = lambda_q_returns(traj, q, lam, 0.9)
    for t in range(len(traj)):
        assert rec[t] == pytest.approx(lambda_q_return(traj, t, q, lam, 0.9), abs=1e-9)


# --- backward SARSA(lambda) -----------------------------------------------------

@given(st.integers(0, 10_000))
def test_backward_sarsa_lambda_zero_equals_sarsa0(seed):
    rng = np.random.default_rng(seed)
    q1 = rng.normal(size=(5, 3))
    q2 = q1.copy()
    e = QTraceTable(5, 3, 0.0, 0.95)
    for _ in range(50):
        s, s2 = rng.integers(5, size=2)
        a, a2 = rng.integers(3, size=2)
        r, done = rng.normal(), bool(rng.random() < 0.2)
        sarsa0_update(q1, s, a, r, s2, a2, 0.2, 0.95, done)
        sarsa_lambda_backward_step(q2, e, s, a, r, s2, a2, 0.2, done)
        assert np.array_equal(q1, q2)


def test_backward_sarsa_zero_delta_and_trace_invariants():
    q = np.array([[1.8, 0.0], [2.0, 0.0]])
    e = QTraceTable(2, 2, 0.9, 0.9)
    assert np.array_equal(e.e, np.zeros((2, 2)))
    sarsa_lambda_backward_step(q, e, 0, 0, 0.0, 1, 0, 0.5)
    assert np.array_equal(q, [[1.8, 0.0], [2.0, 0.0]])
    sarsa_lambda_backward_step(q, e, 1, 1, 1.0, 0, 1, 0.5)
    assert np.all(e.e >= 0)
    sarsa_lambda_backward_step(q, e, 0, 1, 1.0, 1, 0, 0.5, done=True)
    assert np.array_equal(e.e, np.zeros((2, 2)))


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.7, 1.0])
def test_offline_backward_sarsa_matches_forward(lam):
    mdp, episodes = random_sa_episodes(30, seed=int(lam * 10) + 1)
    for traj in episodes:
        q0 = np.random.default_rng(len(traj)).normal(size=(mdp.n_states, mdp.n_actions))
        q0[-1] = 0.0
        fwd = sarsa_lambda_forward_episode(traj, q0.copy(), 0.1, lam, 0.9)
        bwd = sarsa_lambda_backward_episode(traj, q0.copy(), 0.1, lam, 0.9, online=False)
        assert np.max(np.abs(fwd - bwd)) <= 1e-9


# --- Q-learning -----------------------------------------------------------------

def test_q_learning_example_and_terminal():
    q = np.array([[0.0, 0.0], [2.0, -1.0]])
    q_learning_update(q, 0, 0, 1.0, 1, 0.5, 0.9)
    assert q[0, 0] == pytest.approx(1.4, abs=1e-15)
    q = np.array([[0.0], [7.0]])
    q_learning_update(q, 0, 0, 1.0, 1, 1.0, 0.9, done=True)
    assert q[0, 0] == 1.0


def test_q_learning_is_no_op_at_q_star_on_deterministic_mdp():
    _, mdp = make_gridworld()
    _, q_star = value_iteration_exact(mdp, tol=1e-12)
    for s in range(16):
        if mdp.is_terminal(s):
            continue
        for a in range(4):
            s2 = int(np.argmax(mdp.transition[s, a]))
            q = q_star.copy()
            q_learning_update(q, s, a, mdp.reward[s, a], s2, 0.5, 1.0, mdp.is_terminal(s2))
            assert q[s, a] == pytest.approx(q_star[s, a], abs=1e-9)


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 3))
def test_q_star_is_expected_update_fixed_point(seed, n_s, n_a):
    mdp = random_mdp(n_s, n_a, 0.9, seed=seed, n_terminals=1)
    _, q_star = value_iteration_exact(mdp, tol=1e-12)
    assert np.max(np.abs(expected_q_learning_update(mdp, q_star))) <= 1e-9


# --- policy improvement -----------------------------------------------------------

@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 4), st.sampled_from([0.05, 0.1, 0.3]))
def test_epsilon_greedy_improvement_never_hurts(seed, n_s, n_a, eps):
    mdp = random_mdp(n_s, n_a, 0.9, seed=seed)
    q_init = np.random.default_rng(seed).normal(size=(n_s, n_a))
    pi = epsilon_greedy_policy(q_init, eps)
    v_pi = policy_evaluation_exact(mdp, pi)
    pi_new = epsilon_greedy_policy(action_values_exact(mdp, pi), eps)
    v_new = policy_evaluation_exact(mdp, pi_new)
    assert np.all(v_new >= v_pi - 1e-9)
