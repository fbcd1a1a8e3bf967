import numpy as np
import pytest
from hypothesis import given, strategies as st

from rltrade.environments import make_random_walk
from rltrade.mdp import Step, TabularPolicy, Trajectory, discounted_return, policy_evaluation_exact, random_mdp, sample_episode
from rltrade.prediction import (
    StepSize,
    TraceTable,
    incremental_mean,
    lambda_return,
    lambda_returns,
    n_step_return,
    td0_update,
    td_lambda_backward_episode,
    td_lambda_backward_step,
    td_lambda_forward_episode,
    trace_update_tabular,
)


def three_step():
    # 0 -> 1 -> 2 -> 3 (terminal), rewards 1, 2, 3
    return Trajectory([Step(0, 0, 1.0, 1, False), Step(1, 0, 2.0, 2, False), Step(2, 0, 3.0, 3, True)])


def random_episodes(n, seed, n_states=6, max_len=10):
    mdp = random_mdp(n_states, 2, 0.9, seed=seed, n_terminals=1)
    pol = TabularPolicy.uniform(n_states, 2)
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        traj = sample_episode(mdp, pol, int(rng.integers(n_states - 1)), seed=rng, max_steps=max_len)
        if traj.terminated:
            out.append(traj)
    return mdp, out


# --- incremental mean and step sizes --------------------------------------------

def test_incremental_mean_examples():
    assert incremental_mean(0.0, 2.0, 1) == 2.0
    mu = 0.0
    for k, x in enumerate([2, 4, 6], 1):
        mu = incremental_mean(mu, x, k)
    assert mu == 4.0
    with pytest.raises(ValueError):
        incremental_mean(0.0, 1.0, 0)


def test_incremental_mean_matches_batch_mean():
    xs = np.random.default_rng(0).uniform(size=1000)
    mu = 0.0
    for k, x in enumerate(xs, 1):
        mu = incremental_mean(mu, x, k)
    assert mu == pytest.approx(xs.mean(), abs=1e-10)


def test_harmonic_step_size_reproduces_running_mean():
    xs = np.random.default_rng(1).normal(size=200)
    v = np.zeros(2)
    alpha = StepSize()
    for k, x in enumerate(xs, 1):
        td0_update(v, 0, x, 1, alpha, 1.0, done=True)
        assert v[0] == pytest.approx(xs[:k].mean(), abs=1e-12)


def test_step_size_range():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            StepSize(bad)
    v = np.zeros(2)
    with pytest.raises(ValueError):
        td0_update(v, 0, 0.0, 1, 2.0, 1.0)


# --- TD(0) ------------------------------------------------------------------------

def test_td0_example():
    v = np.array([0.5, 0.7])
    td0_update(v, 0, 0.0, 1, 0.1, 1.0)
    assert v[0] == pytest.approx(0.52, abs=1e-15)
    assert v[1] == 0.7


def test_td0_fixed_point_and_terminal_bootstrap():
    v = np.array([0.9, 1.0])
    td0_update(v, 0, 0.0, 1, 0.3, 0.9)
    assert np.array_equal(v, [0.9, 1.0])
    v = np.array([0.0, 5.0])
    td0_update(v, 0, 1.0, 1, 0.5, 1.0, done=True)
    assert v[0] == 0.5


def test_td0_rejects_non_finite_results():
    v = np.array([1e308, 1e308])
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        td0_update(v, 0, 1e308, 1, 1.0, 1.0)


def test_td0_sweeps_converge_to_v_pi():
    _, mdp = make_random_walk(5)
    truth = policy_evaluation_exact(mdp, TabularPolicy.uniform(7, 1))
    transitions = [(s, s2) for s in range(1, 6) for s2 in (s - 1, s + 1)]
    # live states start at 0.5; from zero the harmonic average's bias decays too slowly
    v = np.where(mdp.terminal_mask, 0.0, 0.5)
    alpha = StepSize()
    for _ in range(1000):
        for s, s2 in transitions:
            r = mdp.transition_reward[s, 0, s2]
            td0_update(v, s, r, s2, alpha, 1.0, done=mdp.is_terminal(s2))
    assert np.max(np.abs(v - truth)) < 0.05


# --- n-step and lambda returns --------------------------------------------------

def test_n_step_return_examples():
    traj = three_step()
    v = np.zeros(4)
    v[2] = 10.0
    assert n_step_return(traj, 0, 2, v, 1.0) == 13.0
    assert n_step_return(traj, 1, 5, v, 0.9) == discounted_return([2.0, 3.0], 0.9)
    v = np.array([0.0, 4.0, 0.0, 0.0])
    assert n_step_return(traj, 0, 1, v, 0.5) == 1.0 + 0.5 * 4.0
    with pytest.raises(IndexError):
        n_step_return(traj, 3, 1, v, 1.0)


def test_lambda_return_reductions_and_example():
    traj = three_step()
    v = np.array([0.0, 4.0, 7.0, 0.0])
    assert lambda_return(traj, 0, v, 0.0, 0.9) == n_step_return(traj, 0, 1, v, 0.9)
    assert lambda_return(traj, 0, v, 1.0, 0.9) == discounted_return([1.0, 2.0, 3.0], 0.9)
    two = Trajectory([Step(0, 0, 1.0, 1, False), Step(1, 0, 2.0, 2, True)])
    v = np.array([0.0, 10.0, 0.0])
    assert lambda_return(two, 0, v, 0.5, 1.0) == pytest.approx(7.0, abs=1e-15)
    with pytest.raises(ValueError):
        lambda_return(two, 0, v, 1.5, 1.0)


@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.sampled_from([0.5, 0.9, 1.0]))
def test_lambda_return_recursion_matches_enumeration(seed, lam, gamma):
    _, (traj,) = random_episodes(1, seed)
    v = np.random.default_rng(seed).normal(size=6)
    rec = lambda_returns(traj, v, lam, gamma)
    for t in range(len(traj)):
        assert rec[t] == pytest.approx(lambda_return(traj, t, v, lam, gamma), abs=1e-9)


# --- forward TD(lambda) ---------------------------------------------------------

def test_forward_lambda_zero_is_td0_against_snapshot():
    traj = three_step()
    v0 = np.array([0.1, 0.2, 0.3, 0.0])
    fwd = td_lambda_forward_episode(traj, v0.copy(), 0.5, 0.0, 0.9)
    expected = v0.copy()
    for step in traj:
        target = step.reward + (0.0 if step.done else 0.9 * v0[step.next_state])
        expected[step.state] += 0.5 * (target - v0[step.state])
    assert np.allclose(fwd, expected, atol=1e-15)


def test_forward_lambda_one_moves_toward_full_return():
    traj = three_step()
    v0 = np.array([0.1, 0.2, 0.3, 0.0])
    fwd = td_lambda_forward_episode(traj, v0.copy(), 1.0, 1.0, 1.0)
    assert np.allclose(fwd[:3], [6.0, 5.0, 3.0])


def test_forward_matches_hand_enumeration():
    traj = Trajectory([Step(0, 0, 0.5, 1, False), Step(1, 0, -1.0, 0, False), Step(0, 0, 2.0, 2, True)])
    v0 = np.array([0.4, -0.3, 0.0])
    lam, gamma, alpha = 0.6, 0.8, 0.25
    # G^(n) enumerated by hand for each t
    g = {
        (0, 1): 0.5 + gamma * v0[1],
        (0, 2): 0.5 - gamma + gamma**2 * v0[0],
        (0, 3): 0.5 - gamma + 2 * gamma**2,
        (1, 1): -1.0 + gamma * v0[0],
        (1, 2): -1.0 + 2 * gamma,
        (2, 1): 2.0,
    }
    G0 = (1 - lam) * g[0, 1] + (1 - lam) * lam * g[0, 2] + lam**2 * g[0, 3]
    G1 = (1 - lam) * g[1, 1] + lam * g[1, 2]
    G2 = g[2, 1]
    expected = v0.copy()
    expected[0] += alpha * (G0 - v0[0]) + alpha * (G2 - v0[0])
    expected[1] += alpha * (G1 - v0[1])
    fwd = td_lambda_forward_episode(traj, v0.copy(), alpha, lam, gamma)
    assert np.allclose(fwd, expected, atol=1e-12)


def test_forward_requires_terminated_episode():
    traj = Trajectory([Step(0, 0, 1.0, 1, False)])
    with pytest.raises(ValueError):
        td_lambda_forward_episode(traj, np.zeros(2), 0.1, 0.5, 1.0)


# --- traces and backward TD(lambda) ---------------------------------------------

def test_trace_examples():
    e = TraceTable(3, 0.5, 0.9)
    trace_update_tabular(e, 1)
    assert np.array_equal(e.e, [0, 1, 0])
    trace_update_tabular(e, 1)
    assert e.e[1] == pytest.approx(1.45, abs=1e-15)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=60), st.floats(0, 1), st.floats(0.01, 1))
def test_trace_closed_form_and_bounds(visits, lam, gamma):
    e = TraceTable(5, lam, gamma)
    for s in visits:
        trace_update_tabular(e, s)
    t = len(visits) - 1
    closed = np.zeros(5)
    for k, s in enumerate(visits):
        closed[s] += (gamma * lam) ** (t - k)
    assert np.allclose(e.e, closed, atol=1e-12, rtol=0)
    assert np.all(e.e >= 0)
    if gamma * lam < 1:
        assert np.all(e.e <= 1 / (1 - gamma * lam) + 1)


@given(st.integers(0, 10_000))
def test_backward_lambda_zero_equals_td0_exactly(seed):
    rng = np.random.default_rng(seed)
    v1 = rng.normal(size=6)
    v2 = v1.copy()
    e = TraceTable(6, 0.0, 0.9)
    for _ in range(50):
        s, s2 = rng.integers(6, size=2)
        r, done = rng.normal(), bool(rng.random() < 0.2)
        td0_update(v1, s, r, s2, 0.3, 0.9, done)
        td_lambda_backward_step(v2, e, s, r, s2, 0.3, done)
        assert np.array_equal(v1, v2)


def test_backward_zero_delta_leaves_values():
    v = np.array([0.9, 1.0, 0.0])
    e = TraceTable(3, 0.8, 0.9)
    e.e[:] = [3.0, 2.0, 0.5]
    td_lambda_backward_step(v, e, 0, 0.0, 1, 0.5)
    assert np.array_equal(v, [0.9, 1.0, 0.0])


def test_backward_resets_traces_at_episode_end():
    v = np.zeros(3)
    e = TraceTable(3, 0.9, 1.0)
    td_lambda_backward_step(v, e, 0, 0.0, 1, 0.5)
    td_lambda_backward_step(v, e, 1, 1.0, 2, 0.5, done=True)
    assert np.array_equal(e.e, np.zeros(3))


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.7, 1.0])
def test_offline_backward_matches_forward(lam):
    mdp, episodes = random_episodes(30, seed=int(lam * 10))
    for traj in episodes:
        v0 = np.random.default_rng(len(traj)).normal(size=mdp.n_states)
        v0[-1] = 0.0
        fwd = td_lambda_forward_episode(traj, v0.copy(), 0.1, lam, 0.9)
        bwd = td_lambda_backward_episode(traj, v0.copy(), 0.1, lam, 0.9, online=False)
        assert np.max(np.abs(fwd - bwd)) <= 1e-9


def test_online_backward_episode_runs_steps():
    _, (traj,) = random_episodes(1, seed=3)
    v1 = np.zeros(6)
    td_lambda_backward_episode(traj, v1, 0.2, 0.5, 0.9)
    v2 = np.zeros(6)
    e = TraceTable(6, 0.5, 0.9)
    for step in traj:
        td_lambda_backward_step(v2, e, step.state, step.reward, step.next_state, 0.2, step.done)
    assert np.array_equal(v1, v2)
