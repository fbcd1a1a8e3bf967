"""
Model-free control on tabular action values: epsilon-greedy exploration,
SARSA(0), forward and backward SARSA(lambda), and Q-learning.

Q tables are ``np.ndarray`` of shape ``(n_states, n_actions)``; update
functions modify them in place and return them. ``done=True`` marks a
transition into a terminal state, whose action values read as 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rltrade.mdp import TabularMdp, TabularPolicy, Trajectory, discounted_return, draw_index
from rltrade.prediction import Alpha, check_finite, check_lambda, resolve_alpha


def epsilon_greedy(q: np.ndarray, s: int, epsilon: float) -> np.ndarray:
    """Action distribution that is greedy w.r.t. ``q[s]`` with probability 1 - epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    row = q[s]
    m = len(row)
    probs = np.full(m, epsilon / m)
    probs[int(np.argmax(row))] += 1.0 - epsilon
    return probs


def epsilon_greedy_policy(q: np.ndarray, epsilon: float) -> TabularPolicy:
    return TabularPolicy(np.array([epsilon_greedy(q, s, epsilon) for s in range(len(q))]))


def epsilon_greedy_action(q: np.ndarray, s: int, epsilon: float, rng: np.random.Generator) -> int:
    return draw_index(epsilon_greedy(q, s, epsilon), rng)


@dataclass(frozen=True)
class ExplorationSchedule:
    """epsilon_k = max(epsilon_min, epsilon_0 * decay**k) for episode index k.

    The defaults give a constant epsilon of 0.1.
    """

    epsilon0: float = 0.1
    epsilon_min: float = 0.0
    decay: float = 1.0

    def __post_init__(self):
        for name in ("epsilon0", "epsilon_min", "decay"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def __call__(self, episode: int) -> float:
        return max(self.epsilon_min, self.epsilon0 * self.decay**episode)


def sarsa_target(q: np.ndarray, r: float, s_next: int, a_next: int, gamma: float, done: bool) -> float:
    return r if done else r + gamma * q[s_next, a_next]


def sarsa0_update(
    q: np.ndarray,
    s: int,
    a: int,
    r: float,
    s_next: int,
    a_next: int,
    alpha: Alpha,
    gamma: float,
    done: bool = False,
) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma Q(s',a') - Q(s,a))."""
    step = resolve_alpha(alpha, (s, a))
    q[s, a] += step * (sarsa_target(q, r, s_next, a_next, gamma, done) - q[s, a])
    check_finite(q[s, a], "Q table")
    return q


def n_step_q_return(traj: Trajectory, t: int, n: int, q: np.ndarray, gamma: float) -> float:
    """q_t^(n): n discounted rewards then gamma^n Q(S_{t+n}, A_{t+n}).

    The bootstrap uses the action actually taken at t + n. Past a terminal the
    sum truncates with no bootstrap. A trajectory that stops without
    terminating cannot bootstrap from its final next state (no action was
    recorded there), so ``t + n`` must stay inside it.
    """
    T = len(traj)
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside trajectory of length {T}")
    if n < 1:
        raise ValueError("n must be >= 1")
    end = min(t + n, T)
    g = discounted_return([step.reward for step in traj.steps[t:end]], gamma)
    if traj.steps[end - 1].done:
        return g
    if end == T:
        raise IndexError("no recorded action to bootstrap from past the end of the trajectory")
    nxt = traj.steps[end]
    return g + gamma ** (end - t) * q[nxt.state, nxt.action]


def lambda_q_return(traj: Trajectory, t: int, q: np.ndarray, lam: float, gamma: float) -> float:
    """Episodic q_t^lambda with weights (1 - lam) lam^(n-1); leftover mass on the full return."""
    check_lambda(lam)
    T = len(traj)
    if not traj.terminated:
        raise ValueError("q lambda-return needs a terminated episode")
    horizon = T - t
    g_full = n_step_q_return(traj, t, horizon, q, gamma)
    if lam == 1.0:
        return g_full
    g = 0.0
    weight = 1.0 - lam
    for n in range(1, horizon):
        g += weight * n_step_q_return(traj, t, n, q, gamma)
        weight *= lam
    return g + lam ** (horizon - 1) * g_full


def lambda_q_returns(traj: Trajectory, q: np.ndarray, lam: float, gamma: float) -> np.ndarray:
    """All q_t^lambda of a terminated episode by backward recursion."""
    check_lambda(lam)
    if not traj.terminated:
        raise ValueError("q lambda-returns need a terminated episode")
    T = len(traj)
    out = np.empty(T)
    g = 0.0
    for t in range(T - 1, -1, -1):
        step = traj.steps[t]
        if step.done:
            g = step.reward
        else:
            nxt = traj.steps[t + 1]
            g = step.reward + gamma * ((1.0 - lam) * q[nxt.state, nxt.action] + lam * g)
        out[t] = g
    return out


def sarsa_lambda_forward_episode(
    traj: Trajectory, q: np.ndarray, alpha: Alpha, lam: float, gamma: float
) -> np.ndarray:
    """Forward SARSA(lambda): every pair moves toward q_t^lambda of the pre-episode Q."""
    if not traj.terminated:
        raise ValueError("forward SARSA(lambda) needs a terminated episode")
    snapshot = q.copy()
    targets = lambda_q_returns(traj, snapshot, lam, gamma)
    delta = np.zeros_like(q)
    for t, step in enumerate(traj):
        sa = (step.state, step.action)
        delta[sa] += resolve_alpha(alpha, sa) * (targets[t] - snapshot[sa])
    q += delta
    check_finite(q, "Q table")
    return q


@dataclass
class QTraceTable:
    """Accumulating eligibility traces per state-action pair, zero at episode start."""

    n_states: int
    n_actions: int
    lam: float
    gamma: float
    e: np.ndarray = field(init=False)

    def __post_init__(self):
        check_lambda(self.lam)
        self.e = np.zeros((self.n_states, self.n_actions))

    @property
    def decay(self) -> float:
        return self.gamma * self.lam

    def reset(self) -> None:
        self.e[:] = 0.0


def sarsa_lambda_backward_step(
    q: np.ndarray,
    e: QTraceTable,
    s: int,
    a: int,
    r: float,
    s_next: int,
    a_next: int,
    alpha: Alpha,
    done: bool = False,
) -> tuple[np.ndarray, QTraceTable]:
    """One backward SARSA(lambda) step; traces are cleared after a terminal transition."""
    e.e *= e.decay
    e.e[s, a] += 1.0
    delta = sarsa_target(q, r, s_next, a_next, e.gamma, done) - q[s, a]
    q += resolve_alpha(alpha, (s, a)) * delta * e.e
    check_finite(q, "Q table")
    if done:
        e.reset()
    return q, e


def sarsa_lambda_backward_episode(
    traj: Trajectory,
    q: np.ndarray,
    alpha: Alpha,
    lam: float,
    gamma: float,
    online: bool = True,
) -> np.ndarray:
    """Backward SARSA(lambda) over a recorded episode; ``online=False`` defers all updates."""
    e = QTraceTable(*q.shape, lam, gamma)
    steps = traj.steps
    if online:
        for t, step in enumerate(steps):
            a_next = steps[t + 1].action if t + 1 < len(steps) else 0
            sarsa_lambda_backward_step(
                q, e, step.state, step.action, step.reward, step.next_state, a_next, alpha, step.done
            )
        return q
    if not traj.terminated:
        raise ValueError("offline SARSA(lambda) needs a terminated episode")
    snapshot = q.copy()
    total = np.zeros_like(q)
    for t, step in enumerate(steps):
        e.e *= e.decay
        e.e[step.state, step.action] += 1.0
        a_next = steps[t + 1].action if not step.done else 0
        delta = sarsa_target(snapshot, step.reward, step.next_state, a_next, gamma, step.done)
        delta -= snapshot[step.state, step.action]
        total += resolve_alpha(alpha, (step.state, step.action)) * delta * e.e
    q += total
    check_finite(q, "Q table")
    return q


def q_learning_update(
    q: np.ndarray,
    s: int,
    a: int,
    r: float,
    s_next: int,
    alpha: Alpha,
    gamma: float,
    done: bool = False,
) -> np.ndarray:
    """Q(s,a) += alpha * (r + gamma max_a' Q(s',a') - Q(s,a)); the max is 0 at terminals."""
    target = r if done else r + gamma * np.max(q[s_next])
    step = resolve_alpha(alpha, (s, a))
    q[s, a] += step * (target - q[s, a])
    check_finite(q[s, a], "Q table")
    return q


def expected_q_learning_update(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """E[target] - Q(s,a) for every pair: the mean Q-learning increment per unit step size."""
    v_next = q.max(axis=1)
    v_next[mdp.terminal_mask] = 0.0
    out = mdp.reward + mdp.gamma * mdp.transition @ v_next - q
    out[mdp.terminal_mask] = 0.0
    return out
