"""
Softmax policies over linear features, their objectives and gradients, and
the actor-critic family built on them.

pi_theta(a | s) is proportional to exp(theta^T x(s, a)), with x taken from
``FeatureMap.state_action``. The score function of this family is
x(s, a) - sum_b pi(b | s) x(s, b).

Two objectives are available, both weighted by the stationary distribution d
of the chain induced by pi_theta:

* mean reward per step  J_avR = sum_s d(s) sum_a pi(a|s) R(s, a)
* mean value            J_avV = sum_s d(s) V(s)

For stationary d the identity J_avV = J_avR / (1 - gamma) holds, so both
share one exact gradient. That gradient is
sum_s d(s) sum_a pi(a|s) score(s, a) Q~(s, a) where Q~ are the differential
(average-reward) action values; with discounted action values instead the
same sum is only an approximation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rltrade.linear import FeatureMap, FeatureTrace, sgd_update
from rltrade.mdp import (
    TabularMdp,
    TabularPolicy,
    action_values_exact,
    draw_index,
    policy_evaluation_exact,
    policy_transition,
    stationary_distribution,
)


@dataclass
class SoftmaxPolicyParams:
    theta: np.ndarray
    fm: FeatureMap

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.fm.sa_dim,):
            raise ValueError(f"theta must have length {self.fm.sa_dim}, got {self.theta.shape}")

    @classmethod
    def zeros(cls, fm: FeatureMap) -> "SoftmaxPolicyParams":
        return cls(np.zeros(fm.sa_dim), fm)

    def copy(self) -> "SoftmaxPolicyParams":
        return SoftmaxPolicyParams(self.theta.copy(), self.fm)


def softmax_policy(params: SoftmaxPolicyParams, s: int) -> np.ndarray:
    logits = params.fm.state_action[s] @ params.theta
    z = np.exp(logits - logits.max())
    return z / z.sum()


def policy_table(params: SoftmaxPolicyParams) -> TabularPolicy:
    return TabularPolicy(np.array([softmax_policy(params, s) for s in range(params.fm.n_states)]))


def score_function(params: SoftmaxPolicyParams, s: int, a: int) -> np.ndarray:
    """grad_theta log pi_theta(a | s)."""
    x = params.fm.state_action[s]
    return x[a] - softmax_policy(params, s) @ x


def objective_mean_reward(mdp: TabularMdp, params: SoftmaxPolicyParams) -> float:
    policy = policy_table(params)
    d = stationary_distribution(mdp, policy)
    return float(d @ np.einsum("sa,sa->s", policy.probs, mdp.reward))


def objective_mean_value(mdp: TabularMdp, params: SoftmaxPolicyParams) -> float:
    policy = policy_table(params)
    d = stationary_distribution(mdp, policy)
    return float(d @ policy_evaluation_exact(mdp, policy))


def differential_action_values(mdp: TabularMdp, policy: TabularPolicy) -> tuple[np.ndarray, float]:
    """Average-reward action values Q~ (normalised so d^T h = 0) and the gain J."""
    P_pi, r_pi = policy_transition(mdp, policy)
    d = stationary_distribution(mdp, policy)
    gain = float(d @ r_pi)
    n = mdp.n_states
    # adding 1 d^T pins the free constant of h to d^T h = 0
    h = np.linalg.solve(np.eye(n) - P_pi + np.outer(np.ones(n), d), r_pi - gain)
    return mdp.reward - gain + mdp.transition @ h, gain


def _weights(mdp, params, policy, q_source, objective):
    if isinstance(q_source, str):
        if q_source == "exact":
            q, _ = differential_action_values(mdp, policy)
            if objective == "avV":
                if mdp.gamma >= 1.0:
                    raise ValueError("J_avV needs gamma < 1")
                q = q / (1.0 - mdp.gamma)
            return q
        if q_source == "discounted":
            return action_values_exact(mdp, policy)
        raise ValueError(f"unknown q_source {q_source!r}")
    q = np.asarray(q_source, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"q table must have shape {(mdp.n_states, mdp.n_actions)}")
    return q


def policy_gradient_estimate(
    mdp: TabularMdp,
    params: SoftmaxPolicyParams,
    q_source="exact",
    n_samples: int | None = None,
    seed: int | None = None,
    objective: str = "avR",
    baseline: bool = False,
) -> np.ndarray:
    """E_{s~d, a~pi}[score(s, a) Q(s, a)].

    ``q_source`` is ``"exact"`` (differential values, exact gradient of the
    chosen ``objective``), ``"discounted"`` (exact q_pi), or an (S, A) table
    such as a critic's Q_w evaluated everywhere. ``n_samples=None`` sums the
    expectation exactly; otherwise it is a Monte-Carlo average with ``seed``.
    ``baseline=True`` subtracts V(s) = sum_a pi(a|s) Q(s, a).
    """
    if objective not in ("avR", "avV"):
        raise ValueError(f"objective must be 'avR' or 'avV', got {objective!r}")
    policy = policy_table(params)
    q = _weights(mdp, params, policy, q_source, objective)
    if baseline:
        q = q - np.einsum("sa,sa->s", policy.probs, q)[:, None]
    d = stationary_distribution(mdp, policy)
    if n_samples is None:
        grad = np.zeros_like(params.theta)
        for s in range(mdp.n_states):
            if d[s] == 0.0:
                continue
            for a in range(mdp.n_actions):
                grad += d[s] * policy.probs[s, a] * q[s, a] * score_function(params, s, a)
        return grad
    return gradient_samples(mdp, params, q, n_samples, seed, d=d).mean(axis=0)


def gradient_samples(
    mdp: TabularMdp,
    params: SoftmaxPolicyParams,
    weighting,
    n_samples: int,
    seed: int | None = None,
    d: np.ndarray | None = None,
) -> np.ndarray:
    """Per-sample gradient terms score(s, a) * weight, shape (n_samples, dim).

    ``weighting`` is an (S, A) table, or one of ``"q"`` (exact discounted
    q_pi), ``"advantage"`` (q_pi - v_pi) or ``"td"`` (r + gamma v_pi(s') -
    v_pi(s) with s' sampled). Draw order per sample: state, action, then the
    successor state (always drawn, so streams align across weightings).
    """
    policy = policy_table(params)
    if d is None:
        d = stationary_distribution(mdp, policy)
    v = q = None
    mode = weighting if isinstance(weighting, str) else "table"
    if isinstance(weighting, str):
        v = policy_evaluation_exact(mdp, policy)
        q = action_values_exact(mdp, policy)
        if weighting not in ("q", "advantage", "td"):
            raise ValueError(f"unknown weighting {weighting!r}")
    else:
        table = np.asarray(weighting, dtype=float)
    rng = np.random.default_rng(seed)
    out = np.empty((n_samples, len(params.theta)))
    for i in range(n_samples):
        s = draw_index(d, rng)
        a = draw_index(policy.probs[s], rng)
        s_next = draw_index(mdp.transition[s, a], rng)
        if mode == "q":
            weight = q[s, a]
        elif mode == "advantage":
            weight = q[s, a] - v[s]
        elif mode == "td":
            weight = mdp.reward[s, a] + mdp.gamma * v[s_next] - v[s]
        else:
            weight = table[s, a]
        out[i] = weight * score_function(params, s, a)
    return out


@dataclass
class CriticParams:
    """Linear critic: kind ``"q"`` uses x(s, a) (Q_w); kind ``"v"`` uses x(s) (V_v)."""

    w: np.ndarray
    fm: FeatureMap
    kind: str = "q"

    def __post_init__(self):
        if self.kind not in ("q", "v"):
            raise ValueError(f"critic kind must be 'q' or 'v', got {self.kind!r}")
        dim = self.fm.sa_dim if self.kind == "q" else self.fm.dim
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (dim,):
            raise ValueError(f"critic weights must have length {dim}")

    @classmethod
    def zeros(cls, fm: FeatureMap, kind: str = "q") -> "CriticParams":
        return cls(np.zeros(fm.sa_dim if kind == "q" else fm.dim), fm, kind)

    def value(self, s: int, a: int | None = None) -> float:
        if self.kind == "q":
            return float(self.fm.state_action[s, a] @ self.w)
        return float(self.fm.state[s] @ self.w)


def actor_critic_step(
    params: SoftmaxPolicyParams,
    critic: CriticParams,
    s: int,
    a: int,
    r: float,
    s_next: int,
    a_next: int,
    alpha_actor: float,
    alpha_critic: float,
    gamma: float,
    done: bool = False,
) -> tuple[SoftmaxPolicyParams, CriticParams]:
    """Q actor-critic: theta += alpha_actor * score(s, a) * Q_w(s, a), then a SARSA(0) critic step.

    Both updates read the parameters as they were before this step.
    """
    if critic.kind != "q":
        raise ValueError("actor_critic_step needs an action-value critic")
    q_sa = critic.value(s, a)
    score = score_function(params, s, a)
    target = r if done else r + gamma * critic.value(s_next, a_next)
    sgd_update(critic.w, critic.fm.state_action[s, a], target, q_sa, alpha_critic)
    params.theta += alpha_actor * q_sa * score
    return params, critic


def actor_trace(dim: int, lam: float, gamma: float | None = None) -> FeatureTrace:
    """Actor eligibility trace; decays by lam alone unless ``gamma`` is given."""
    return FeatureTrace(dim, lam, 1.0 if gamma is None else gamma)


def advantage_actor_critic_step(
    params: SoftmaxPolicyParams,
    critic: CriticParams,
    trace: FeatureTrace | None,
    s: int,
    a: int,
    r: float,
    s_next: int,
    alpha_actor: float,
    alpha_critic: float,
    gamma: float,
    done: bool = False,
) -> tuple[SoftmaxPolicyParams, CriticParams, FeatureTrace | None]:
    """TD-error actor-critic with a state-value critic.

    delta = r + gamma V_v(s') - V_v(s). Without a trace the actor moves by
    alpha_actor * score * delta; with one, E <- decay * E + score and the actor
    moves by alpha_actor * E * delta. The trace is cleared after ``done``.
    """
    if critic.kind != "v":
        raise ValueError("advantage_actor_critic_step needs a state-value critic")
    v_s = critic.value(s)
    target = r if done else r + gamma * critic.value(s_next)
    delta = target - v_s
    score = score_function(params, s, a)
    sgd_update(critic.w, critic.fm.state[s], target, v_s, alpha_critic)
    if trace is None:
        params.theta += alpha_actor * delta * score
    else:
        trace.accumulate(score)
        params.theta += alpha_actor * delta * trace.e
        if done:
            trace.reset()
    return params, critic, trace
