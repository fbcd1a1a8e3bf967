"""
Episode-level learners that wire the update rules to an ``Environment``.

Every agent follows the same loop (see ``run_episode``)::

    a = agent.begin(s, rng)
    repeat: s', r, done = env.step(a); a = agent.step(s, a, r, s', done, rng)
    agent.end(terminated)

so SARSA-style agents can pick the next action before updating. Each agent
also knows how to score itself against an exact oracle through
``rms_error(mdp)``: prediction agents against v_pi of their behaviour
policy, control agents against q*, and policy-gradient agents by the exact
value of their current policy against v*.
"""
from __future__ import annotations

import numpy as np

from rltrade import control, linear, prediction
from rltrade.linear import ExperienceBatch, FeatureMap, FeatureTrace, Transition
from rltrade.mdp import (
    TabularMdp,
    TabularPolicy,
    Step,
    Trajectory,
    action_values_exact,
    draw_index,
    policy_evaluation_exact,
    value_iteration_exact,
)
from rltrade.policy_gradient import (
    CriticParams,
    SoftmaxPolicyParams,
    actor_critic_step,
    actor_trace,
    advantage_actor_critic_step,
    policy_table,
    softmax_policy,
)
from rltrade.prediction import StepSize


def _rms(estimate: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    return float(np.sqrt(np.mean((estimate[mask] - truth[mask]) ** 2)))


class Agent:
    gamma: float

    def begin(self, s: int, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def step(self, s, a, r, s_next, done, rng) -> int:
        raise NotImplementedError

    def end(self, terminated: bool) -> None:
        pass

    def rms_error(self, mdp: TabularMdp) -> float | None:
        return None


def run_episode(env, agent: Agent, rng: np.random.Generator, max_steps: int) -> tuple[float, int]:
    """Play one episode; returns (undiscounted sum of rewards, steps taken)."""
    s = env.reset()
    a = agent.begin(s, rng)
    total, n = 0.0, 0
    done = False
    while n < max_steps:
        s_next, r, done = env.step(a)
        total += r
        n += 1
        a_next = agent.step(s, a, r, s_next, done, rng)
        if done:
            break
        s, a = s_next, a_next
    agent.end(done)
    return total, n


# --- prediction ----------------------------------------------------------------

class PredictionAgent(Agent):
    """Evaluates a fixed behaviour policy (uniform random unless given)."""

    def __init__(self, n_states, n_actions, gamma, policy: TabularPolicy | None = None):
        self.gamma = gamma
        self.policy = policy or TabularPolicy.uniform(n_states, n_actions)
        self._truth = None

    def act(self, s, rng) -> int:
        return draw_index(self.policy.probs[s], rng)

    def begin(self, s, rng):
        return self.act(s, rng)

    def values(self) -> np.ndarray:
        raise NotImplementedError

    def rms_error(self, mdp):
        if self._truth is None:
            self._truth = policy_evaluation_exact(mdp, self.policy)
        return _rms(self.values(), self._truth, ~mdp.terminal_mask)


class TD0Agent(PredictionAgent):
    def __init__(self, n_states, n_actions, gamma, alpha=None, v_init=0.0, policy=None, terminals=()):
        super().__init__(n_states, n_actions, gamma, policy)
        self.alpha = StepSize(alpha)
        self.v = np.full(n_states, float(v_init))
        self.v[list(terminals)] = 0.0

    def step(self, s, a, r, s_next, done, rng):
        prediction.td0_update(self.v, s, r, s_next, self.alpha, self.gamma, done)
        return self.act(s_next, rng)

    def values(self):
        return self.v


class TDLambdaAgent(TD0Agent):
    """Online backward TD(lambda)."""

    def __init__(self, n_states, n_actions, gamma, alpha=None, lam=0.0, **kw):
        super().__init__(n_states, n_actions, gamma, alpha, **kw)
        self.trace = prediction.TraceTable(n_states, lam, gamma)

    def begin(self, s, rng):
        self.trace.reset()
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        prediction.td_lambda_backward_step(self.v, self.trace, s, r, s_next, self.alpha, done)
        return self.act(s_next, rng)


class ForwardTDLambdaAgent(TD0Agent):
    """Forward-view TD(lambda): updates once per terminated episode."""

    def __init__(self, n_states, n_actions, gamma, alpha=None, lam=0.0, **kw):
        super().__init__(n_states, n_actions, gamma, alpha, **kw)
        self.lam = lam
        self.steps: list[Step] = []

    def begin(self, s, rng):
        self.steps = []
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        self.steps.append(Step(s, a, r, s_next, done))
        return self.act(s_next, rng)

    def end(self, terminated):
        # truncated episodes have no lambda-return and are dropped
        if terminated:
            prediction.td_lambda_forward_episode(Trajectory(self.steps), self.v, self.alpha, self.lam, self.gamma)


class LinearTDAgent(PredictionAgent):
    """Semi-gradient TD(lambda) on v_hat with a feature-space trace."""

    def __init__(self, n_states, n_actions, gamma, fm: FeatureMap, alpha=0.1, lam=0.0, policy=None):
        super().__init__(n_states, n_actions, gamma, policy)
        self.fm = fm
        self.alpha = StepSize(alpha)
        self.w = np.zeros(fm.dim)
        self.trace = FeatureTrace(fm.dim, lam, gamma)

    def begin(self, s, rng):
        self.trace.reset()
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        linear.td_lambda_approx_step(self.w, self.trace, self.fm, s, r, s_next, self.alpha, done)
        return self.act(s_next, rng)

    def values(self):
        return self.fm.state @ self.w


class LinearTD0Agent(LinearTDAgent):
    """Semi-gradient TD(0) on v_hat, without a trace."""

    def __init__(self, n_states, n_actions, gamma, fm: FeatureMap, alpha=0.1, policy=None):
        super().__init__(n_states, n_actions, gamma, fm, alpha, 0.0, policy)

    def step(self, s, a, r, s_next, done, rng):
        linear.td0_approx_step(self.w, self.fm, s, r, s_next, self.alpha, self.gamma, done)
        return self.act(s_next, rng)


class LSTDAgent(PredictionAgent):
    """Collects experience and re-solves LSTD(lambda) after every episode."""

    def __init__(self, n_states, n_actions, gamma, fm: FeatureMap, lam=0.0, ridge=linear.RIDGE_DEFAULT, policy=None):
        super().__init__(n_states, n_actions, gamma, policy)
        self.fm = fm
        self.lam = lam
        self.ridge = ridge
        self.batch = ExperienceBatch()
        self.w = np.zeros(fm.dim)

    def step(self, s, a, r, s_next, done, rng):
        a_next = self.act(s_next, rng)
        self.batch.append(Transition(s, a, r, s_next, a_next, done))
        return a_next

    def end(self, terminated):
        if self.batch:
            self.w = linear.lstd_solve(self.batch, self.fm, self.gamma, self.lam, self.ridge).w

    def values(self):
        return self.fm.state @ self.w


class LSTDQAgent(LSTDAgent):
    """LSTDQ(lambda) evaluation of the behaviour policy's action values."""

    def __init__(self, n_states, n_actions, gamma, fm, lam=0.0, ridge=linear.RIDGE_DEFAULT, policy=None):
        super().__init__(n_states, n_actions, gamma, fm, lam, ridge, policy)
        self.w = np.zeros(fm.sa_dim)

    def end(self, terminated):
        if self.batch:
            self.w = linear.lstdq_solve(self.batch, self.fm, self.policy, self.gamma, self.lam, self.ridge).w

    def q_values(self):
        return self.fm.state_action @ self.w

    def rms_error(self, mdp):
        if self._truth is None:
            self._truth = action_values_exact(mdp, self.policy)
        return _rms(self.q_values(), self._truth, ~mdp.terminal_mask)


# --- control ------------------------------------------------------------------

class ControlAgent(Agent):
    """Epsilon-greedy behaviour over its own action-value estimate."""

    def __init__(self, n_states, n_actions, gamma, schedule: control.ExplorationSchedule):
        self.gamma = gamma
        self.schedule = schedule
        self.episode = 0
        self.n_actions = n_actions
        self._truth = None

    @property
    def epsilon(self) -> float:
        return self.schedule(self.episode)

    def q_values(self) -> np.ndarray:
        raise NotImplementedError

    def act(self, s, rng):
        return control.epsilon_greedy_action(self.q_values(), s, self.epsilon, rng)

    def begin(self, s, rng):
        return self.act(s, rng)

    def end(self, terminated):
        self.episode += 1

    def rms_error(self, mdp):
        if self._truth is None:
            self._truth = value_iteration_exact(mdp)[1]
        return _rms(self.q_values(), self._truth, ~mdp.terminal_mask)


class SarsaAgent(ControlAgent):
    def __init__(self, n_states, n_actions, gamma, schedule, alpha=0.1):
        super().__init__(n_states, n_actions, gamma, schedule)
        self.alpha = StepSize(alpha)
        self.q = np.zeros((n_states, n_actions))

    def q_values(self):
        return self.q

    def step(self, s, a, r, s_next, done, rng):
        a_next = 0 if done else self.act(s_next, rng)
        control.sarsa0_update(self.q, s, a, r, s_next, a_next, self.alpha, self.gamma, done)
        return a_next


class SarsaLambdaAgent(SarsaAgent):
    def __init__(self, n_states, n_actions, gamma, schedule, alpha=0.1, lam=0.0):
        super().__init__(n_states, n_actions, gamma, schedule, alpha)
        self.trace = control.QTraceTable(n_states, n_actions, lam, gamma)

    def begin(self, s, rng):
        self.trace.reset()
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        a_next = 0 if done else self.act(s_next, rng)
        control.sarsa_lambda_backward_step(self.q, self.trace, s, a, r, s_next, a_next, self.alpha, done)
        return a_next


class ForwardSarsaLambdaAgent(SarsaAgent):
    def __init__(self, n_states, n_actions, gamma, schedule, alpha=0.1, lam=0.0):
        super().__init__(n_states, n_actions, gamma, schedule, alpha)
        self.lam = lam
        self.steps: list[Step] = []

    def begin(self, s, rng):
        self.steps = []
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        self.steps.append(Step(s, a, r, s_next, done))
        return 0 if done else self.act(s_next, rng)

    def end(self, terminated):
        if terminated:
            control.sarsa_lambda_forward_episode(Trajectory(self.steps), self.q, self.alpha, self.lam, self.gamma)
        super().end(terminated)


class QLearningAgent(SarsaAgent):
    def step(self, s, a, r, s_next, done, rng):
        control.q_learning_update(self.q, s, a, r, s_next, self.alpha, self.gamma, done)
        return 0 if done else self.act(s_next, rng)


class LinearSarsaLambdaAgent(ControlAgent):
    def __init__(self, n_states, n_actions, gamma, schedule, fm: FeatureMap, alpha=0.1, lam=0.0):
        super().__init__(n_states, n_actions, gamma, schedule)
        self.fm = fm
        self.alpha = StepSize(alpha)
        self.w = np.zeros(fm.sa_dim)
        self.trace = FeatureTrace(fm.sa_dim, lam, gamma)

    def q_values(self):
        return self.fm.state_action @ self.w

    def begin(self, s, rng):
        self.trace.reset()
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        a_next = 0 if done else self.act(s_next, rng)
        linear.sarsa_lambda_approx_step(self.w, self.trace, s, a, r, s_next, a_next, self.fm, self.alpha, done)
        return a_next


# --- policy gradient ------------------------------------------------------------

class PolicyGradientAgent(Agent):
    def __init__(self, gamma, fm: FeatureMap):
        self.gamma = gamma
        self.params = SoftmaxPolicyParams.zeros(fm)
        self._truth = None

    def act(self, s, rng):
        return draw_index(softmax_policy(self.params, s), rng)

    def begin(self, s, rng):
        return self.act(s, rng)

    def rms_error(self, mdp):
        if self._truth is None:
            self._truth = value_iteration_exact(mdp)[0]
        v = policy_evaluation_exact(mdp, policy_table(self.params))
        return _rms(v, self._truth, ~mdp.terminal_mask)


class ActorCriticAgent(PolicyGradientAgent):
    def __init__(self, gamma, fm, alpha_actor=0.01, alpha_critic=None):
        super().__init__(gamma, fm)
        self.critic = CriticParams.zeros(fm, "q")
        self.alpha_actor = alpha_actor
        self.alpha_critic = 10 * alpha_actor if alpha_critic is None else alpha_critic

    def step(self, s, a, r, s_next, done, rng):
        a_next = 0 if done else self.act(s_next, rng)
        actor_critic_step(
            self.params, self.critic, s, a, r, s_next, a_next,
            self.alpha_actor, self.alpha_critic, self.gamma, done,
        )
        return a_next


class AdvantageActorCriticAgent(PolicyGradientAgent):
    """TD-error actor-critic; lam > 0 adds an actor eligibility trace."""

    def __init__(self, gamma, fm, alpha_actor=0.01, alpha_critic=None, lam=0.0, trace_gamma=False):
        super().__init__(gamma, fm)
        self.critic = CriticParams.zeros(fm, "v")
        self.alpha_actor = alpha_actor
        self.alpha_critic = 10 * alpha_actor if alpha_critic is None else alpha_critic
        self.trace = None
        if lam > 0:
            self.trace = actor_trace(fm.sa_dim, lam, gamma if trace_gamma else None)

    def begin(self, s, rng):
        if self.trace is not None:
            self.trace.reset()
        return self.act(s, rng)

    def step(self, s, a, r, s_next, done, rng):
        advantage_actor_critic_step(
            self.params, self.critic, self.trace, s, a, r, s_next,
            self.alpha_actor, self.alpha_critic, self.gamma, done,
        )
        return 0 if done else self.act(s_next, rng)
