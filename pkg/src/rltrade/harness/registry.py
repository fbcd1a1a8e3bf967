"""Name -> builder tables for environments, algorithms and feature maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from rltrade import agents
from rltrade.control import ExplorationSchedule
from rltrade.environments import (
    MdpEnv,
    TradingEnv,
    load_price_csv,
    make_bandit,
    make_gridworld,
    make_random_walk,
    random_walk_prices,
    sine_prices,
)
from rltrade.linear import FEATURE_MAPS, RIDGE_DEFAULT, make_feature_map
from rltrade.mdp import load_mdp

REQUIRED = object()


@dataclass(frozen=True)
class EnvSpec:
    build: Callable[..., tuple[Any, Any, float]]
    params: dict[str, Any]


def _random_walk(n_states):
    env, mdp = make_random_walk(n_states)
    return env, mdp, mdp.gamma


def _gridworld(width, height, step_reward, terminals, gamma):
    env, mdp = make_gridworld(width, height, step_reward, terminals, gamma)
    return env, mdp, gamma


def _bandit(rewards, gamma):
    env, mdp = make_bandit(rewards, gamma)
    return env, mdp, gamma


def _mdp_file(path, start):
    mdp = load_mdp(path)
    return MdpEnv(mdp, start), mdp, mdp.gamma


def _trading(source, length, drift, volatility, price_seed, period, amplitude, noise,
             path, window, cost, reward, eta, gamma):
    if source == "random_walk":
        prices = random_walk_prices(length, drift, volatility, price_seed)
    elif source == "sine":
        prices = sine_prices(length, period, amplitude, noise, price_seed)
    elif source == "csv":
        if path is None:
            raise ValueError("trading source 'csv' needs a path")
        prices = load_price_csv(path)
    else:
        raise ValueError(f"trading source must be random_walk, sine or csv, got {source!r}")
    return TradingEnv(prices, window, cost, reward, eta), None, gamma


ENVIRONMENTS: dict[str, EnvSpec] = {
    "random_walk": EnvSpec(_random_walk, {"n_states": 5}),
    "gridworld": EnvSpec(
        _gridworld,
        {"width": 4, "height": 4, "step_reward": -1.0, "terminals": None, "gamma": 1.0},
    ),
    "bandit": EnvSpec(_bandit, {"rewards": [1.0, 0.0], "gamma": 0.5}),
    "mdp_file": EnvSpec(_mdp_file, {"path": REQUIRED, "start": None}),
    "trading": EnvSpec(
        _trading,
        {
            "source": "random_walk", "length": 500, "drift": 0.0, "volatility": 0.01,
            "price_seed": 0, "period": 20.0, "amplitude": 5.0, "noise": 0.0, "path": None,
            "window": 3, "cost": 0.0, "reward": "dsr", "eta": 0.01, "gamma": 0.99,
        },
    ),
}

COMMON = {"episodes": 100, "max_steps": 1000, "gamma": None}
EXPLORATION = {"epsilon": 0.1, "epsilon_min": 0.0, "epsilon_decay": 1.0}
FEATURES = {"features": "one_hot", "feature_groups": 2, "feature_degree": 2}


@dataclass(frozen=True)
class AlgorithmSpec:
    family: str
    build: Callable[..., agents.Agent]
    params: dict[str, Any]
    # learning-rule functions the agent exercises; checked by the registry test
    uses: tuple[str, ...] = field(default=())


def _alpha(p):
    return None if p["alpha"] == "harmonic" else p["alpha"]


def _features(env, p):
    extra = {}
    if p["features"] == "aggregate":
        extra["groups"] = p["feature_groups"]
    elif p["features"] == "polynomial":
        extra["degree"] = p["feature_degree"]
    return make_feature_map(p["features"], env.n_states, env.n_actions, **extra)


def _terminals(env):
    mdp = getattr(env, "mdp", None)
    return sorted(mdp.terminal_states) if mdp is not None else ()


def _schedule(p):
    return ExplorationSchedule(p["epsilon"], p["epsilon_min"], p["epsilon_decay"])


ALGORITHMS: dict[str, AlgorithmSpec] = {
    "td0": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.TD0Agent(
            env.n_states, env.n_actions, g, _alpha(p), p["v_init"], terminals=_terminals(env)),
        {"alpha": "harmonic", "v_init": 0.0},
        ("prediction.td0_update",),
    ),
    "td_lambda": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.TDLambdaAgent(
            env.n_states, env.n_actions, g, _alpha(p), p["lambda"], v_init=p["v_init"],
            terminals=_terminals(env)),
        {"alpha": 0.1, "lambda": 0.5, "v_init": 0.0},
        ("prediction.td_lambda_backward_step", "prediction.trace_update_tabular"),
    ),
    "td_lambda_forward": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.ForwardTDLambdaAgent(
            env.n_states, env.n_actions, g, _alpha(p), p["lambda"], v_init=p["v_init"],
            terminals=_terminals(env)),
        {"alpha": 0.1, "lambda": 0.5, "v_init": 0.0},
        ("prediction.td_lambda_forward_episode",),
    ),
    "linear_td0": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.LinearTD0Agent(env.n_states, env.n_actions, g, _features(env, p), _alpha(p)),
        {"alpha": 0.1, **FEATURES},
        ("linear.td0_approx_step",),
    ),
    "linear_td": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.LinearTDAgent(
            env.n_states, env.n_actions, g, _features(env, p), _alpha(p), p["lambda"]),
        {"alpha": 0.1, "lambda": 0.0, **FEATURES},
        ("linear.td_lambda_approx_step",),
    ),
    "lstd": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.LSTDAgent(
            env.n_states, env.n_actions, g, _features(env, p), p["lambda"], p["ridge"]),
        {"lambda": 0.0, "ridge": RIDGE_DEFAULT, **FEATURES},
        ("linear.lstd_solve",),
    ),
    "lstdq": AlgorithmSpec(
        "prediction",
        lambda env, g, p: agents.LSTDQAgent(
            env.n_states, env.n_actions, g, _features(env, p), p["lambda"], p["ridge"]),
        {"lambda": 0.0, "ridge": RIDGE_DEFAULT, **FEATURES},
        ("linear.lstdq_solve",),
    ),
    "sarsa": AlgorithmSpec(
        "control",
        lambda env, g, p: agents.SarsaAgent(env.n_states, env.n_actions, g, _schedule(p), _alpha(p)),
        {"alpha": 0.1, **EXPLORATION},
        ("control.sarsa0_update", "control.epsilon_greedy"),
    ),
    "sarsa_lambda": AlgorithmSpec(
        "control",
        lambda env, g, p: agents.SarsaLambdaAgent(
            env.n_states, env.n_actions, g, _schedule(p), _alpha(p), p["lambda"]),
        {"alpha": 0.1, "lambda": 0.5, **EXPLORATION},
        ("control.sarsa_lambda_backward_step",),
    ),
    "sarsa_lambda_forward": AlgorithmSpec(
        "control",
        lambda env, g, p: agents.ForwardSarsaLambdaAgent(
            env.n_states, env.n_actions, g, _schedule(p), _alpha(p), p["lambda"]),
        {"alpha": 0.1, "lambda": 0.5, **EXPLORATION},
        ("control.sarsa_lambda_forward_episode",),
    ),
    "q_learning": AlgorithmSpec(
        "control",
        lambda env, g, p: agents.QLearningAgent(env.n_states, env.n_actions, g, _schedule(p), _alpha(p)),
        {"alpha": 0.1, **EXPLORATION},
        ("control.q_learning_update",),
    ),
    "linear_sarsa_lambda": AlgorithmSpec(
        "control",
        lambda env, g, p: agents.LinearSarsaLambdaAgent(
            env.n_states, env.n_actions, g, _schedule(p), _features(env, p), _alpha(p), p["lambda"]),
        {"alpha": 0.1, "lambda": 0.0, **EXPLORATION, **FEATURES},
        ("linear.sarsa_lambda_approx_step",),
    ),
    "actor_critic": AlgorithmSpec(
        "policy_gradient",
        lambda env, g, p: agents.ActorCriticAgent(g, _features(env, p), p["alpha_actor"], p["alpha_critic"]),
        {"alpha_actor": 0.01, "alpha_critic": None, **FEATURES},
        ("policy_gradient.actor_critic_step",),
    ),
    "advantage_actor_critic": AlgorithmSpec(
        "policy_gradient",
        lambda env, g, p: agents.AdvantageActorCriticAgent(
            g, _features(env, p), p["alpha_actor"], p["alpha_critic"], p["lambda"], p["trace_gamma"]),
        {"alpha_actor": 0.01, "alpha_critic": None, "lambda": 0.0, "trace_gamma": False, **FEATURES},
        ("policy_gradient.advantage_actor_critic_step",),
    ),
}

FEATURE_NAMES = tuple(sorted(FEATURE_MAPS))
