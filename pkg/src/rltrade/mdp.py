"""
Finite Markov decision processes and exact dynamic-programming solvers.

Everything else in the package is checked against the solvers here, so they
favour clarity over speed: dense arrays, direct linear solves, and state
counts capped at ``MAX_STATES``.

Conventions
-----------
* ``transition[s, a, s']`` is P(s' | s, a); ``reward[s, a]`` is the expected
  immediate reward E[R_{t+1} | S_t = s, A_t = a].
* Terminal states are absorbing self-loops with zero reward and their values
  are pinned to 0.
* Value tables are plain ``np.ndarray`` of shape ``(n_states,)``; action-value
  tables have shape ``(n_states, n_actions)``.
* Argmax ties always go to the lowest index.
* Randomness comes from ``numpy.random.Generator`` (PCG64) built with
  ``np.random.default_rng(seed)``. Each sampled step consumes exactly one
  uniform draw for the action, one for the next state and, when the MDP has
  ``reward_noise > 0``, one standard normal for the reward, in that order.

MDP definition files
--------------------
Plain text, one directive per line, ``#`` starts a comment::

    n_states 5
    n_actions 1
    gamma 1.0
    terminal 0 4
    # s a s' p r
    1 0 0 0.5 0
    1 0 2 0.5 0
    ...

Each record is a transition ``(s, a, s', p, r)`` where ``r`` is the reward
received on that transition. Rows of terminal states may be omitted; they are
filled in as zero-reward self-loops. Every other ``(s, a)`` row must sum to 1.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

MAX_STATES = 10_000
STOCHASTIC_TOL = 1e-12


class SolverError(RuntimeError):
    """Raised when an exact solver's well-posedness condition fails."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with a dense transition kernel.

    ``transition_reward`` is optional. When given it holds the reward emitted
    on each ``(s, a, s')`` transition and ``reward`` is derived as its
    expectation. ``reward_noise`` adds zero-mean Gaussian noise to sampled
    rewards; the expected rewards (and all exact solvers) are unaffected.
    """

    transition: np.ndarray
    reward: np.ndarray | None = None
    gamma: float = 1.0
    terminal_states: frozenset[int] = field(default_factory=frozenset)
    transition_reward: np.ndarray | None = None
    reward_noise: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        n_s, n_a, _ = P.shape
        if n_s > MAX_STATES:
            raise ValueError(f"{n_s} states exceeds the exact-solver cap of {MAX_STATES}")
        if n_a < 1:
            raise ValueError("need at least one action")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise ValueError("transition probabilities must be finite and non-negative")
        sums = P.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if len(bad):
            s, a = bad[0]
            raise ValueError(f"transition row (s={s}, a={a}) sums to {sums[s, a]!r}, not 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.reward_noise < 0:
            raise ValueError("reward_noise must be >= 0")

        terminals = frozenset(int(s) for s in self.terminal_states)
        for s in terminals:
            if not 0 <= s < n_s:
                raise ValueError(f"terminal state {s} outside [0, {n_s})")

        R_sas = None
        if self.transition_reward is not None:
            R_sas = np.asarray(self.transition_reward, dtype=float)
            if R_sas.shape != P.shape:
                raise ValueError(f"transition_reward shape {R_sas.shape} != {P.shape}")
            derived = (P * R_sas).sum(axis=2)
            if self.reward is not None and not np.allclose(self.reward, derived, atol=1e-12):
                raise ValueError("reward disagrees with the expectation of transition_reward")
            R = derived
        elif self.reward is not None:
            R = np.asarray(self.reward, dtype=float)
        else:
            raise ValueError("either reward or transition_reward is required")
        if R.shape != (n_s, n_a):
            raise ValueError(f"reward must have shape {(n_s, n_a)}, got {R.shape}")
        if not np.all(np.isfinite(R)):
            raise ValueError("rewards must be finite")

        for s in terminals:
            if not np.all(P[s, :, s] == 1.0) or np.any(R[s] != 0.0):
                raise ValueError(f"terminal state {s} must be a zero-reward self-loop")
            if R_sas is not None and np.any(R_sas[s, :, s] != 0.0):
                raise ValueError(f"terminal state {s} must be a zero-reward self-loop")

        object.__setattr__(self, "transition", _readonly(P))
        object.__setattr__(self, "reward", _readonly(R))
        object.__setattr__(self, "terminal_states", terminals)
        object.__setattr__(self, "gamma", float(self.gamma))
        if R_sas is not None:
            object.__setattr__(self, "transition_reward", _readonly(R_sas))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def is_terminal(self, s: int) -> bool:
        return s in self.terminal_states

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask

    def replace(self, **changes) -> "TabularMdp":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TabularPolicy:
    """Stochastic policy ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError(f"policy must be 2-D (S, A), got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("policy probabilities must be finite and non-negative")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if len(bad):
            raise ValueError(f"policy row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        object.__setattr__(self, "probs", _readonly(p))

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "TabularPolicy":
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), np.asarray(actions, dtype=int)] = 1.0
        return cls(probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


class Step(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    done: bool


@dataclass
class Trajectory:
    """Ordered transitions of one episode, plus the seed that produced it."""

    steps: list[Step]
    seed: int | None = None

    def __post_init__(self):
        for t, step in enumerate(self.steps[:-1]):
            if step.done:
                raise ValueError(f"step {t} is marked done but is not the last step")
            if step.next_state != self.steps[t + 1].state:
                raise ValueError(f"next_state of step {t} does not match state of step {t + 1}")

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    def __getitem__(self, t):
        return self.steps[t]

    @property
    def terminated(self) -> bool:
        return bool(self.steps) and self.steps[-1].done

    @property
    def rewards(self) -> list[float]:
        return [step.reward for step in self.steps]

    @property
    def states(self) -> list[int]:
        return [step.state for step in self.steps]

    @property
    def actions(self) -> list[int]:
        return [step.action for step in self.steps]


def draw_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of one index from a probability vector."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    # cumsum may end a hair below 1
    return min(idx, len(probs) - 1)


def sample_reward(mdp: TabularMdp, s: int, a: int, s_next: int, rng: np.random.Generator) -> float:
    if mdp.transition_reward is not None:
        r = float(mdp.transition_reward[s, a, s_next])
    else:
        r = float(mdp.reward[s, a])
    if mdp.reward_noise > 0 and s not in mdp.terminal_states:
        r += mdp.reward_noise * rng.standard_normal()
    return r


def sample_episode(
    mdp: TabularMdp,
    policy: TabularPolicy,
    start: int,
    seed: int | np.random.Generator | None = None,
    max_steps: int = 1000,
) -> Trajectory:
    """Roll out ``policy`` from ``start`` until a terminal state or ``max_steps``.

    ``seed`` may also be an existing Generator, in which case its stream is
    continued (the trajectory's ``seed`` field is then ``None``).
    """
    if not 0 <= start < mdp.n_states:
        raise ValueError(f"start state {start} outside [0, {mdp.n_states})")
    if mdp.is_terminal(start):
        raise ValueError(f"start state {start} is terminal")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy shape {policy.probs.shape} does not match the MDP")

    rng = np.random.default_rng(seed)
    steps = []
    s = start
    for _ in range(max_steps):
        a = draw_index(policy.probs[s], rng)
        s_next = draw_index(mdp.transition[s, a], rng)
        r = sample_reward(mdp, s, a, s_next, rng)
        done = mdp.is_terminal(s_next)
        steps.append(Step(s, a, r, s_next, done))
        if done:
            break
        s = s_next
    return Trajectory(steps, seed if isinstance(seed, (int, np.integer)) else None)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma^k * rewards[k], folded right to left."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    return g


def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float = 0.9,
    seed: int | None = None,
    n_terminals: int = 0,
) -> TabularMdp:
    """Dense random MDP for tests and benchmarks.

    Transition rows are Dirichlet(1) draws and rewards standard normal. The
    last ``n_terminals`` states are terminal; since every row puts positive
    mass on them, every policy terminates and gamma = 1 is well-posed.
    """
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.standard_normal((n_states, n_actions))
    terminals = range(n_states - n_terminals, n_states)
    for s in terminals:
        P[s] = 0.0
        P[s, :, s] = 1.0
        R[s] = 0.0
    return TabularMdp(P, R, gamma, frozenset(terminals))


def policy_transition(mdp: TabularMdp, policy: TabularPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Return the state-to-state kernel P_pi and expected reward r_pi under ``policy``."""
    P_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    r_pi = np.einsum("sa,sa->s", policy.probs, mdp.reward)
    return P_pi, r_pi


def policy_evaluation_exact(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Solve v = r_pi + gamma P_pi v directly.

    Terminal values are pinned to 0, so only the non-terminal block is solved.
    Raises SolverError when (I - gamma P_pi) is singular on that block, e.g. a
    gamma = 1 policy that never reaches a terminal.
    """
    P_pi, r_pi = policy_transition(mdp, policy)
    live = ~mdp.terminal_mask
    v = np.zeros(mdp.n_states)
    if not live.any():
        return v
    M = np.eye(live.sum()) - mdp.gamma * P_pi[np.ix_(live, live)]
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SolverError(
            f"I - gamma*P_pi is singular (cond={cond:.3g}); the policy must reach a "
            "terminal state with probability 1 when gamma = 1"
        )
    v[live] = np.linalg.solve(M, r_pi[live])
    return v


def q_from_v(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    """One-step lookahead q(s, a) = R(s, a) + gamma * sum_s' P(s'|s,a) v(s'); terminal rows 0."""
    q = mdp.reward + mdp.gamma * mdp.transition @ v
    q[mdp.terminal_mask] = 0.0
    return q


def action_values_exact(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    return q_from_v(mdp, policy_evaluation_exact(mdp, policy))


def value_iteration_exact(
    mdp: TabularMdp, tol: float = 1e-10, max_iter: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Value iteration to a sup-norm change of at most ``tol``.

    Returns ``(v_star, q_star)`` with ``v_star == q_star.max(axis=1)`` exactly.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        v_new = q_from_v(mdp, v).max(axis=1)
        change = np.max(np.abs(v_new - v))
        v = v_new
        if change <= tol:
            break
    else:
        raise SolverError(
            f"value iteration did not reach tol={tol} within {max_iter} sweeps "
            "(gamma = 1 with a policy that can avoid terminals forever?)"
        )
    q = q_from_v(mdp, v)
    return q.max(axis=1), q


def greedy_policy_from_q(q: np.ndarray) -> TabularPolicy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    return TabularPolicy.deterministic(np.argmax(q, axis=1), q.shape[1])


def stationary_distribution(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Unique d with d^T P_pi = d^T and sum(d) = 1.

    Fails when the induced chain has more than one closed class, i.e. the
    stationary distribution is not unique. Periodic chains with a unique d are
    accepted.
    """
    P_pi, _ = policy_transition(mdp, policy)
    n = mdp.n_states
    M = P_pi.T - np.eye(n)
    rank = np.linalg.matrix_rank(M, tol=1e-10)
    if rank != n - 1:
        raise SolverError(
            f"induced chain has {n - rank} independent stationary distributions; "
            "a unique one needs a single closed communicating class"
        )
    A = np.vstack([M, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d, *_ = np.linalg.lstsq(A, b, rcond=None)
    if d.min() < -1e-10:
        raise SolverError(f"stationary solve produced a negative mass {d.min():.3g}")
    d = np.clip(d, 0.0, None)
    d /= d.sum()
    residual = np.max(np.abs(d @ P_pi - d))
    if residual > 1e-10:
        raise SolverError(f"stationary residual {residual:.3g} exceeds 1e-10")
    return d


def parse_mdp(text: str) -> TabularMdp:
    """Parse the plain-text MDP definition format (see module docstring)."""
    header: dict[str, float] = {}
    terminals: list[int] = []
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key in ("n_states", "n_actions"):
                header[key] = int(parts[1])
            elif key == "gamma":
                header[key] = float(parts[1])
            elif key == "reward_noise":
                header[key] = float(parts[1])
            elif key == "terminal":
                terminals.extend(int(x) for x in parts[1:])
            elif len(parts) == 5:
                s, a, s2 = (int(x) for x in parts[:3])
                records.append((s, a, s2, float(parts[3]), float(parts[4])))
            else:
                raise ValueError(f"unrecognised line {line!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None

    for key in ("n_states", "n_actions", "gamma"):
        if key not in header:
            raise ValueError(f"MDP file is missing '{key}'")
    n_s, n_a = int(header["n_states"]), int(header["n_actions"])
    P = np.zeros((n_s, n_a, n_s))
    R = np.zeros((n_s, n_a, n_s))
    for s, a, s2, p, r in records:
        if not (0 <= s < n_s and 0 <= a < n_a and 0 <= s2 < n_s):
            raise ValueError(f"record {(s, a, s2)} is out of range")
        P[s, a, s2] += p
        R[s, a, s2] = r
    for s in terminals:
        if 0 <= s < n_s and not P[s].any():
            P[s, :, s] = 1.0
    return TabularMdp(
        transition=P,
        gamma=header["gamma"],
        terminal_states=frozenset(terminals),
        transition_reward=R,
        reward_noise=header.get("reward_noise", 0.0),
    )


def load_mdp(path: str | Path) -> TabularMdp:
    return parse_mdp(Path(path).read_text())


def format_mdp(mdp: TabularMdp) -> str:
    """Serialise ``mdp`` to the text format; ``parse_mdp`` inverts it."""
    lines = [
        f"n_states {mdp.n_states}",
        f"n_actions {mdp.n_actions}",
        f"gamma {mdp.gamma!r}",
    ]
    if mdp.reward_noise:
        lines.append(f"reward_noise {mdp.reward_noise!r}")
    if mdp.terminal_states:
        lines.append("terminal " + " ".join(str(s) for s in sorted(mdp.terminal_states)))
    lines.append("# s a s' p r")
    R = mdp.transition_reward
    for s, a, s2 in zip(*np.nonzero(mdp.transition)):
        if s in mdp.terminal_states:
            continue
        r = R[s, a, s2] if R is not None else mdp.reward[s, a]
        lines.append(f"{s} {a} {s2} {float(mdp.transition[s, a, s2])!r} {float(r)!r}")
    return "\n".join(lines) + "\n"


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(format_mdp(mdp))
