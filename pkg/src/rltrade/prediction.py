"""
Model-free policy evaluation: TD(0), n-step and lambda-returns, and TD(lambda)
in both its forward (lambda-return) and backward (eligibility trace) forms.

Value tables are ``np.ndarray`` indexed by state. Update functions modify the
table they are given in place and return it. Terminal successors bootstrap
with value 0: pass ``done=True`` for the transition that enters a terminal.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Union

import numpy as np

from rltrade.mdp import Trajectory, discounted_return


class StepSize:
    """Learning rate: a constant, or the harmonic schedule 1/(k+1).

    For the harmonic schedule ``k`` counts previous updates of the same key
    (usually a state), so the first update of each key uses alpha = 1 and the
    sequence of estimates is exactly the running mean of the targets.

    >>> lr = StepSize()
    >>> [lr(0), lr(0), lr(1), lr(0)]
    [1.0, 0.5, 1.0, 0.3333333333333333]
    """

    def __init__(self, alpha: float | None = None):
        if alpha is not None:
            check_alpha(alpha)
        self.alpha = alpha
        self.visits: defaultdict[Hashable, int] = defaultdict(int)

    @property
    def harmonic(self) -> bool:
        return self.alpha is None

    def __call__(self, key: Hashable = None) -> float:
        if self.alpha is not None:
            return self.alpha
        k = self.visits[key]
        self.visits[key] = k + 1
        return 1.0 / (k + 1)

    def __repr__(self):
        return "StepSize(harmonic)" if self.harmonic else f"StepSize({self.alpha})"


Alpha = Union[float, StepSize]


def check_alpha(alpha: float) -> float:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"step size must lie in (0, 1], got {alpha}")
    return alpha


def resolve_alpha(alpha: Alpha, key: Hashable = None) -> float:
    if isinstance(alpha, StepSize):
        return alpha(key)
    return check_alpha(alpha)


def check_finite(table: np.ndarray, what: str = "value table") -> None:
    if not np.all(np.isfinite(table)):
        raise FloatingPointError(f"{what} became non-finite")


def incremental_mean(mu_prev: float, x_k: float, k: int) -> float:
    """Mean of x_1..x_k given the mean of x_1..x_{k-1}; ``mu_prev`` is ignored for k = 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return float(x_k)
    return mu_prev + (x_k - mu_prev) / k


def td0_update(
    v: np.ndarray,
    s: int,
    r: float,
    s_next: int,
    alpha: Alpha,
    gamma: float,
    done: bool = False,
) -> np.ndarray:
    """V(s) += alpha * (r + gamma V(s') - V(s))."""
    a = resolve_alpha(alpha, s)
    target = r if done else r + gamma * v[s_next]
    v[s] += a * (target - v[s])
    check_finite(v[s])
    return v


def n_step_return(
    traj: Trajectory, t: int, n: int, v: np.ndarray, gamma: float
) -> float:
    """G_t^(n): n discounted rewards then gamma^n V(S_{t+n}).

    If the episode ends (or the recorded trajectory stops) before t + n, the
    sum truncates: an episode that terminated contributes no bootstrap term,
    while a truncated trajectory bootstraps from the last recorded next state.
    """
    T = len(traj)
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside trajectory of length {T}")
    if n < 1:
        raise ValueError("n must be >= 1")
    end = min(t + n, T)
    g = discounted_return([step.reward for step in traj.steps[t:end]], gamma)
    last = traj.steps[end - 1]
    if not last.done:
        g += gamma ** (end - t) * v[last.next_state]
    return g


def check_lambda(lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def lambda_return(
    traj: Trajectory, t: int, v: np.ndarray, lam: float, gamma: float
) -> float:
    """Episodic lambda-return from step ``t``.

    Weights (1 - lam) lam^(n-1) go to the n-step returns for n < T - t; the
    remaining mass lam^(T-t-1) goes to the full return G_t.
    """
    check_lambda(lam)
    T = len(traj)
    if not traj.terminated:
        raise ValueError("lambda-return needs a terminated episode")
    if not 0 <= t < T:
        raise IndexError(f"t={t} outside trajectory of length {T}")
    horizon = T - t
    g_full = n_step_return(traj, t, horizon, v, gamma)
    if lam == 1.0:
        return g_full
    g = 0.0
    weight = 1.0 - lam
    for n in range(1, horizon):
        g += weight * n_step_return(traj, t, n, v, gamma)
        weight *= lam
    return g + lam ** (horizon - 1) * g_full


def lambda_returns(traj: Trajectory, v: np.ndarray, lam: float, gamma: float) -> np.ndarray:
    """All G_t^lambda of a terminated episode via the backward recursion

    G_t = R_{t+1} + gamma * ((1 - lam) V(S_{t+1}) + lam G_{t+1}),

    which agrees with ``lambda_return`` term by term.
    """
    check_lambda(lam)
    if not traj.terminated:
        raise ValueError("lambda-returns need a terminated episode")
    out = np.empty(len(traj))
    g = 0.0
    for t in range(len(traj) - 1, -1, -1):
        step = traj.steps[t]
        if step.done:
            g = step.reward
        else:
            g = step.reward + gamma * ((1.0 - lam) * v[step.next_state] + lam * g)
        out[t] = g
    return out


def td_lambda_forward_episode(
    traj: Trajectory, v: np.ndarray, alpha: Alpha, lam: float, gamma: float
) -> np.ndarray:
    """Forward-view TD(lambda) over one complete episode.

    Every increment alpha * (G_t^lambda - V(S_t)) is computed from the value
    table as it was before the episode; the increments are summed and applied
    at the end. This is the offline form that backward TD(lambda) reproduces.
    """
    if not traj.terminated:
        raise ValueError("forward TD(lambda) needs a terminated episode")
    snapshot = v.copy()
    targets = lambda_returns(traj, snapshot, lam, gamma)
    delta = np.zeros_like(v)
    for t, step in enumerate(traj):
        a = resolve_alpha(alpha, step.state)
        delta[step.state] += a * (targets[t] - snapshot[step.state])
    v += delta
    check_finite(v)
    return v


@dataclass
class TraceTable:
    """Accumulating eligibility traces, one per state."""

    n_states: int
    lam: float
    gamma: float
    e: np.ndarray = field(init=False)

    def __post_init__(self):
        check_lambda(self.lam)
        self.e = np.zeros(self.n_states)

    @property
    def decay(self) -> float:
        return self.gamma * self.lam

    def reset(self) -> None:
        self.e[:] = 0.0


def trace_update_tabular(e: TraceTable, s_visited: int) -> TraceTable:
    """E(s) <- gamma lam E(s) + 1(s == s_visited)."""
    e.e *= e.decay
    e.e[s_visited] += 1.0
    return e


def td_error(v: np.ndarray, s: int, r: float, s_next: int, gamma: float, done: bool) -> float:
    target = r if done else r + gamma * v[s_next]
    return target - v[s]


def td_lambda_backward_step(
    v: np.ndarray,
    e: TraceTable,
    s: int,
    r: float,
    s_next: int,
    alpha: Alpha,
    done: bool = False,
) -> tuple[np.ndarray, TraceTable]:
    """One online backward TD(lambda) step.

    Bumps the trace for ``s``, then moves every state by alpha * delta * E(x).
    Traces are cleared when ``done`` is set so the next episode starts fresh.
    """
    trace_update_tabular(e, s)
    delta = td_error(v, s, r, s_next, e.gamma, done)
    a = resolve_alpha(alpha, s)
    v += a * delta * e.e
    check_finite(v)
    if done:
        e.reset()
    return v, e


def td_lambda_backward_episode(
    traj: Trajectory,
    v: np.ndarray,
    alpha: Alpha,
    lam: float,
    gamma: float,
    online: bool = True,
) -> np.ndarray:
    """Backward TD(lambda) over a recorded episode.

    With ``online=False`` the TD errors use the pre-episode values and the
    summed increments are applied at the end, which matches
    ``td_lambda_forward_episode`` exactly (up to rounding).
    """
    e = TraceTable(len(v), lam, gamma)
    if online:
        for step in traj:
            td_lambda_backward_step(v, e, step.state, step.reward, step.next_state, alpha, step.done)
        return v
    snapshot = v.copy()
    total = np.zeros_like(v)
    for step in traj:
        trace_update_tabular(e, step.state)
        a = resolve_alpha(alpha, step.state)
        total += a * td_error(snapshot, step.state, step.reward, step.next_state, gamma, step.done) * e.e
    v += total
    check_finite(v)
    return v
