"""
Benchmark environments.

Tabular benchmarks (random walk, gridworld, bandit) are thin samplers over a
``TabularMdp`` and are returned together with that MDP so learners can be
scored against exact solutions. The trading environment has no exact model;
it replays a price series and pays either raw P&L or the differential Sharpe
ratio of that P&L.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from rltrade.mdp import TabularMdp, draw_index, sample_reward


class Environment(Protocol):
    n_states: int
    n_actions: int

    def reset(self, seed: int | None = None) -> int: ...

    def step(self, action: int) -> tuple[int, float, bool]: ...


class EpisodeOverError(RuntimeError):
    pass


class MdpEnv:
    """Samples transitions from a ``TabularMdp``.

    ``start`` fixes the initial state; ``None`` draws it uniformly from the
    non-terminal states on every reset. ``reset(seed)`` reseeds the internal
    generator, ``reset()`` keeps its stream going.
    """

    def __init__(self, mdp: TabularMdp, start: int | None = None, seed: int | None = None):
        if start is not None and (not 0 <= start < mdp.n_states or mdp.is_terminal(start)):
            raise ValueError(f"invalid start state {start}")
        self.mdp = mdp
        self.start = start
        self.rng = np.random.default_rng(seed)
        self.state: int | None = None
        self.done = True
        self._starts = np.flatnonzero(~mdp.terminal_mask)

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    def reset(self, seed: int | None = None) -> int:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.start is None:
            self.state = int(self._starts[int(self.rng.integers(len(self._starts)))])
        else:
            self.state = self.start
        self.done = False
        return self.state

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise EpisodeOverError("step() called on a finished episode; call reset() first")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        s = self.state
        s_next = draw_index(self.mdp.transition[s, action], self.rng)
        r = sample_reward(self.mdp, s, action, s_next, self.rng)
        self.state = s_next
        self.done = self.mdp.is_terminal(s_next)
        return s_next, r, self.done


def make_random_walk(n_states: int = 5) -> tuple[MdpEnv, TabularMdp]:
    """Random walk over ``n_states`` non-terminal states with a terminal at each end.

    States are numbered 0..n_states+1; 0 and n_states+1 are terminal. There is
    a single action that steps left or right with probability 1/2. Entering the
    right terminal pays +1, everything else 0, and gamma = 1. Episodes start
    in the centre state.
    """
    if n_states < 3 or n_states % 2 == 0:
        raise ValueError(f"n_states must be an odd number >= 3, got {n_states}")
    total = n_states + 2
    P = np.zeros((total, 1, total))
    R = np.zeros((total, 1, total))
    for s in range(1, n_states + 1):
        P[s, 0, s - 1] = 0.5
        P[s, 0, s + 1] = 0.5
    R[n_states, 0, n_states + 1] = 1.0
    for s in (0, total - 1):
        P[s, 0, s] = 1.0
    mdp = TabularMdp(P, gamma=1.0, terminal_states=frozenset({0, total - 1}), transition_reward=R)
    return MdpEnv(mdp, start=(n_states + 1) // 2), mdp


# up, right, down, left as (row, col) offsets
GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))


def make_gridworld(
    width: int = 4,
    height: int = 4,
    step_reward: float = -1.0,
    terminals: Sequence[int] | None = None,
    gamma: float = 1.0,
) -> tuple[MdpEnv, TabularMdp]:
    """Deterministic gridworld; state = row * width + col.

    Actions 0..3 move up, right, down, left; moves off the grid leave the
    state unchanged. Every move from a non-terminal state pays
    ``step_reward``. The default terminals are the top-left and bottom-right
    corners. Episodes start uniformly at random among non-terminal cells.
    """
    n = width * height
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    if terminals is None:
        terminals = (0, n - 1)
    terminals = frozenset(int(t) for t in terminals)
    if not terminals:
        raise ValueError("gridworld needs at least one terminal")
    for t in terminals:
        if not 0 <= t < n:
            raise ValueError(f"terminal {t} is outside the {width}x{height} grid")
    P = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    for s in range(n):
        if s in terminals:
            P[s, :, s] = 1.0
            continue
        row, col = divmod(s, width)
        for a, (dr, dc) in enumerate(GRID_MOVES):
            r2, c2 = row + dr, col + dc
            s2 = r2 * width + c2 if 0 <= r2 < height and 0 <= c2 < width else s
            P[s, a, s2] = 1.0
            R[s, a] = step_reward
    mdp = TabularMdp(P, R, gamma=gamma, terminal_states=terminals)
    return MdpEnv(mdp), mdp


def make_bandit(rewards: Sequence[float] = (1.0, 0.0), gamma: float = 0.5) -> tuple[MdpEnv, TabularMdp]:
    """One non-terminal state that loops to itself; action a pays ``rewards[a]``."""
    k = len(rewards)
    P = np.ones((1, k, 1))
    R = np.asarray(rewards, dtype=float).reshape(1, k)
    mdp = TabularMdp(P, R, gamma=gamma)
    return MdpEnv(mdp, start=0), mdp


# --- trading -----------------------------------------------------------------

POSITIONS = (-1, 0, 1)


@dataclass(frozen=True)
class TradingState:
    position: int
    price_window: tuple[float, ...]
    cost: float = 0.0

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ValueError(f"position must be one of {POSITIONS}, got {self.position}")
        if self.cost < 0:
            raise ValueError("transaction cost must be >= 0")
        if not self.price_window:
            raise ValueError("price window must hold at least one price")


def trading_step(state: TradingState, action: int, next_price: float) -> tuple[TradingState, float]:
    """Hold ``state.position`` over the next price move, then switch to ``action``.

    reward = position * (next_price - last_price) - cost * |action - position|
    """
    if action not in POSITIONS:
        raise ValueError(f"action must be one of {POSITIONS}, got {action}")
    if next_price <= 0:
        raise ValueError(f"prices must be positive, got {next_price}")
    pnl = state.position * (next_price - state.price_window[-1])
    reward = pnl - state.cost * abs(action - state.position)
    window = state.price_window[1:] + (float(next_price),)
    return TradingState(action, window, state.cost), reward


@dataclass(frozen=True)
class DsrAccumulator:
    """Exponential moving first and second moments of returns for the
    differential Sharpe ratio (Moody & Saffell).

    ``harmonic=True`` replaces the fixed rate with eta_t = 1/t, which makes A
    and B the exact running mean and mean square; ``eta`` then only sets the
    default warmup. ``warmup`` defaults to ceil(3 / eta) steps during which
    no ratio is emitted.
    """

    eta: float = 0.01
    A: float = 0.0
    B: float = 0.0
    warmup: int | None = None
    steps: int = 0
    harmonic: bool = False

    VARIANCE_FLOOR = 1e-10

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", math.ceil(3.0 / self.eta))

    @property
    def rate(self) -> float:
        return 1.0 / (self.steps + 1) if self.harmonic else self.eta

    @property
    def sharpe(self) -> float:
        var = self.B - self.A**2
        return self.A / math.sqrt(var) if var > self.VARIANCE_FLOOR else 0.0


def dsr_update(acc: DsrAccumulator, r_t: float) -> tuple[DsrAccumulator, float]:
    """Feed one period return; returns the updated accumulator and D_t.

    D_t = (B dA - A dB / 2) / (B - A^2)^(3/2) with dA = eta (r - A),
    dB = eta (r^2 - B) and the pre-update A, B. D_t is 0 during warmup or
    when B - A^2 is at or below the variance floor. To first order D_t is the
    change in A / sqrt(B - A^2) caused by r_t.
    """
    eta = acc.rate
    dA = eta * (r_t - acc.A)
    dB = eta * (r_t * r_t - acc.B)
    var = acc.B - acc.A**2
    if acc.steps < acc.warmup or var <= acc.VARIANCE_FLOOR:
        d = 0.0
    else:
        d = (acc.B * dA - 0.5 * acc.A * dB) / var**1.5
    new = dataclasses.replace(acc, A=acc.A + dA, B=acc.B + dB, steps=acc.steps + 1)
    return new, d


def random_walk_prices(
    length: int, drift: float = 0.0, volatility: float = 0.01, seed: int | None = 0, start: float = 100.0
) -> np.ndarray:
    """Geometric random walk: log-returns are N(drift, volatility^2)."""
    rng = np.random.default_rng(seed)
    steps = drift + volatility * rng.standard_normal(length - 1)
    return start * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def sine_prices(
    length: int, period: float = 20.0, amplitude: float = 5.0, noise: float = 0.0,
    seed: int | None = 0, base: float = 100.0,
) -> np.ndarray:
    """base + amplitude * sin(2 pi t / period) plus optional Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    prices = base + amplitude * np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(length)
    if np.any(prices <= 0):
        raise ValueError("sine series went non-positive; raise base or lower amplitude/noise")
    return prices


def load_price_csv(path: str | Path) -> np.ndarray:
    """Read a CSV with a single ``price`` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "price" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a 'price' column")
        prices = np.array([float(row["price"]) for row in reader])
    if len(prices) < 2 or np.any(prices <= 0):
        raise ValueError(f"{path}: need at least two positive prices")
    return prices


class TradingEnv:
    """Single-asset trading over a fixed price series.

    Actions 0, 1, 2 select positions -1, 0, +1. The observed state encodes
    the signs of the last ``window - 1`` price changes and the current
    position as one integer in [0, 3**window). ``reward_mode`` is ``"dsr"``
    (differential Sharpe ratio of the P&L stream) or ``"pnl"``.
    """

    def __init__(
        self,
        prices: Sequence[float],
        window: int = 3,
        cost: float = 0.0,
        reward_mode: str = "dsr",
        eta: float = 0.01,
    ):
        prices = np.asarray(prices, dtype=float)
        if window < 1:
            raise ValueError("window must be >= 1")
        if len(prices) <= window:
            raise ValueError("price series must be longer than the window")
        if np.any(prices <= 0):
            raise ValueError("prices must be positive")
        if reward_mode not in ("dsr", "pnl"):
            raise ValueError(f"reward_mode must be 'dsr' or 'pnl', got {reward_mode!r}")
        self.prices = prices
        self.window = window
        self.cost = cost
        self.reward_mode = reward_mode
        self.eta = eta
        self.n_states = 3**window
        self.n_actions = 3
        self.done = True
        self.t = 0
        self.state: TradingState | None = None
        self.dsr: DsrAccumulator | None = None
        self.pnl = 0.0

    def encode(self, state: TradingState) -> int:
        w = np.asarray(state.price_window)
        code = 0
        for change in np.sign(np.diff(w)):
            code = 3 * code + int(change) + 1
        return 3 * code + state.position + 1

    def reset(self, seed: int | None = None) -> int:
        self.t = self.window - 1
        self.state = TradingState(0, tuple(self.prices[: self.window]), self.cost)
        self.dsr = DsrAccumulator(self.eta)
        self.pnl = 0.0
        self.done = False
        return self.encode(self.state)

    def step(self, action: int) -> tuple[int, float, bool]:
        if self.done:
            raise EpisodeOverError("step() called on a finished episode; call reset() first")
        if not 0 <= action < 3:
            raise ValueError(f"action {action} outside [0, 3)")
        self.t += 1
        self.state, pnl = trading_step(self.state, POSITIONS[action], self.prices[self.t])
        self.pnl += pnl
        if self.reward_mode == "dsr":
            self.dsr, reward = dsr_update(self.dsr, pnl)
        else:
            reward = pnl
        self.done = self.t == len(self.prices) - 1
        return self.encode(self.state), reward, self.done
