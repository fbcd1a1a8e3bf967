"""
Linear value-function approximation.

v_hat(s, w) = x(s)^T w and q_hat(s, a, w) = x(s, a)^T w, so the gradient with
respect to ``w`` is just the feature vector. All incremental updates are
semi-gradient: the bootstrapped target is treated as a constant. Terminal
successors contribute a zero feature vector.

Besides the SGD-style updates this module has the batch least-squares
solvers LSTD(lambda) and LSTDQ(lambda).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

import numpy as np

from rltrade.mdp import TabularPolicy, Trajectory
from rltrade.prediction import Alpha, check_finite, check_lambda, resolve_alpha

RIDGE_DEFAULT = 1e-6


@dataclass(frozen=True)
class FeatureMap:
    """Tabulated features for a finite state (and action) space.

    ``state`` has shape ``(n_states, dim)`` and ``state_action`` has shape
    ``(n_states, n_actions, sa_dim)``.
    """

    state: np.ndarray
    state_action: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        phi = np.array(self.state, dtype=float)
        psi = np.array(self.state_action, dtype=float)
        if phi.ndim != 2 or psi.ndim != 3 or phi.shape[0] != psi.shape[0]:
            raise ValueError("state features must be (S, d) and state-action features (S, A, k)")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
            raise ValueError("features must be finite")
        phi.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "state", phi)
        object.__setattr__(self, "state_action", psi)

    @property
    def n_states(self) -> int:
        return self.state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.state_action.shape[1]

    @property
    def dim(self) -> int:
        return self.state.shape[1]

    @property
    def sa_dim(self) -> int:
        return self.state_action.shape[2]

    def state_features(self, s: int) -> np.ndarray:
        return self.state[s]

    def state_action_features(self, s: int, a: int) -> np.ndarray:
        return self.state_action[s, a]

    @classmethod
    def one_hot(cls, n_states: int, n_actions: int = 1) -> "FeatureMap":
        """Tabular embedding: v_hat and q_hat reduce to table lookups of ``w``."""
        psi = np.eye(n_states * n_actions).reshape(n_states, n_actions, n_states * n_actions)
        return cls(np.eye(n_states), psi, "one_hot")

    @classmethod
    def from_state_features(cls, phi: np.ndarray, n_actions: int, name: str = "custom") -> "FeatureMap":
        """State-action features as one copy of x(s) per action block."""
        phi = np.asarray(phi, dtype=float)
        n_s, d = phi.shape
        psi = np.zeros((n_s, n_actions, n_actions * d))
        for a in range(n_actions):
            psi[:, a, a * d:(a + 1) * d] = phi
        return cls(phi, psi, name)

    @classmethod
    def aggregate(cls, n_states: int, n_actions: int = 1, groups: int = 2) -> "FeatureMap":
        """State aggregation into ``groups`` contiguous blocks of states."""
        if not 1 <= groups <= n_states:
            raise ValueError(f"groups must lie in [1, {n_states}]")
        phi = np.zeros((n_states, groups))
        phi[np.arange(n_states), np.arange(n_states) * groups // n_states] = 1.0
        return cls.from_state_features(phi, n_actions, "aggregate")

    @classmethod
    def polynomial(cls, n_states: int, n_actions: int = 1, degree: int = 2) -> "FeatureMap":
        """Powers 0..degree of the state index scaled to [0, 1]."""
        z = np.linspace(0.0, 1.0, n_states) if n_states > 1 else np.zeros(1)
        phi = np.stack([z**k for k in range(degree + 1)], axis=1)
        return cls.from_state_features(phi, n_actions, "polynomial")


FEATURE_MAPS: dict[str, Callable[..., FeatureMap]] = {
    "one_hot": FeatureMap.one_hot,
    "aggregate": FeatureMap.aggregate,
    "polynomial": FeatureMap.polynomial,
}


def make_feature_map(name: str, n_states: int, n_actions: int, **params) -> FeatureMap:
    try:
        factory = FEATURE_MAPS[name]
    except KeyError:
        raise KeyError(f"unknown feature map {name!r}; known: {sorted(FEATURE_MAPS)}") from None
    return factory(n_states, n_actions, **params)


def _check_dims(x: np.ndarray, w: np.ndarray) -> None:
    if x.shape != w.shape:
        raise ValueError(f"feature length {x.shape} does not match weights {w.shape}")


def v_hat(fm: FeatureMap, s: int, w: np.ndarray) -> float:
    x = fm.state_features(s)
    _check_dims(x, w)
    return float(x @ w)


def q_hat(fm: FeatureMap, s: int, a: int, w: np.ndarray) -> float:
    x = fm.state_action_features(s, a)
    _check_dims(x, w)
    return float(x @ w)


def sgd_update(
    w: np.ndarray, features: np.ndarray, target: float, prediction: float, alpha: float
) -> np.ndarray:
    """w += alpha * (target - prediction) * features, in place."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if not np.isfinite(target):
        raise ValueError(f"non-finite target {target}")
    _check_dims(features, w)
    w += alpha * (target - prediction) * features
    check_finite(w, "weights")
    return w


def td0_approx_step(
    w: np.ndarray,
    fm: FeatureMap,
    s: int,
    r: float,
    s_next: int,
    alpha: Alpha,
    gamma: float,
    done: bool = False,
) -> np.ndarray:
    """Semi-gradient TD(0) on v_hat."""
    target = r if done else r + gamma * v_hat(fm, s_next, w)
    return sgd_update(w, fm.state_features(s), target, v_hat(fm, s, w), resolve_alpha(alpha, s))


@dataclass
class FeatureTrace:
    """Eligibility trace in feature space, e <- gamma lam e + x."""

    dim: int
    lam: float
    gamma: float
    e: np.ndarray = field(init=False)

    def __post_init__(self):
        check_lambda(self.lam)
        self.e = np.zeros(self.dim)

    @property
    def decay(self) -> float:
        return self.gamma * self.lam

    def reset(self) -> None:
        self.e[:] = 0.0

    def accumulate(self, x: np.ndarray) -> np.ndarray:
        self.e = self.decay * self.e + x
        return self.e


def td_lambda_approx_step(
    w: np.ndarray,
    e: FeatureTrace,
    fm: FeatureMap,
    s: int,
    r: float,
    s_next: int,
    alpha: Alpha,
    done: bool = False,
) -> tuple[np.ndarray, FeatureTrace]:
    """Backward TD(lambda) on v_hat with a feature-space trace."""
    e.accumulate(fm.state_features(s))
    target = r if done else r + e.gamma * v_hat(fm, s_next, w)
    delta = target - v_hat(fm, s, w)
    w += resolve_alpha(alpha, s) * delta * e.e
    check_finite(w, "weights")
    if done:
        e.reset()
    return w, e


def sarsa_lambda_approx_step(
    w: np.ndarray,
    e: FeatureTrace,
    s: int,
    a: int,
    r: float,
    s_next: int,
    a_next: int,
    fm: FeatureMap,
    alpha: Alpha,
    done: bool = False,
) -> tuple[np.ndarray, FeatureTrace]:
    """Backward SARSA(lambda) on q_hat.

    e <- gamma lam e + x(s, a); delta = r + gamma q_hat(s', a') - q_hat(s, a);
    w <- w + alpha delta e. The trace already carries x(s, a), so it is not
    multiplied in a second time.
    """
    e.accumulate(fm.state_action_features(s, a))
    target = r if done else r + e.gamma * q_hat(fm, s_next, a_next, w)
    delta = target - q_hat(fm, s, a, w)
    w += resolve_alpha(alpha, (s, a)) * delta * e.e
    check_finite(w, "weights")
    if done:
        e.reset()
    return w, e


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    a_next: int
    done: bool


BATCH_COLUMNS = ("s", "a", "r", "s_next", "a_next", "done")


class ExperienceBatch(list):
    """Ordered list of ``Transition`` records.

    CSV layout: header ``s,a,r,s_next,a_next,done``; ``a_next`` is -1 when no
    next action was recorded and ``done`` is 0 or 1.
    """

    @classmethod
    def from_trajectories(cls, trajs: Iterable[Trajectory]) -> "ExperienceBatch":
        batch = cls()
        for traj in trajs:
            steps = traj.steps
            for t, step in enumerate(steps):
                a_next = steps[t + 1].action if t + 1 < len(steps) else -1
                batch.append(Transition(step.state, step.action, step.reward, step.next_state, a_next, step.done))
        return batch

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(BATCH_COLUMNS)
            for t in self:
                writer.writerow([t.s, t.a, repr(float(t.r)), t.s_next, t.a_next, int(t.done)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ExperienceBatch":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != BATCH_COLUMNS:
                raise ValueError(f"expected header {','.join(BATCH_COLUMNS)}, got {reader.fieldnames}")
            return cls(
                Transition(int(row["s"]), int(row["a"]), float(row["r"]), int(row["s_next"]),
                           int(row["a_next"]), bool(int(row["done"])))
                for row in reader
            )


@dataclass
class LstdSolution:
    """Solver output. ``ridge`` is the diagonal term actually added (0.0 if none)."""

    w: np.ndarray
    ridge: float
    A: np.ndarray
    b: np.ndarray

    @property
    def residual(self) -> float:
        """||A w - b||_inf for the unregularised system."""
        return float(np.max(np.abs(self.A @ self.w - self.b)))


def _accumulate(batch, cur, nxt, gamma: float, lam: float, dim: int):
    A = np.zeros((dim, dim))
    b = np.zeros(dim)
    z = np.zeros(dim)
    prev = None
    for t in batch:
        # new episode: terminal seen, or the chain of states is broken
        if prev is not None and (prev.done or prev.s_next != t.s):
            z = np.zeros(dim)
        x = cur(t)
        x_next = np.zeros(dim) if t.done else nxt(t)
        z = gamma * lam * z + x
        A += np.outer(z, x - gamma * x_next)
        b += z * t.r
        prev = t
    return A, b


def _solve(A: np.ndarray, b: np.ndarray, ridge: float | None) -> LstdSolution:
    n = len(b)
    singular = np.linalg.matrix_rank(A) < n or np.linalg.cond(A) > 1e12
    if singular:
        if ridge is None:
            raise np.linalg.LinAlgError(
                "LSTD matrix A is singular; collect more varied experience or pass ridge=1e-6"
            )
        w = np.linalg.solve(A + ridge * np.eye(n), b)
        return LstdSolution(w, float(ridge), A, b)
    return LstdSolution(np.linalg.solve(A, b), 0.0, A, b)


def lstd_solve(
    batch: ExperienceBatch,
    fm: FeatureMap,
    gamma: float,
    lam: float = 0.0,
    ridge: float | None = None,
) -> LstdSolution:
    """LSTD(lambda): w = A^-1 b with A = sum z_t (x_t - gamma x_{t+1})^T and b = sum z_t r_{t+1}.

    z_t = gamma lam z_{t-1} + x_t, reset at episode boundaries. With
    ``ridge=None`` a singular A raises; otherwise ``ridge * I`` is added.
    """
    check_lambda(lam)
    if not batch:
        raise ValueError("empty experience batch")
    A, b = _accumulate(
        batch,
        lambda t: fm.state_features(t.s),
        lambda t: fm.state_features(t.s_next),
        gamma, lam, fm.dim,
    )
    return _solve(A, b, ridge)


def lstdq_solve(
    batch: ExperienceBatch,
    fm: FeatureMap,
    target_policy: TabularPolicy,
    gamma: float,
    lam: float = 0.0,
    ridge: float | None = None,
) -> LstdSolution:
    """LSTDQ(lambda) for ``target_policy``.

    Next features are the policy expectation sum_a' pi(a'|s') x(s', a'),
    which for a deterministic policy is x(s', pi(s')).
    """
    check_lambda(lam)
    if not batch:
        raise ValueError("empty experience batch")
    expected = np.einsum("sa,sak->sk", target_policy.probs, fm.state_action)
    A, b = _accumulate(
        batch,
        lambda t: fm.state_action_features(t.s, t.a),
        lambda t: expected[t.s_next],
        gamma, lam, fm.sa_dim,
    )
    return _solve(A, b, ridge)
