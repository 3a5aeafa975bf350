"""Small finite MDPs, value iteration and tabular Q-learning.

Used as ground truth for the Q-learning machinery: value iteration gives
Q*, tabular Q-learning must converge to it, and the DQN trainer must learn
the same greedy policy through :class:`MdpEnv`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .environment import StepOutcome


@dataclass(frozen=True)
class FiniteMDP:
    transitions: np.ndarray  # P[s, a, s']
    rewards: np.ndarray  # R[s, a]

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


@dataclass
class TabularQ:
    q: np.ndarray
    visits: np.ndarray

    def greedy_policy(self) -> np.ndarray:
        return np.argmax(self.q, axis=1)


def chain_mdp(n_states: int = 5, goal_reward: float = 1.0, lure_reward: float = 0.1) -> FiniteMDP:
    """Deterministic chain: action 0 steps left, action 1 steps right.

    Pushing right at the last state pays ``goal_reward``; pushing left at the
    first state pays the smaller ``lure_reward``. Both ends are walls.
    """
    p = np.zeros((n_states, 2, n_states))
    r = np.zeros((n_states, 2))
    for s in range(n_states):
        p[s, 0, max(s - 1, 0)] = 1.0
        p[s, 1, min(s + 1, n_states - 1)] = 1.0
    r[0, 0] = lure_reward
    r[-1, 1] = goal_reward
    return FiniteMDP(p, r)


def random_mdp(n_states: int, n_actions: int, rng) -> FiniteMDP:
    """Random deterministic transitions with rewards uniform on [0, 1)."""
    p = np.zeros((n_states, n_actions, n_states))
    nxt = rng.integers(0, n_states, size=(n_states, n_actions))
    p[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], nxt] = 1.0
    return FiniteMDP(p, rng.uniform(0.0, 1.0, size=(n_states, n_actions)))


def value_iteration(mdp: FiniteMDP, beta: float, tol: float = 1e-12, max_iters: int = 100_000) -> np.ndarray:
    q = np.zeros_like(mdp.rewards, dtype=float)
    for _ in range(max_iters):
        new = mdp.rewards + beta * mdp.transitions @ q.max(axis=1)
        if np.max(np.abs(new - q)) < tol:
            return new
        q = new
    return q


def tabular_q_oracle(mdp: FiniteMDP, alpha, beta: float, steps: int, rng, q0=None) -> TabularQ:
    """Q-learning with uniform exploration over all state-action pairs.

    ``alpha`` is a constant or a callable mapping the visit count of the
    updated pair (starting at 1) to a learning rate.
    """
    rate: Callable[[int], float] = alpha if callable(alpha) else (lambda n: alpha)
    q = np.zeros_like(mdp.rewards, dtype=float) if q0 is None else np.array(q0, dtype=float)
    visits = np.zeros(q.shape, dtype=int)
    for _ in range(steps):
        s = int(rng.integers(mdp.n_states))
        a = int(rng.integers(mdp.n_actions))
        s2 = int(rng.choice(mdp.n_states, p=mdp.transitions[s, a]))
        visits[s, a] += 1
        q[s, a] += rate(visits[s, a]) * (mdp.rewards[s, a] + beta * q[s2].max() - q[s, a])
    return TabularQ(q, visits)


class MdpEnv:
    """A finite MDP dressed as a one-agent environment with one-hot observations."""

    n_agents = 1

    def __init__(self, mdp: FiniteMDP, horizon: int, seed):
        self.mdp = mdp
        self.horizon = horizon
        self.rng = np.random.default_rng(seed)
        self.state = int(self.rng.integers(mdp.n_states))
        self.t = 0
        self._pending = None

    @property
    def obs_dim(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def done(self) -> bool:
        return self.t >= self.horizon

    def one_hot(self, s: int) -> np.ndarray:
        v = np.zeros(self.mdp.n_states)
        v[s] = 1.0
        return v

    def active_agents(self) -> list[int]:
        return [] if self.done else [0]

    def slot_order(self) -> list[int]:
        return self.active_agents()

    def observe(self, k: int) -> np.ndarray:
        return self.one_hot(self.state)

    def act(self, k: int, action) -> None:
        self._pending = int(action)

    def advance(self) -> dict[int, StepOutcome]:
        s, a = self.state, self._pending
        r = float(self.mdp.rewards[s, a])
        self.state = int(self.rng.choice(self.mdp.n_states, p=self.mdp.transitions[s, a]))
        self.t += 1
        # running out of horizon is a truncation, not a terminal state
        return {0: StepOutcome(r, self.one_hot(self.state), False)}
