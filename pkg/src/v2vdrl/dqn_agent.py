"""Deep Q-learning with experience replay for the V2V agents.

One Q-network is shared by every agent. Training follows the usual DQN
recipe: epsilon-greedy data collection, a FIFO replay memory, mini-batch
updates against a periodically refreshed copy of the weights.

The trainer works with any environment exposing ``active_agents``,
``slot_order``, ``observe``, ``act``, ``advance``, ``done``, ``n_agents``,
``n_actions`` and ``obs_dim``.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import seeding
from .neuralnet import AdamState, MlpParams, adam_step, backward, forward, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    post_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Fixed-capacity FIFO of transitions backed by a numpy ring buffer."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._size = 0
        self._next = 0
        self._states = None

    def __len__(self):
        return self._size

    def _allocate(self, dim):
        self._states = np.zeros((self.capacity, dim))
        self._post = np.zeros((self.capacity, dim))
        self._actions = np.zeros(self.capacity, dtype=int)
        self._rewards = np.zeros(self.capacity)
        self._terminal = np.zeros(self.capacity, dtype=bool)

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=float)
        if self._states is None:
            self._allocate(state.shape[0])
        i = self._next
        self._states[i] = state
        self._post[i] = np.asarray(t.post_state, dtype=float)
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._terminal[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = self._next if self._size == self.capacity else 0
        return (start + np.arange(self._size)) % self.capacity

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self._states[i].copy(), int(self._actions[i]), float(self._rewards[i]),
                           self._post[i].copy(), bool(self._terminal[i])) for i in self._order()]

    def sample(self, batch_size: int, rng):
        """Uniform sample with replacement: (states, actions, rewards, post_states, terminals)."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.integers(0, self._size, size=batch_size)
        return (self._states[idx], self._actions[idx], self._rewards[idx],
                self._post[idx], self._terminal[idx])


def select_action(q_values, epsilon: float, rng) -> int:
    """Epsilon-greedy; ties in the greedy branch go to the lowest index."""
    q = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def compute_targets(rewards, post_states, terminals, old_params: MlpParams, beta: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    bootstrap = forward(old_params, np.atleast_2d(post_states)).max(axis=1)
    return rewards + np.where(np.asarray(terminals, dtype=bool), 0.0, beta * bootstrap)


def compute_target(transition: Transition, old_params: MlpParams, beta: float) -> float:
    """y = r for terminal transitions, else r + beta * max_a Q_old(s', a)."""
    return float(compute_targets([transition.reward], [transition.post_state],
                                 [transition.terminal], old_params, beta)[0])


@dataclass(frozen=True)
class TrainerConfig:
    beta: float = 0.5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.02
    epsilon_decay_fraction: float = 0.8
    batch_size: int = 256
    memory_capacity: int = 100_000
    target_sync_interval: int = 500
    total_training_steps: int = 20_000
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.beta < 1:
            raise ValueError("beta must be in [0, 1)")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0 <= eps <= 1:
                raise ValueError("epsilon must be in [0, 1]")
        if self.batch_size < 1 or self.memory_capacity < 1 or self.target_sync_interval < 1:
            raise ValueError("batch_size, memory_capacity and target_sync_interval must be positive")
        if self.total_training_steps < 0:
            raise ValueError("total_training_steps must be non-negative")

    def epsilon(self, step: int) -> float:
        """Linear decay from start to end over the first ``epsilon_decay_fraction`` of training."""
        horizon = self.epsilon_decay_fraction * self.total_training_steps
        if horizon <= 0:
            return self.epsilon_end
        frac = min(step / horizon, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass(frozen=True)
class NetConfig:
    hidden_sizes: tuple[int, ...] = (500, 250, 120)
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_decay_points: tuple[float, ...] = (0.5, 0.8)
    lr_decay_factor: float = 0.1

    def lr_at(self, step: int, total: int) -> float:
        passed = sum(step >= p * total for p in self.lr_decay_points)
        return self.lr * self.lr_decay_factor ** passed


@dataclass(frozen=True)
class LogRow:
    step: int
    epsilon: float
    loss: float
    mean_episode_reward: float


LOG_HEADER = ("step", "epsilon", "loss", "mean_episode_reward")


@dataclass
class TrainResult:
    params: MlpParams
    log: list[LogRow] = field(default_factory=list)
    episodes: int = 0
    updates: int = 0


def train(env_factory: Callable, cfg: TrainerConfig, net_cfg: NetConfig = NetConfig(),
          layer_sizes=None) -> TrainResult:
    """Train the shared Q-network.

    ``env_factory(seed)`` must return a freshly reset environment. One
    training step is one slot: every active agent acts once, all resulting
    transitions go to memory, then one mini-batch update runs if the memory
    holds at least ``batch_size`` transitions.
    """
    seed = cfg.rng_seed
    episode = 0
    env = env_factory(seeding.derive_seed(seed, seeding.TRAIN_ENV, episode))
    sizes = layer_sizes or [env.obs_dim, *net_cfg.hidden_sizes, env.n_actions]
    params = init_params(sizes, seeding.derive_seed(seed, seeding.NET_INIT, 0))
    result = TrainResult(params)
    if cfg.total_training_steps == 0:
        return result

    rng = seeding.derive_rng(seed, seeding.TRAIN_AGENT)
    old_params = params.copy()
    adam = AdamState.zeros_like(params, lr=net_cfg.lr, beta1=net_cfg.adam_beta1,
                                beta2=net_cfg.adam_beta2, eps=net_cfg.adam_eps)
    memory = ReplayMemory(cfg.memory_capacity)
    returns = np.zeros(env.n_agents)
    last_episode_reward = float("nan")

    for step in range(cfg.total_training_steps):
        if env.done:
            last_episode_reward = float(returns.mean())
            episode += 1
            env = env_factory(seeding.derive_seed(seed, seeding.TRAIN_ENV, episode))
            returns = np.zeros(env.n_agents)
        eps = cfg.epsilon(step)
        agents = env.slot_order()
        states = np.array([np.asarray(env.observe(k), dtype=float) for k in agents])
        q = forward(params, states)
        actions = [select_action(q[i], eps, rng) for i in range(len(agents))]
        for k, a in zip(agents, actions):
            env.act(k, a)
        outcomes = env.advance()
        for i, k in enumerate(agents):
            out = outcomes[k]
            returns[k] += out.reward
            memory.push(Transition(states[i], actions[i], out.reward,
                                   np.asarray(out.next_observation, dtype=float), out.terminal))

        loss = float("nan")
        if len(memory) >= cfg.batch_size:
            s, a, r, s2, term = memory.sample(cfg.batch_size, rng)
            y = compute_targets(r, s2, term, old_params, cfg.beta)
            grads, total = backward(params, s, a, y)
            adam.lr = net_cfg.lr_at(step, cfg.total_training_steps)
            adam_step(params, adam, grads)
            loss = total / cfg.batch_size
            result.updates += 1
            if result.updates % cfg.target_sync_interval == 0:
                old_params = params.copy()
        result.log.append(LogRow(step, eps, loss, last_episode_reward))
        if step % 5000 == 0:
            log.info("step %d eps %.3f loss %.4g episode reward %.4g", step, eps, loss, last_episode_reward)

    result.episodes = episode + 1
    return result


# -- evaluation -------------------------------------------------------------

class DqnPolicy:
    name = "dqn"

    def __init__(self, params: MlpParams):
        self.params = params

    def begin_episode(self, env, rng) -> None:
        pass

    def act(self, env, agents, rng) -> dict:
        if not agents:
            return {}
        q = forward(self.params, np.array([np.asarray(env.observe(k), dtype=float) for k in agents]))
        return {k: int(np.argmax(q[i])) for i, k in enumerate(agents)}


@dataclass(frozen=True)
class EvalMetrics:
    mean_v2i_rate: float
    success_prob: float
    episodes: int
    link_outcomes: tuple[bool, ...] = ()
    valid: bool = True


def run_episode(policy, env, rng) -> tuple[float, np.ndarray]:
    """Play one episode to the deadline; returns (mean V2I sum rate, per-link delivered flags)."""
    policy.begin_episode(env, rng)
    rates = []
    while not env.horizon_reached:
        env.step(policy.act(env, env.active_agents(), rng))
        rates.append(float(env.last_slot.v2i_capacity.sum()))
    return float(np.mean(rates)), env.delivered.copy()


def evaluate_policy(policy, env_factory: Callable, episodes: int, rng_seed: int, map_fn=map) -> EvalMetrics:
    """Average V2I rate and latency success over ``episodes`` episodes.

    Episode ``i`` uses the environment seed ``(rng_seed, EVAL_ENV, i)`` for
    every policy, so policies compared at equal seeds face identical drops
    and fading sequences.
    """
    if episodes <= 0:
        return EvalMetrics(float("nan"), float("nan"), 0, (), valid=False)

    def one(i):
        env = env_factory(seeding.derive_seed(rng_seed, seeding.EVAL_ENV, i))
        # a private copy per episode keeps stateful policies safe under threaded maps
        return run_episode(copy.copy(policy), env, seeding.derive_rng(rng_seed, seeding.EVAL_POLICY, i))

    results = list(map_fn(one, range(episodes)))
    outcomes = np.concatenate([d for _, d in results])
    return EvalMetrics(
        mean_v2i_rate=float(np.mean([r for r, _ in results])),
        success_prob=float(outcomes.mean()),
        episodes=episodes,
        link_outcomes=tuple(bool(x) for x in outcomes),
    )


def evaluate(params: MlpParams, env_factory: Callable, episodes: int, rng_seed: int, map_fn=map) -> EvalMetrics:
    return evaluate_policy(DqnPolicy(params), env_factory, episodes, rng_seed, map_fn)
