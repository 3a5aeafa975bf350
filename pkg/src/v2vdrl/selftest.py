"""Built-in correctness checks, runnable from the command line.

Each check compares an implementation path against an independent oracle.
The implementation under test is a parameter so a deliberately broken
variant can be passed in to confirm the check notices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkGainMatrix
from .dqn_agent import NetConfig, ReplayMemory, TrainerConfig, Transition, train
from .environment import EnvConfig, V2VEnvironment, allocation_matrix, cue_capacity, cue_sinr
from .neuralnet import MlpParams, backward, forward, init_params
from .tabular import chain_mdp, tabular_q_oracle, value_iteration


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# -- oracles -----------------------------------------------------------------

def finite_difference_gradient(params: MlpParams, states, actions, targets, h: float = 1e-5):
    """Central differences of the summed squared error, tensor by tensor."""

    def loss():
        out = []
        for s, a, y in zip(states, actions, targets):
            x = np.asarray(s, dtype=float)
            for i, (w, b) in enumerate(zip(params.weights, params.biases)):
                x = w @ x + b
                if i < len(params.weights) - 1:
                    x = np.maximum(x, 0.0)
            out.append((y - x[a]) ** 2)
        return sum(out)

    grads = []
    for t in params.tensors():
        g = np.zeros_like(t)
        flat, gflat = t.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def brute_force_cue_sinr(gains: LinkGainMatrix, bands, powers_w, cue_power_w, noise_w):
    """Loop-by-loop SINR of every CUE, with CUE m on sub-band m."""
    n_cue = gains.h.shape[0]
    out = []
    for m in range(n_cue):
        interference = 0.0
        for k in range(len(bands)):
            if bands[k] == m:
                interference += powers_w[k] * gains.htilde[k][m]
        out.append(cue_power_w * gains.h[m][m] / (noise_w + interference))
    return out


def brute_force_capacity(gamma, bandwidth_hz):
    return [bandwidth_hz * math.log(1.0 + g, 2) for g in gamma]


def random_gain_instance(rng, n_cue, n_v2v):
    def draw(*shape):
        return 10.0 ** rng.uniform(-12, -6, size=shape)
    v2v = draw(n_v2v, n_v2v, n_cue)
    idx = np.arange(n_v2v)
    return LinkGainMatrix(draw(n_cue, n_cue), v2v[idx, idx], draw(n_v2v, n_cue),
                          draw(n_cue, n_v2v, n_cue), v2v)


def _rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))


# -- checks -------------------------------------------------------------------

def check_gradients(backward_fn=backward, n_nets: int = 20, seed: int = 0, tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_nets):
        sizes = [int(rng.integers(1, 9)) for _ in range(int(rng.integers(2, 5)))]
        params = init_params(sizes, rng.integers(1 << 31))
        for b in params.biases:
            b += rng.normal(0, 0.1, size=b.shape)
        batch = int(rng.integers(1, 5))
        states = rng.normal(size=(batch, sizes[0]))
        actions = rng.integers(0, sizes[-1], size=batch)
        targets = rng.normal(size=batch)
        grads, _ = backward_fn(params, states, actions, targets)
        fd = finite_difference_gradient(params, states, actions, targets)
        analytic = []
        for w, b in zip(grads.weights, grads.biases):
            analytic += [w, b]
        for a, n in zip(analytic, fd):
            scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)
            worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return CheckResult("gradient", worst < tol, f"max relative error {worst:.2e} over {n_nets} nets")


def check_tabular_oracle(seed: int = 0, tol: float = 1e-3) -> CheckResult:
    mdp = chain_mdp(5)
    q_star = value_iteration(mdp, 0.9)
    tq = tabular_q_oracle(mdp, 0.5, 0.9, 20_000, np.random.default_rng(seed))
    err = float(np.max(np.abs(tq.q - q_star)))
    return CheckResult("tabular-q", err < tol, f"max |Q - Q*| = {err:.2e}")


def check_physics(sinr_fn=cue_sinr, capacity_fn=cue_capacity, n_instances: int = 100,
                  seed: int = 0, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        m = int(rng.integers(1, 7))
        k = int(rng.integers(1, 7))
        gains = random_gain_instance(rng, m, k)
        bands = rng.integers(-1, m, size=k)
        powers = 10.0 ** rng.uniform(-3, -0.7, size=k)
        p_c, noise, w = 0.2, 10.0 ** rng.uniform(-15, -12), float(rng.uniform(1e5, 1e7))
        gamma = sinr_fn(gains, allocation_matrix(bands, m), powers, p_c, noise)
        expected = brute_force_cue_sinr(gains, bands, powers, p_c, noise)
        worst = max(worst, _rel_err(gamma, expected))
        worst = max(worst, _rel_err(capacity_fn(gamma, w), brute_force_capacity(expected, w)))
    return CheckResult("sinr-capacity", worst < tol, f"max relative error {worst:.2e} over {n_instances} instances")


def check_replay_fifo(capacity: int = 16) -> CheckResult:
    memory = ReplayMemory(capacity)
    n = 10 * capacity
    for i in range(n):
        memory.push(Transition(np.array([float(i)]), i % 3, float(i), np.array([i + 1.0]), i % 2 == 0))
    rewards = [t.reward for t in memory.contents()]
    ok = rewards == [float(i) for i in range(n - capacity, n)]
    return CheckResult("replay-fifo", ok, f"{len(memory)} items kept of {n} inserted")


def check_determinism(seed: int = 3) -> CheckResult:
    cfg = EnvConfig(n_cue=4, n_rb=4, n_v2v=4)
    a = V2VEnvironment(cfg).reset(seed)
    b = V2VEnvironment(cfg).reset(seed)
    same_env = all(np.array_equal(a.observe(k).to_vector(), b.observe(k).to_vector()) for k in range(4))

    def tiny():
        return train(lambda s: V2VEnvironment(cfg).reset(s),
                     TrainerConfig(total_training_steps=30, batch_size=8, rng_seed=seed),
                     NetConfig(hidden_sizes=(8,)))

    p, q = tiny().params, tiny().params
    same_train = p.equals(q)
    probe = np.ones(cfg.obs_dim)
    same_train = same_train and np.array_equal(forward(p, probe), forward(q, probe))
    return CheckResult("determinism", same_env and same_train,
                       f"env reset identical: {same_env}; training identical: {same_train}")


ALL_CHECKS = (check_gradients, check_tabular_oracle, check_physics, check_replay_fifo, check_determinism)


def run_selftest(checks=ALL_CHECKS) -> list[CheckResult]:
    results = []
    for check in checks:
        try:
            results.append(check())
        except Exception as exc:  # a crashing check is a failing check
            results.append(CheckResult(check.__name__, False, f"raised {exc!r}"))
    return results
