import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2vdrl.dqn_agent import (DqnPolicy, NetConfig, ReplayMemory, TrainerConfig, Transition, compute_target,
                              compute_targets, evaluate, evaluate_policy, select_action, train)
from v2vdrl.environment import EnvConfig, V2VEnvironment
from v2vdrl.neuralnet import AdamState, adam_step, backward, init_params

TINY_ENV = EnvConfig(n_cue=4, n_rb=4, n_v2v=4)


def tiny_factory(cfg=TINY_ENV):
    return lambda seed: V2VEnvironment(cfg).reset(seed)


def tr(i):
    return Transition(np.array([float(i)]), 0, float(i), np.array([0.0]), False)


# -- replay -------------------------------------------------------------------

@given(st.integers(1, 40), st.integers(0, 400))
def test_replay_keeps_last_capacity_in_order(capacity, n):
    memory = ReplayMemory(capacity)
    for i in range(n):
        memory.push(tr(i))
        assert len(memory) <= capacity
    assert [t.reward for t in memory.contents()] == [float(i) for i in range(max(0, n - capacity), n)]


def test_replay_sample_shapes():
    memory = ReplayMemory(10)
    for i in range(10):
        memory.push(Transition(np.full(3, float(i)), i % 2, float(i), np.zeros(3), i == 9))
    s, a, r, s2, term = memory.sample(4, np.random.default_rng(0))
    assert s.shape == (4, 3) and s2.shape == (4, 3)
    assert a.shape == r.shape == term.shape == (4,)
    np.testing.assert_array_equal(s[:, 0], r)


def test_replay_rejects_bad_capacity():
    with pytest.raises(ValueError):
        ReplayMemory(0)


# -- action selection -----------------------------------------------------------

def test_greedy_and_tie_break():
    rng = np.random.default_rng(0)
    assert select_action([1, 3, 2], 0.0, rng) == 1
    assert select_action([5, 5, 1], 0.0, rng) == 0


def test_full_exploration_is_uniform():
    rng = np.random.default_rng(1)
    n, draws = 6, 10_000
    counts = np.bincount([select_action(np.arange(n), 1.0, rng) for _ in range(draws)], minlength=n)
    p = 1 / n
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) < 3 * sigma)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_greedy_invariant_under_monotone_transform(q):
    q = np.array(q)
    rng = np.random.default_rng(0)
    # scaling by a power of two is exact, so the transform stays strictly increasing in floats
    assert select_action(q, 0.0, rng) == select_action(q * 4.0, 0.0, rng)


# -- targets ----------------------------------------------------------------------

def _constant_net(value, n_in=2, n_out=3):
    p = init_params([n_in, n_out], 0)
    p.weights[0][:] = 0.0
    p.biases[0][:] = value
    return p


def test_terminal_target_is_reward():
    t = Transition(np.zeros(2), 0, -20.0, np.zeros(2), True)
    assert compute_target(t, _constant_net(100.0), 0.9) == -20.0


def test_bootstrapped_target():
    p = _constant_net(0.0)
    p.biases[0][:] = [1.0, 2.0, -4.0]
    t = Transition(np.zeros(2), 0, 1.0, np.zeros(2), False)
    assert compute_target(t, p, 0.9) == pytest.approx(2.8)


@given(st.floats(-20, 20), st.booleans())
def test_myopic_target(r, terminal):
    t = Transition(np.zeros(2), 1, r, np.ones(2), terminal)
    assert compute_target(t, _constant_net(7.0), 0.0) == r


def test_vector_targets_match_scalar():
    p = init_params([2, 4, 3], 3)
    rng = np.random.default_rng(0)
    ts = [Transition(np.zeros(2), 0, float(rng.normal()), rng.normal(size=2), bool(i % 2)) for i in range(6)]
    y = compute_targets([t.reward for t in ts], [t.post_state for t in ts], [t.terminal for t in ts], p, 0.7)
    np.testing.assert_allclose(y, [compute_target(t, p, 0.7) for t in ts], rtol=1e-14)


# -- config -------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(beta=1.0), dict(beta=-0.1), dict(epsilon_end=1.5), dict(batch_size=0)])
def test_trainer_config_validation(kw):
    with pytest.raises(ValueError):
        TrainerConfig(**kw)


def test_epsilon_schedule():
    cfg = TrainerConfig(total_training_steps=1000)
    assert cfg.epsilon(0) == 1.0
    assert cfg.epsilon(400) == pytest.approx(1.0 - 0.5 * 0.98)
    assert cfg.epsilon(800) == pytest.approx(0.02)
    assert cfg.epsilon(999) == pytest.approx(0.02)
    assert all(0 <= cfg.epsilon(s) <= 1 for s in range(1000))


def test_lr_decay_points():
    net = NetConfig()
    assert net.lr_at(0, 100) == 1e-3
    assert net.lr_at(50, 100) == pytest.approx(1e-4)
    assert net.lr_at(80, 100) == pytest.approx(1e-5)


# -- training -----------------------------------------------------------------------

def test_zero_steps_returns_initial_params():
    res = train(tiny_factory(), TrainerConfig(total_training_steps=0), NetConfig(hidden_sizes=(8,)))
    fresh = train(tiny_factory(), TrainerConfig(total_training_steps=0), NetConfig(hidden_sizes=(8,)))
    assert res.params.equals(fresh.params) and res.log == [] and res.updates == 0


def test_short_training_run():
    cfg = TrainerConfig(total_training_steps=120, batch_size=16, memory_capacity=50, target_sync_interval=10)
    # a payload nobody can deliver keeps all 4 agents active every slot
    factory = tiny_factory(EnvConfig(n_cue=4, n_rb=4, n_v2v=4, payload_bits=1e12))
    res = train(factory, cfg, NetConfig(hidden_sizes=(8,)))
    assert len(res.log) == 120
    assert res.updates > 0
    assert res.episodes >= 2  # 100-slot episodes
    first_update = next(i for i, row in enumerate(res.log) if not np.isnan(row.loss))
    assert first_update == 3  # 4 agents per slot, batch 16
    again = train(factory, cfg, NetConfig(hidden_sizes=(8,)))
    assert again.params.equals(res.params)


def test_fixed_batch_descent():
    rng = np.random.default_rng(0)
    p = init_params([5, 16, 16, 3], 1)
    s, a, y = rng.normal(size=(32, 5)), rng.integers(0, 3, size=32), rng.normal(size=32)
    state = AdamState.zeros_like(p, lr=1e-4)
    losses = []
    for _ in range(100):
        grads, loss = backward(p, s, a, y)
        losses.append(loss)
        adam_step(p, state, grads)
    assert all(b <= a_ for a_, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


# -- evaluation ---------------------------------------------------------------------

def test_zero_episodes_invalid():
    m = evaluate(init_params([18, 12], 0), tiny_factory(), 0, 1)
    assert not m.valid and m.episodes == 0 and np.isnan(m.success_prob)


def test_evaluate_deterministic():
    p = init_params([18, 8, 12], 0)
    a = evaluate(p, tiny_factory(), 3, 5)
    b = evaluate(p, tiny_factory(), 3, 5)
    assert a == b and a.valid
    assert len(a.link_outcomes) == 3 * 4


def test_zero_payload_full_success():
    cfg = EnvConfig(n_cue=4, n_rb=4, n_v2v=4, payload_bits=0.0)
    m = evaluate(init_params([18, 12], 0), tiny_factory(cfg), 2, 0)
    assert m.success_prob == 1.0


def test_threaded_map_matches_serial():
    from concurrent.futures import ThreadPoolExecutor
    from v2vdrl.baselines import ClusterPolicy
    policy = ClusterPolicy()
    serial = evaluate_policy(policy, tiny_factory(), 4, 2)
    with ThreadPoolExecutor(3) as pool:
        threaded = evaluate_policy(policy, tiny_factory(), 4, 2, pool.map)
    assert serial == threaded


def test_dqn_policy_is_greedy():
    env = V2VEnvironment(TINY_ENV).reset(0)
    p = _constant_net(0.0, n_in=TINY_ENV.obs_dim, n_out=TINY_ENV.n_actions)
    p.biases[0][7] = 1.0
    assert DqnPolicy(p).act(env, [0, 2], None) == {0: 7, 2: 7}
