from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2vdrl.baselines import ClusterPolicy, RandomPolicy, cluster_allocate, kmeans, random_policy
from v2vdrl.channel import LinkGainMatrix
from v2vdrl.environment import EnvConfig, V2VEnvironment, allocation_matrix, v2v_sinr
from v2vdrl.selftest import random_gain_instance

P_C, NOISE = 0.2, 1e-13


def min_sinr(gains, bands, powers, links=None):
    gamma = v2v_sinr(gains, allocation_matrix(bands, gains.n_rb), powers, P_C, NOISE)
    return float(gamma[list(links) if links is not None else slice(None)].min())


def test_random_single_band():
    rng = np.random.default_rng(0)
    assert {random_policy(1, rng).sub_band for _ in range(100)} == {0}


def test_random_uniform_and_max_power():
    rng = np.random.default_rng(1)
    draws = [random_policy(4, rng) for _ in range(10_000)]
    counts = np.bincount([a.sub_band for a in draws], minlength=4)
    sigma = np.sqrt(10_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 2500) < 3 * sigma)
    assert {a.power_level for a in draws} == {0}


def test_kmeans_separates_far_groups():
    pts = [(0, 0), (1, 0), (0, 1), (100, 100), (101, 100), (100, 101)]
    labels = kmeans(pts, 2)
    assert len(set(labels[:3])) == 1 and len(set(labels[3:])) == 1 and labels[0] != labels[3]


def test_single_link():
    gains = random_gain_instance(np.random.default_rng(0), 3, 1)
    out = cluster_allocate([(0, 0)], gains, 3, 10, np.ones(1), P_C, NOISE)
    assert list(out.rb_of_link) == [0] and out.swaps == 0


def test_zero_iterations_is_round_robin():
    rng = np.random.default_rng(1)
    gains = random_gain_instance(rng, 3, 3)
    out = cluster_allocate(rng.uniform(0, 10, (3, 2)), gains, 3, 0, np.ones(3), P_C, NOISE)
    assert list(out.rb_of_link) == [0, 1, 2] and out.swaps == 0


def two_link_instance():
    """Link 0 is strong on band 1, link 1 on band 0; sharing a band is ruinous."""
    n_rb = 2
    v2v = np.full((2, 2, n_rb), 1e-9)  # cross gains
    v2v[0, 0] = [1e-12, 1e-10]
    v2v[1, 1] = [1e-10, 1e-12]
    idx = np.arange(2)
    return LinkGainMatrix(np.full((2, n_rb), 1e-10), v2v[idx, idx], np.full((2, n_rb), 1e-12),
                          np.full((2, 2, n_rb), 1e-15), v2v)


def test_two_link_swap_matches_exhaustive():
    gains = two_link_instance()
    powers = np.ones(2)
    out = cluster_allocate([(0, 0), (5, 0)], gains, 2, 10, powers, P_C, NOISE)
    scores = {bands: min_sinr(gains, np.array(bands), powers) for bands in product(range(2), repeat=2)}
    assert out.swaps == 1
    assert tuple(out.rb_of_link) == max(scores, key=scores.get) == (1, 0)


def exhaustive_best(gains, links, bands, powers, n_rb):
    best = -np.inf
    for combo in product(range(n_rb), repeat=len(links)):
        trial = bands.copy()
        trial[list(links)] = combo
        best = max(best, min_sinr(gains, trial, powers, links))
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_bracket_against_brute_force(k, n_rb, seed):
    rng = np.random.default_rng(seed)
    gains = random_gain_instance(rng, n_rb, k)
    mids = rng.uniform(0, 200, size=(k, 2))
    powers = np.full(k, 0.2)
    start = cluster_allocate(mids, gains, n_rb, 0, powers, P_C, NOISE)
    final = cluster_allocate(mids, gains, n_rb, 100, powers, P_C, NOISE)
    assert sorted(i for g in final.clusters for i in g) == list(range(k))
    for group in final.clusters:
        upper = exhaustive_best(gains, group, final.rb_of_link, powers, n_rb)
        assert min_sinr(gains, final.rb_of_link, powers, group) <= upper * (1 + 1e-12)
    if len(final.clusters) == 1:
        assert min_sinr(gains, final.rb_of_link, powers) >= min_sinr(gains, start.rb_of_link, powers)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_each_accepted_swap_raises_group_minimum(k, seed):
    rng = np.random.default_rng(seed)
    n_rb = 3
    gains = random_gain_instance(rng, n_rb, k)
    mids = rng.uniform(0, 200, size=(k, 2))
    powers = np.full(k, 0.2)
    prev = cluster_allocate(mids, gains, n_rb, 0, powers, P_C, NOISE)
    for n in range(1, 30):
        cur = cluster_allocate(mids, gains, n_rb, n, powers, P_C, NOISE)
        if cur.swaps == prev.swaps:
            break
        changed = np.flatnonzero(cur.rb_of_link != prev.rb_of_link)
        assert len(changed) == 2
        group = next(g for g in cur.clusters if changed[0] in g)
        assert changed[1] in group
        assert min_sinr(gains, cur.rb_of_link, powers, group) > min_sinr(gains, prev.rb_of_link, powers, group)
        prev = cur


def test_policies_play_an_episode():
    cfg = EnvConfig(n_cue=4, n_rb=4, n_v2v=8)
    for policy in (RandomPolicy(), ClusterPolicy()):
        env = V2VEnvironment(cfg).reset(3)
        rng = np.random.default_rng(0)
        policy.begin_episode(env, rng)
        actions = policy.act(env, env.active_agents(), rng)
        assert set(actions) == set(env.active_agents())
        assert all(a.power_level == 0 for a in actions.values())
        env.step(actions)


def test_cluster_rejects_bad_args():
    gains = random_gain_instance(np.random.default_rng(0), 2, 2)
    with pytest.raises(ValueError):
        cluster_allocate([(0, 0), (1, 1)], gains, 2, -1, np.ones(2), P_C, NOISE)
