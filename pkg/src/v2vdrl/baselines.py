"""Comparison allocators: uniform-random sub-bands and position clustering.

Both transmit at the highest power level; neither adapts power.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .channel import LinkGainMatrix, assemble_gains, unit_fading
from .environment import Action, allocation_matrix, v2v_sinr

MAX_POWER_LEVEL = 0


def random_policy(n_rb: int, rng) -> Action:
    if n_rb < 1:
        raise ValueError("n_rb must be >= 1")
    return Action(int(rng.integers(n_rb)), MAX_POWER_LEVEL)


@dataclass(frozen=True)
class ClusterAssignment:
    clusters: tuple[tuple[int, ...], ...]
    rb_of_link: np.ndarray
    swaps: int = 0


def kmeans(points, n_clusters: int, iters: int = 50) -> np.ndarray:
    """Lloyd's algorithm with farthest-point seeding from point 0; deterministic."""
    pts = np.asarray(points, dtype=float)
    centers = [pts[0]]
    for _ in range(1, n_clusters):
        d = np.min([np.sum((pts - c) ** 2, axis=1) for c in centers], axis=0)
        centers.append(pts[int(np.argmax(d))])
    centers = np.array(centers)
    labels = np.zeros(len(pts), dtype=int)
    for it in range(iters):
        d = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(d, axis=1)
        if it and np.array_equal(new, labels):
            break
        labels = new
        for c in range(n_clusters):
            if np.any(labels == c):
                centers[c] = pts[labels == c].mean(axis=0)
    return labels


def _group_min_sinr(gains, bands, powers_w, cue_power_w, noise_w, group) -> float:
    gamma = v2v_sinr(gains, allocation_matrix(bands, gains.n_rb), powers_w, cue_power_w, noise_w)
    return float(gamma[list(group)].min())


def cluster_allocate(midpoints, gains: LinkGainMatrix, n_rb: int, max_iters: int,
                     powers_w, cue_power_w: float, noise_w: float) -> ClusterAssignment:
    """Group links by position, hand out sub-bands round-robin, then refine by swaps.

    Links are split into ``ceil(K / n_rb)`` spatial groups so each group can
    start on distinct sub-bands. A swap exchanges the sub-bands of two links
    in the same group and is kept only if the group's minimum V2V SINR
    strictly increases. Each pass over the groups applies the best swap of
    every group; refinement stops at a local optimum or after ``max_iters``
    accepted swaps.
    """
    if n_rb < 1 or max_iters < 0:
        raise ValueError("n_rb must be >= 1 and max_iters >= 0")
    pts = np.asarray(midpoints, dtype=float).reshape(-1, 2)
    k = len(pts)
    n_groups = -(-k // n_rb)
    labels = kmeans(pts, n_groups) if n_groups > 1 else np.zeros(k, dtype=int)
    groups = tuple(tuple(int(i) for i in np.flatnonzero(labels == g)) for g in range(n_groups))
    groups = tuple(g for g in groups if g)
    bands = np.zeros(k, dtype=int)
    for group in groups:
        for pos, link in enumerate(group):
            bands[link] = pos % n_rb
    powers_w = np.asarray(powers_w, dtype=float)

    swaps = 0
    improved = True
    while improved and swaps < max_iters:
        improved = False
        for group in groups:
            if swaps >= max_iters:
                break
            current = _group_min_sinr(gains, bands, powers_w, cue_power_w, noise_w, group)
            best, best_pair = current, None
            for i, j in combinations(group, 2):
                if bands[i] == bands[j]:
                    continue
                bands[i], bands[j] = bands[j], bands[i]
                value = _group_min_sinr(gains, bands, powers_w, cue_power_w, noise_w, group)
                bands[i], bands[j] = bands[j], bands[i]
                if value > best:
                    best, best_pair = value, (i, j)
            if best_pair is not None:
                i, j = best_pair
                bands[i], bands[j] = bands[j], bands[i]
                swaps += 1
                improved = True
    return ClusterAssignment(groups, bands, swaps)


class RandomPolicy:
    name = "random"

    def begin_episode(self, env, rng) -> None:
        pass

    def act(self, env, agents, rng) -> dict:
        return {k: random_policy(env.cfg.n_rb, rng) for k in agents}


class ClusterPolicy:
    """Allocates once per episode from large-scale gains (fading at its mean)."""

    name = "cluster"

    def __init__(self, max_iters: int = 100):
        self.max_iters = max_iters
        self.assignment: ClusterAssignment | None = None

    def begin_episode(self, env, rng) -> None:
        cfg = env.cfg
        gains = assemble_gains(env.large_scale, unit_fading(cfg.n_cue, cfg.n_v2v, cfg.n_rb))
        powers = np.full(cfg.n_v2v, cfg.power_levels_w[MAX_POWER_LEVEL])
        midpoints = (env.tx_pos + env.rx_pos) / 2
        self.assignment = cluster_allocate(midpoints, gains, cfg.n_rb, self.max_iters,
                                           powers, cfg.cue_power_w, cfg.noise_w)

    def act(self, env, agents, rng) -> dict:
        return {k: Action(int(self.assignment.rb_of_link[k]), MAX_POWER_LEVEL) for k in agents}
