"""Single-cell V2I/V2V spectrum-sharing MDP.

M CUEs hold orthogonal uplink sub-bands (CUE m on sub-band m). Each of the
K V2V links is an agent that picks one sub-band and one of three power
levels every 1 ms slot. Agents act in a random order each slot; the
physics (SINR, capacity, payload drain) is evaluated once all active agents
have acted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from . import channel as ch
from .geometry import RoadGrid, build_topology, corridor, spawn_vehicles
from .seeding import as_seed_sequence, child_seed

N_POWER_LEVELS = 3
NEIGHBORS_PER_LINK = 3


class ConfigError(ValueError):
    pass


class ContractError(RuntimeError):
    """The caller broke an environment precondition."""


@dataclass(frozen=True)
class GeometryConfig:
    block_rows: int = 3
    block_cols: int = 3
    block_width_m: float = 250.0
    block_height_m: float = 433.0
    lanes_per_direction: int = 3
    lane_width_m: float = 3.5
    # one vehicle every 25 m of lane: 2.5 s headway at 36 km/h
    vehicle_density: float = 0.04
    speed_mps: float = 10.0
    turn_left: float = 0.25
    turn_right: float = 0.25
    turn_straight: float = 0.5

    @property
    def grid(self) -> RoadGrid:
        return RoadGrid(self.block_rows, self.block_cols, self.block_width_m,
                        self.block_height_m, self.lanes_per_direction, self.lane_width_m)

    @property
    def turn_probs(self) -> tuple[float, float, float]:
        return (self.turn_left, self.turn_right, self.turn_straight)


@dataclass(frozen=True)
class EnvConfig:
    n_cue: int = 20
    n_v2v: int = 20
    n_rb: int = 20
    total_bandwidth_hz: float = 10e6
    cue_power_dbm: float = 23.0
    power_levels_dbm: tuple[float, ...] = (23.0, 10.0, 5.0)
    noise_dbm: float = -114.0
    deadline_ms: int = 100
    slot_ms: int = 1
    payload_bits: float = 16960.0
    penalty: float = -20.0
    lambda_v2i: float = 1e-6
    # observation scaling: (dB - ref) / scale
    obs_gain_ref_db: float = -80.0
    obs_gain_scale_db: float = 20.0
    obs_interference_scale_db: float = 20.0

    def __post_init__(self):
        if len(self.power_levels_dbm) != N_POWER_LEVELS:
            raise ConfigError(f"exactly {N_POWER_LEVELS} power levels required")
        if self.n_rb < 1 or self.n_v2v < 1:
            raise ConfigError("need at least one sub-band and one V2V link")
        if self.n_cue != self.n_rb:
            raise ConfigError("one CUE per sub-band: n_cue must equal n_rb")
        if self.penalty >= 0:
            raise ConfigError("penalty must be negative")
        if self.slot_ms <= 0 or self.deadline_ms <= 0 or self.deadline_ms % self.slot_ms:
            raise ConfigError("deadline_ms must be a positive multiple of slot_ms")
        if self.payload_bits < 0:
            raise ConfigError("payload_bits must be non-negative")

    @property
    def subband_hz(self) -> float:
        return self.total_bandwidth_hz / self.n_rb

    @property
    def n_slots(self) -> int:
        return self.deadline_ms // self.slot_ms

    @property
    def n_actions(self) -> int:
        return N_POWER_LEVELS * self.n_rb

    @property
    def obs_dim(self) -> int:
        return 4 * self.n_rb + 2

    @property
    def noise_w(self) -> float:
        return float(ch.dbm_to_watts(self.noise_dbm))

    @property
    def cue_power_w(self) -> float:
        return float(ch.dbm_to_watts(self.cue_power_dbm))

    @property
    def power_levels_w(self) -> np.ndarray:
        return ch.dbm_to_watts(self.power_levels_dbm)


class Action(NamedTuple):
    sub_band: int
    power_level: int

    def flat(self) -> int:
        return self.sub_band * N_POWER_LEVELS + self.power_level

    @classmethod
    def from_flat(cls, index: int) -> Action:
        return cls(*divmod(int(index), N_POWER_LEVELS))


@dataclass(frozen=True)
class Observation:
    g: np.ndarray
    interference: np.ndarray
    h: np.ndarray
    neighbor_counts: np.ndarray
    load: float
    time_left: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.g, self.interference, self.h, self.neighbor_counts,
                               [self.load, self.time_left]])

    def __array__(self, dtype=None, copy=None):
        v = self.to_vector()
        return v if dtype is None else v.astype(dtype)


@dataclass
class LinkLoadState:
    remaining_bits: float
    remaining_ms: int
    failed: bool = False
    delivered: bool = False


class StepOutcome(NamedTuple):
    reward: float
    next_observation: Observation
    terminal: bool


@dataclass(frozen=True)
class SlotRecord:
    t: int
    v2i_capacity: np.ndarray
    v2v_sinr: np.ndarray
    bands: np.ndarray
    power_levels: np.ndarray
    rewards: dict = field(default_factory=dict)


# -- physics ---------------------------------------------------------------

def allocation_matrix(bands, n_rb: int) -> np.ndarray:
    """rho[m, k] = 1 iff link k transmits on sub-band m; band -1 means silent."""
    bands = np.asarray(bands, dtype=int)
    return (bands[None, :] == np.arange(n_rb)[:, None]).astype(float)


def cue_sinr(gains: ch.LinkGainMatrix, rho, powers_w, cue_power_w: float, noise_w: float) -> np.ndarray:
    m = np.arange(rho.shape[0])
    signal = cue_power_w * gains.h[m, m]
    # sum_k rho[m,k] * P_k * htilde[k, m]
    interference = np.einsum("mk,k,km->m", rho, powers_w, gains.htilde[:, : rho.shape[0]])
    return signal / (noise_w + interference)


def cue_capacity(gamma, bandwidth_hz: float):
    return bandwidth_hz * np.log2(1.0 + np.asarray(gamma, dtype=float))


def receiver_interference(gains: ch.LinkGainMatrix, rho, powers_w, cue_power_w: float,
                          noise_w: float) -> np.ndarray:
    """Noise plus co-channel power at each V2V receiver per sub-band, shape (K, N).

    A link's own transmission is excluded from its own row.
    """
    n_rb = rho.shape[0]
    b = np.arange(n_rb)
    cue_term = cue_power_w * gains.cue_to_v2v[b, :, b]  # (N, K): CUE b on band b
    tx = rho * powers_w[None, :]  # (N, J)
    others = 1.0 - np.eye(rho.shape[1])
    v2v = np.einsum("bj,jkb,jk->bk", tx, gains.v2v_to_v2v, others)
    return (noise_w + cue_term + v2v).T


def v2v_sinr(gains: ch.LinkGainMatrix, rho, powers_w, cue_power_w: float, noise_w: float) -> np.ndarray:
    """SINR at each V2V receiver on its chosen band; silent links get 0."""
    interference = receiver_interference(gains, rho, powers_w, cue_power_w, noise_w)
    active = rho.sum(axis=0) > 0
    band = np.argmax(rho, axis=0)
    k = np.arange(rho.shape[1])
    signal = powers_w * gains.g[k, band]
    return np.where(active, signal / interference[k, band], 0.0)


def reward(failed: bool, cue_capacities, cfg: EnvConfig) -> float:
    if failed:
        return float(cfg.penalty)
    return float(cfg.lambda_v2i * np.sum(cue_capacities))


# -- environment -----------------------------------------------------------

class V2VEnvironment:
    """Stateful MDP for one episode at a time; single writer."""

    def __init__(self, env_cfg: EnvConfig = EnvConfig(), channel_cfg: ch.ChannelConfig = ch.DEFAULT_CHANNEL,
                 geometry_cfg: GeometryConfig = GeometryConfig(), record_trace: bool = False):
        self.cfg = env_cfg
        self.channel_cfg = channel_cfg
        self.geometry_cfg = geometry_cfg
        self.grid = geometry_cfg.grid
        self.record_trace = record_trace
        self.trace: list[tuple] = []
        self.t = 0
        self._ready = False

    # -- episode setup --

    def reset(self, seed) -> V2VEnvironment:
        cfg = self.cfg
        ss = as_seed_sequence(seed)
        vehicles = spawn_vehicles(self.grid, self.geometry_cfg.vehicle_density, child_seed(ss, 0),
                                  self.geometry_cfg.speed_mps)
        if len(vehicles) < 2:
            raise ConfigError(f"vehicle drop produced {len(vehicles)} vehicles; raise vehicle_density")
        topology = build_topology(vehicles)
        by_id = {v.id: v for v in vehicles}
        bs = np.array(self.grid.center)

        # V2V links: transmitters closest to the base station first
        def bs_dist(v):
            return (float(np.hypot(*(np.array(v.position) - bs))), v.id)

        links = []
        for v in sorted(vehicles, key=bs_dist):
            for link in topology.links_from(v.id):
                if len(links) < cfg.n_v2v:
                    links.append(link)
            if len(links) == cfg.n_v2v:
                break
        if len(links) < cfg.n_v2v:
            raise ConfigError(f"only {len(links)} V2V links available, {cfg.n_v2v} requested")
        used = {vid for link in links for vid in link}
        free = [v for v in vehicles if v.id not in used]
        if len(free) < cfg.n_cue:
            raise ConfigError(f"not enough vehicles for {cfg.n_cue} CUEs; raise vehicle_density")
        rng_ls = np.random.default_rng(child_seed(ss, 1))
        cues = [free[i] for i in sorted(rng_ls.choice(len(free), size=cfg.n_cue, replace=False))]

        self.vehicles = vehicles
        self.topology = topology
        self.links = links
        self.cues = cues
        self.tx_pos = np.array([by_id[a].position for a, _ in links])
        self.rx_pos = np.array([by_id[b].position for _, b in links])
        self.cue_pos = np.array([c.position for c in cues])
        self.large_scale = ch.large_scale_state(
            self.cue_pos, self.tx_pos, self.rx_pos,
            [corridor(c, self.grid) for c in cues],
            [corridor(by_id[a], self.grid) for a, _ in links],
            [corridor(by_id[b], self.grid) for _, b in links],
            bs, rng_ls, self.channel_cfg,
        )

        # neighbours: the other links with the nearest transmitters
        d = np.hypot(*(self.tx_pos[:, None, :] - self.tx_pos[None, :, :]).transpose(2, 0, 1))
        np.fill_diagonal(d, np.inf)
        n_nb = min(NEIGHBORS_PER_LINK, cfg.n_v2v - 1)
        self.neighbors = [np.lexsort((np.arange(cfg.n_v2v), d[k]))[:n_nb] for k in range(cfg.n_v2v)]

        self._fading_rng = np.random.default_rng(child_seed(ss, 2))
        self._order_rng = np.random.default_rng(child_seed(ss, 3))
        self._redraw_fading()

        k = cfg.n_v2v
        self.remaining_bits = np.full(k, float(cfg.payload_bits))
        self.remaining_slots = np.full(k, cfg.n_slots, dtype=int)
        self.delivered = self.remaining_bits <= 0
        self.failed = np.zeros(k, dtype=bool)
        self.prev_interference = np.full((k, cfg.n_rb), cfg.noise_w)
        self.prev_counts = np.zeros((k, cfg.n_rb))
        self.pending: dict[int, Action] = {}
        self.t = 0
        self.trace = []
        self.last_slot: SlotRecord | None = None
        self._ready = True
        return self

    def _redraw_fading(self):
        cfg = self.cfg
        self.fading = ch.sample_fast_fading(cfg.n_cue, cfg.n_v2v, cfg.n_rb, self._fading_rng)
        self.gains = ch.assemble_gains(self.large_scale, self.fading)

    # -- queries --

    @property
    def n_agents(self) -> int:
        return self.cfg.n_v2v

    @property
    def n_actions(self) -> int:
        return self.cfg.n_actions

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def active(self) -> np.ndarray:
        return ~(self.delivered | self.failed)

    def active_agents(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.active)] if self.t < self.cfg.n_slots else []

    @property
    def horizon_reached(self) -> bool:
        return self.t >= self.cfg.n_slots

    @property
    def done(self) -> bool:
        return self.horizon_reached or not self.active.any()

    def load_state(self, k: int) -> LinkLoadState:
        return LinkLoadState(float(self.remaining_bits[k]), int(self.remaining_slots[k]) * self.cfg.slot_ms,
                             bool(self.failed[k]), bool(self.delivered[k]))

    def observe(self, k: int) -> Observation:
        cfg = self.cfg
        ref, scale = cfg.obs_gain_ref_db, cfg.obs_gain_scale_db
        tiny = 1e-30
        g = (ch.linear_to_db(np.maximum(self.gains.g[k], tiny)) - ref) / scale
        h = (ch.linear_to_db(np.maximum(self.gains.htilde[k], tiny)) - ref) / scale
        interf = (ch.watts_to_dbm(self.prev_interference[k]) - cfg.noise_dbm) / cfg.obs_interference_scale_db
        load = self.remaining_bits[k] / cfg.payload_bits if cfg.payload_bits > 0 else 0.0
        return Observation(g, interf, h, self.prev_counts[k] / NEIGHBORS_PER_LINK,
                           float(load), float(self.remaining_slots[k] / cfg.n_slots))

    def slot_order(self) -> list[int]:
        """Active agents in a fresh random order for this slot."""
        agents = self.active_agents()
        return [agents[i] for i in self._order_rng.permutation(len(agents))]

    # -- dynamics --

    def act(self, k: int, action) -> None:
        if not self._ready:
            raise ContractError("reset() must be called first")
        if isinstance(action, (int, np.integer)):
            if not 0 <= action < self.cfg.n_actions:
                raise ContractError(f"flat action {action} out of range")
            action = Action.from_flat(action)
        sub_band, level = action
        if not (0 <= sub_band < self.cfg.n_rb and 0 <= level < N_POWER_LEVELS):
            raise ContractError(f"action {tuple(action)} out of range")
        if not 0 <= k < self.cfg.n_v2v or not self.active[k] or self.horizon_reached:
            raise ContractError(f"agent {k} is terminal or does not exist")
        if k in self.pending:
            raise ContractError(f"agent {k} already acted this slot")
        self.pending[k] = Action(int(sub_band), int(level))

    def advance(self) -> dict[int, StepOutcome]:
        """Resolve the slot once every active agent has acted."""
        cfg = self.cfg
        if self.horizon_reached:
            raise ContractError("episode horizon reached; call reset()")
        active = self.active.copy()
        if set(self.pending) != set(np.flatnonzero(active).tolist()):
            raise ContractError("not every active agent has acted this slot")
        bands = np.full(cfg.n_v2v, -1)
        levels = np.full(cfg.n_v2v, -1)
        powers = np.zeros(cfg.n_v2v)
        for k, a in self.pending.items():
            bands[k], levels[k] = a
            powers[k] = cfg.power_levels_w[a.power_level]
        rho = allocation_matrix(bands, cfg.n_rb)

        gamma_c = cue_sinr(self.gains, rho, powers, cfg.cue_power_w, cfg.noise_w)
        cap_c = cue_capacity(gamma_c, cfg.subband_hz)
        gamma_v = v2v_sinr(self.gains, rho, powers, cfg.cue_power_w, cfg.noise_w)
        cap_v = cue_capacity(gamma_v, cfg.subband_hz)
        interference = receiver_interference(self.gains, rho, powers, cfg.cue_power_w, cfg.noise_w)

        counts = np.zeros((cfg.n_v2v, cfg.n_rb))
        for k in range(cfg.n_v2v):
            for j in self.neighbors[k]:
                if bands[j] >= 0:
                    counts[k, bands[j]] += 1

        drained = cap_v * cfg.slot_ms / 1000.0
        self.remaining_bits = np.where(active, np.maximum(self.remaining_bits - drained, 0.0), self.remaining_bits)
        self.remaining_slots = np.where(active, self.remaining_slots - 1, self.remaining_slots)
        delivered_now = active & (self.remaining_bits <= 0)
        failed_now = active & ~delivered_now & (self.remaining_slots <= 0)
        self.delivered |= delivered_now
        self.failed |= failed_now

        rewards = {k: reward(bool(failed_now[k]), cap_c, cfg) for k in self.pending}
        self.last_slot = SlotRecord(self.t, cap_c, gamma_v, bands, levels, rewards)
        if self.record_trace:
            for k in sorted(self.pending):
                self.trace.append((self.t, k, int(bands[k]), int(levels[k]), rewards[k],
                                   float(gamma_v[k]), float(self.remaining_bits[k])))

        self.t += 1
        self.prev_interference = interference
        self.prev_counts = counts
        self._redraw_fading()
        outcomes = {
            k: StepOutcome(rewards[k], self.observe(k), bool(delivered_now[k] or failed_now[k]))
            for k in sorted(self.pending)
        }
        self.pending = {}
        return outcomes

    def step(self, actions: Mapping[int, object]) -> dict[int, StepOutcome]:
        """Submit one action per active agent in this slot's random order, then resolve."""
        for k in self.slot_order():
            self.act(k, actions[k])
        return self.advance()


TRACE_HEADER = ("t", "agent", "sub_band", "power_level", "reward", "gamma_v2v", "remaining_bits")


def write_trace_csv(env: V2VEnvironment, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_HEADER)
        for row in env.trace:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
