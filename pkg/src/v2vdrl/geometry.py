"""Manhattan road grid, Poisson vehicle drops, mobility and V2V pairing.

The grid is a torus of ``block_rows x block_cols`` blocks: a vehicle that
drives off one edge re-enters from the opposite one, so the population is
constant. Streets run along block boundaries; vertical streets carry the
N/S lanes and horizontal streets carry the E/W lanes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

DIRECTIONS = ("N", "S", "E", "W")
UNIT_VECTORS = {"N": (0.0, 1.0), "S": (0.0, -1.0), "E": (1.0, 0.0), "W": (-1.0, 0.0)}
_LEFT = {"N": "W", "W": "S", "S": "E", "E": "N"}
_RIGHT = {"N": "E", "E": "S", "S": "W", "W": "N"}

NEIGHBORS_PER_VEHICLE = 3


class GeometryError(ValueError):
    """Invalid grid, density or topology request."""


@dataclass(frozen=True)
class Lane:
    direction: str
    street: int
    # x of the centerline for N/S lanes, y for E/W lanes
    offset: float
    length: float

    @property
    def vertical(self) -> bool:
        return self.direction in ("N", "S")


@dataclass(frozen=True)
class RoadGrid:
    block_rows: int = 3
    block_cols: int = 3
    block_width_m: float = 250.0
    block_height_m: float = 433.0
    lanes_per_direction: int = 3
    lane_width_m: float = 3.5

    def __post_init__(self):
        if self.block_rows < 1 or self.block_cols < 1:
            raise GeometryError("grid needs at least one block")
        if self.lanes_per_direction < 1:
            raise GeometryError("lanes_per_direction must be >= 1")
        if self.lane_width_m <= 0 or self.block_width_m <= 0 or self.block_height_m <= 0:
            raise GeometryError("grid dimensions must be positive")
        per_street = -(-self.lanes_per_direction // min(self.block_rows, self.block_cols))
        if per_street * self.lane_width_m >= min(self.block_width_m, self.block_height_m) / 2:
            raise GeometryError("lanes do not fit between blocks")

    @property
    def width(self) -> float:
        return self.block_cols * self.block_width_m

    @property
    def height(self) -> float:
        return self.block_rows * self.block_height_m

    @property
    def n_lanes(self) -> int:
        return 4 * self.lanes_per_direction

    @property
    def center(self) -> tuple[float, float]:
        return (self.width / 2, self.height / 2)

    @cached_property
    def lanes(self) -> tuple[Lane, ...]:
        """All lane centerlines, grouped by direction in N, S, E, W order.

        Lane ``i`` of a direction sits on street ``i % n_streets``; further
        lanes on the same street stack outward by one lane width. Traffic
        keeps to the right of the street line.
        """
        out = []
        for direction in DIRECTIONS:
            vertical = direction in ("N", "S")
            n_streets = self.block_cols if vertical else self.block_rows
            spacing = self.block_width_m if vertical else self.block_height_m
            period = self.width if vertical else self.height
            length = self.height if vertical else self.width
            sign = 1.0 if direction in ("N", "W") else -1.0
            for i in range(self.lanes_per_direction):
                street, slot = i % n_streets, i // n_streets
                offset = (street * spacing + sign * self.lane_width_m * (0.5 + slot)) % period
                out.append(Lane(direction, street, offset, length))
        return tuple(out)

    @property
    def total_lane_length(self) -> float:
        return sum(lane.length for lane in self.lanes)


@dataclass(frozen=True)
class Vehicle:
    id: int
    position: tuple[float, float]
    direction: str
    lane: int
    speed_mps: float = 10.0


@dataclass(frozen=True)
class V2VTopology:
    """Directed (tx_id, rx_id) pairs; each pair is one agent."""

    links: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.links)

    def links_from(self, tx_id: int) -> list[tuple[int, int]]:
        return [link for link in self.links if link[0] == tx_id]


def spawn_vehicles(grid: RoadGrid, density: float, rng_seed, speed_mps: float = 10.0) -> list[Vehicle]:
    """Drop vehicles on every lane as a 1-D Poisson process.

    ``density`` is in vehicles per meter of lane. ``rng_seed`` is anything
    ``numpy.random.default_rng`` accepts.
    """
    if not density >= 0:
        raise GeometryError(f"density must be non-negative, got {density}")
    rng = np.random.default_rng(rng_seed)
    vehicles = []
    for lane_idx, lane in enumerate(grid.lanes):
        count = rng.poisson(density * lane.length)
        along = rng.uniform(0.0, lane.length, size=count)
        for a in along:
            pos = (lane.offset, float(a)) if lane.vertical else (float(a), lane.offset)
            vehicles.append(Vehicle(len(vehicles), pos, lane.direction, lane_idx, speed_mps))
    return vehicles


def on_lane(vehicle: Vehicle, grid: RoadGrid, tol: float = 1e-6) -> bool:
    lane = grid.lanes[vehicle.lane]
    if lane.direction != vehicle.direction:
        return False
    x, y = vehicle.position
    across, along = (x, y) if lane.vertical else (y, x)
    return abs(across - lane.offset) <= tol and 0.0 <= along < lane.length + tol


def corridor(vehicle: Vehicle, grid: RoadGrid) -> int:
    """Street identifier: vehicles with equal corridors share a street."""
    lane = grid.lanes[vehicle.lane]
    return lane.street if lane.vertical else -1 - lane.street


def _distance_to_crossing(along: float, spacing: float, forward: bool) -> float:
    r = along % spacing
    if forward:
        return spacing - r
    return r if r > 0 else spacing


def _lane_for_turn(grid: RoadGrid, direction: str, street_coord: float) -> int:
    vertical = direction in ("N", "S")
    period = grid.width if vertical else grid.height
    best, best_d = -1, np.inf
    for idx, lane in enumerate(grid.lanes):
        if lane.direction != direction:
            continue
        d = abs(lane.offset - street_coord) % period
        d = min(d, period - d)
        if d < best_d - 1e-9:
            best, best_d = idx, d
    return best


def step_mobility(vehicles, grid: RoadGrid, dt: float, rng, turn_probs=(0.25, 0.25, 0.5)) -> list[Vehicle]:
    """Advance every vehicle by ``speed * dt`` along its lane.

    At each intersection a vehicle turns left, right or goes straight with
    ``turn_probs``. A turning vehicle is placed on the nearest lane of its
    new direction, at the center of the intersection.
    """
    if dt < 0:
        raise GeometryError("dt must be non-negative")
    probs = np.asarray(turn_probs, dtype=float)
    if probs.shape != (3,) or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise GeometryError("turn_probs must be three probabilities summing to 1")
    moved = []
    for v in vehicles:
        x, y = v.position
        direction, lane_idx = v.direction, v.lane
        remaining = v.speed_mps * dt
        while remaining > 0:
            vertical = direction in ("N", "S")
            forward = direction in ("N", "E")
            spacing = grid.block_height_m if vertical else grid.block_width_m
            along = y if vertical else x
            gap = _distance_to_crossing(along, spacing, forward)
            step = min(gap, remaining)
            ux, uy = UNIT_VECTORS[direction]
            x = (x + ux * step) % grid.width
            y = (y + uy * step) % grid.height
            remaining -= step
            if step < gap:
                break
            # reached an intersection: snap to it and pick a turn
            if vertical:
                y = round(y / spacing) * spacing % grid.height
            else:
                x = round(x / spacing) * spacing % grid.width
            choice = rng.choice(3, p=probs)
            if choice == 2:
                continue
            new_dir = _LEFT[direction] if choice == 0 else _RIGHT[direction]
            street_coord = y if vertical else x
            lane_idx = _lane_for_turn(grid, new_dir, street_coord)
            lane = grid.lanes[lane_idx]
            if vertical:
                # now moving E/W on the horizontal street at y
                x = round(x / grid.block_width_m) * grid.block_width_m % grid.width
                y = lane.offset
            else:
                y = round(y / grid.block_height_m) * grid.block_height_m % grid.height
                x = lane.offset
            direction = new_dir
        moved.append(replace(v, position=(float(x), float(y)), direction=direction, lane=lane_idx))
    return moved


def build_topology(vehicles, n_neighbors: int = NEIGHBORS_PER_VEHICLE) -> V2VTopology:
    """Link every vehicle to its ``n_neighbors`` nearest vehicles.

    Ties in distance go to the lower vehicle id. Links are emitted per
    transmitter in ascending id order, nearest receiver first.
    """
    if len(vehicles) < 2:
        raise GeometryError(f"need at least 2 vehicles for a topology, got {len(vehicles)}")
    ordered = sorted(vehicles, key=lambda v: v.id)
    ids = np.array([v.id for v in ordered])
    pos = np.array([v.position for v in ordered], dtype=float)
    dist = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
    n_pick = min(n_neighbors, len(ordered) - 1)
    links = []
    for i in range(len(ordered)):
        d = dist[i].copy()
        d[i] = np.inf
        nearest = np.lexsort((ids, d))[:n_pick]
        links.extend((int(ids[i]), int(ids[j])) for j in nearest)
    return V2VTopology(tuple(links))
