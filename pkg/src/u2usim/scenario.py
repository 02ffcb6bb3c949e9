"""Grid world, wildfire arrivals, flying regions and position legality.

Positions live on a lattice whose nodes are integer multiples of the grid
step along each axis, with the origin at (0, 0, 0).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 1000
N_REGION_TEMPLATES = 4

# hover, +x, -x, +y, -y, +z, -z
MOVES = ((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
N_MOVES = len(MOVES)
MOVE_NAMES = ("hover", "+x", "-x", "+y", "-y", "+z", "-z")


class ScenarioError(ValueError):
    """Unsupported or inconsistent scenario configuration."""


class UavPose(NamedTuple):
    x: float
    y: float
    h: float


class Bounds(Protocol):
    def contains(self, pose: UavPose) -> bool: ...


@dataclass(frozen=True)
class GridWorld:
    extent_x: float = 5000.0
    extent_y: float = 5000.0
    extent_z: float = 100.0
    step_x: float = 50.0
    step_y: float = 50.0
    step_z: float = 5.0

    def __post_init__(self):
        for axis in "xyz":
            extent = getattr(self, f"extent_{axis}")
            step = getattr(self, f"step_{axis}")
            if extent <= 0 or step <= 0:
                raise ScenarioError(f"extent_{axis} and step_{axis} must be positive")
            ratio = extent / step
            if abs(ratio - round(ratio)) > 1e-9:
                raise ScenarioError(f"step_{axis}={step} does not divide extent_{axis}={extent}")

    @property
    def steps(self) -> tuple[float, float, float]:
        return (self.step_x, self.step_y, self.step_z)

    @property
    def n_cells(self) -> int:
        """W, the number of grid cells."""
        return int(round(self.extent_x / self.step_x) * round(self.extent_y / self.step_y)
                   * round(self.extent_z / self.step_z))

    def contains(self, pose: UavPose) -> bool:
        return (0.0 <= pose.x <= self.extent_x and 0.0 <= pose.y <= self.extent_y
                and 0.0 <= pose.h <= self.extent_z)

    def snap(self, pose: UavPose) -> UavPose:
        return UavPose(*(round(v / s) * s for v, s in zip(pose, self.steps)))


@dataclass(frozen=True)
class FireArea:
    id: int
    center_x: float
    center_y: float
    radius: float
    height: float
    arrival_slot: int


@dataclass(frozen=True)
class FlyingRegion:
    fire_id: int
    ue_index: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    h_min: float
    h_max: float

    def contains(self, pose: UavPose) -> bool:
        return (self.x_min <= pose.x <= self.x_max and self.y_min <= pose.y <= self.y_max
                and self.h_min <= pose.h <= self.h_max)

    def center(self, grid: GridWorld) -> UavPose:
        """Lattice node closest to the box center, kept inside the box."""
        out = []
        for lo, hi, step in ((self.x_min, self.x_max, grid.step_x),
                             (self.y_min, self.y_max, grid.step_y),
                             (self.h_min, self.h_max, grid.step_z)):
            first = math.ceil(lo / step - 1e-9)
            last = math.floor(hi / step + 1e-9)
            if first > last:
                raise ScenarioError(f"flying region {self} holds no lattice node")
            out.append(float(round(0.5 * (first + last)) * step))
        return UavPose(*out)


@dataclass(frozen=True)
class FireParams:
    """Geometry and arrival parameters of the wildfire process."""
    radius: float = 250.0
    safety_distance: float = 50.0
    region_length: float = 200.0
    h_max: float = 100.0
    height_mu: float = 3.0
    height_sigma: float = 0.5
    max_areas: int = 5


def flying_region(fire: FireArea, k: int, r_s: float, l: float, h_max: float,
                  n_templates: int = N_REGION_TEMPLATES) -> FlyingRegion:
    """Box of the k-th UE (1 = north, 2 = west, 3 = south, 4 = east) around ``fire``."""
    if n_templates != N_REGION_TEMPLATES:
        raise ScenarioError(f"only {N_REGION_TEMPLATES} region templates are defined, got K={n_templates}")
    if not 1 <= k <= N_REGION_TEMPLATES:
        raise ScenarioError(f"region index k={k} outside 1..{N_REGION_TEMPLATES}")
    if r_s <= 0 or l <= 0:
        raise ScenarioError("safety distance and region length must be positive")
    a = fire.radius + r_s
    b = a + l
    x, y = fire.center_x, fire.center_y
    boxes = {
        1: (x - a, x + a, y + a, y + b),
        2: (x - b, x - a, y - a, y + a),
        3: (x - a, x + a, y - b, y - a),
        4: (x + a, x + b, y - a, y + a),
    }
    x_min, x_max, y_min, y_max = boxes[k]
    return FlyingRegion(fire.id, k, x_min, x_max, y_min, y_max, fire.height, h_max)


def safety_ok(bs: UavPose, fires: Sequence[FireArea], r_s: float, h_max: float = 100.0) -> bool:
    """BS is outside every fire's safety disk and strictly above the tallest fire."""
    if bs.h > h_max:
        return False
    for fire in fires:
        if math.hypot(bs.x - fire.center_x, bs.y - fire.center_y) <= fire.radius + r_s:
            return False
        if bs.h <= fire.height:
            return False
    return True


@dataclass(frozen=True)
class BsBounds:
    """Legal set of the base station: inside the grid and clear of all fires."""
    grid: GridWorld
    fires: tuple[FireArea, ...]
    r_s: float
    h_max: float

    def contains(self, pose: UavPose) -> bool:
        return self.grid.contains(pose) and safety_ok(pose, self.fires, self.r_s, self.h_max)


def apply_move(pose: UavPose, move: int, grid: GridWorld, bounds: Bounds) -> tuple[UavPose, bool]:
    """Translate ``pose`` by one grid step; illegal results leave the pose unchanged.

    Returns the new pose and whether the move was clamped.
    """
    dx, dy, dz = MOVES[move]
    if dx == dy == dz == 0:
        return pose, False
    cand = UavPose(pose.x + dx * grid.step_x, pose.y + dy * grid.step_y, pose.h + dz * grid.step_z)
    if grid.contains(cand) and bounds.contains(cand):
        return cand, False
    return pose, True


def bs_min_height(fires: Sequence[FireArea], grid: GridWorld) -> float:
    """Lowest lattice level strictly above every fire (one step above ground if none)."""
    top = max((f.height for f in fires), default=0.0)
    return (math.floor(top / grid.step_z + 1e-9) + 1) * grid.step_z


def sample_fire_height(rng: np.random.Generator, params: FireParams) -> float:
    h = rng.lognormal(params.height_mu, params.height_sigma)
    return float(np.clip(h, 1.0, params.h_max - 5.0))


def region_reach(radius: float, r_s: float, l: float) -> float:
    """Farthest horizontal distance from a fire center to a corner of its flying regions."""
    return math.hypot(radius + r_s, radius + r_s + l)


def _placement_ok(x: float, y: float, params: FireParams, others: Sequence[FireArea],
                  keep_clear: Sequence[tuple[float, float]]) -> bool:
    r, r_s, l = params.radius, params.safety_distance, params.region_length
    for f in others:
        # areas must not overlap, and flying regions of different fires must stay disjoint
        min_sep = max(r + f.radius + 2 * r_s, region_reach(r, r_s, l) + region_reach(f.radius, r_s, l))
        if math.hypot(x - f.center_x, y - f.center_y) <= min_sep:
            return False
    for px, py in keep_clear:
        if math.hypot(x - px, y - py) <= r + r_s:
            return False
    return True


def spawn_fires(lambda_a: float, rng: np.random.Generator, slot: int, active: Sequence[FireArea],
                grid: GridWorld, params: FireParams,
                keep_clear: Sequence[tuple[float, float]] = (),
                count: int | None = None) -> list[FireArea]:
    """Draw this slot's new fire areas.

    The arrival count is Poisson(``lambda_a``) truncated so no more than
    ``params.max_areas`` fires are active.  Centers are lattice nodes chosen by
    rejection sampling so that areas and their flying regions do not overlap,
    all four flying regions stay inside the grid, and every point of ``keep_clear`` (the BS) stays out
    of the new safety disk.  Pass ``count`` to bypass the Poisson draw.
    """
    if lambda_a < 0:
        raise ScenarioError("arrival rate must be non-negative")
    n = int(rng.poisson(lambda_a)) if count is None else count
    n = min(n, params.max_areas - len(active))
    if n <= 0:
        return []
    margin = params.radius + params.safety_distance + params.region_length
    nx_lo, nx_hi = math.ceil(margin / grid.step_x - 1e-9), math.floor((grid.extent_x - margin) / grid.step_x + 1e-9)
    ny_lo, ny_hi = math.ceil(margin / grid.step_y - 1e-9), math.floor((grid.extent_y - margin) / grid.step_y + 1e-9)
    if nx_lo > nx_hi or ny_lo > ny_hi:
        raise ScenarioError("grid too small to hold a fire area and its flying regions")
    placed: list[FireArea] = []
    for _ in range(n):
        height = sample_fire_height(rng, params)
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            x = float(rng.integers(nx_lo, nx_hi + 1) * grid.step_x)
            y = float(rng.integers(ny_lo, ny_hi + 1) * grid.step_y)
            if _placement_ok(x, y, params, [*active, *placed], keep_clear):
                placed.append(FireArea(len(active) + len(placed), x, y, params.radius, height, slot))
                break
        else:
            log.warning("slot %d: no room for a new fire after %d attempts; discarded",
                        slot, MAX_PLACEMENT_ATTEMPTS)
    return placed
