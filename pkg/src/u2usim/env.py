"""The streaming MDP: reset/step over scenario, channel and QoE models.

The joint action is factorized into independent sub-actions ("heads"): one
BS move, one move per active UE, one resolution per active area and one
max-power level per active UE.  :class:`HeadLayout` fixes the ordering of all
heads for the largest scenario so that learners can use fixed-size outputs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import scenario as sc
from .channel import (POWER_LEVELS_DBM, pathloss_los, received_power, sample_rician_fading,
                      tx_power_fpc)
from .config import ExperimentConfig
from .scenario import FireArea, FlyingRegion, UavPose
from .video_qoe import qoe_reward

log = logging.getLogger(__name__)

# guards the pathloss singularity if a new UE appears on the BS node
MIN_LINK_DISTANCE = 1.0


class ActionError(ValueError):
    """Malformed joint action."""


class ConstraintViolation(AssertionError):
    pass


@dataclass(frozen=True)
class JointAction:
    bs_move: int
    ue_moves: tuple[int, ...] = ()
    area_resolutions: tuple[int, ...] = ()
    ue_power_levels: tuple[int, ...] = ()


@dataclass
class StepMetrics:
    qoe: float
    delay: float
    smoothness_penalty: float
    rates: np.ndarray
    tx_power_dbm: np.ndarray
    power_levels_dbm: np.ndarray
    resolutions: np.ndarray
    frame_times: np.ndarray
    q_now: np.ndarray
    q_prev: np.ndarray
    active_ue_count: int
    active_areas: int
    clamped_moves: int = 0


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    metrics: StepMetrics
    done: bool


@dataclass
class World:
    bs: UavPose
    fires: list[FireArea] = field(default_factory=list)
    regions: list[list[FlyingRegion]] = field(default_factory=list)
    ues: list[list[UavPose]] = field(default_factory=list)
    resolutions: list[int] = field(default_factory=list)
    powers: list[list[int]] = field(default_factory=list)
    q_prev: list[list[float | None]] = field(default_factory=list)
    prev_qoe: float = 0.0
    tti: int = 0

    def copy(self) -> "World":
        return World(self.bs, list(self.fires), [list(r) for r in self.regions], [list(u) for u in self.ues],
                     list(self.resolutions), [list(p) for p in self.powers], [list(q) for q in self.q_prev],
                     self.prev_qoe, self.tti)

    def all_poses(self) -> list[UavPose]:
        return [self.bs] + [u for area in self.ues for u in area]


class HeadLayout:
    """Fixed ordering of every sub-action head for ``max_areas`` x ``K`` slots."""

    def __init__(self, max_areas: int, ues_per_area: int, n_resolutions: int, n_powers: int = len(POWER_LEVELS_DBM)):
        self.max_areas = max_areas
        self.ues_per_area = ues_per_area
        names, sizes, areas = [("bs",)], [sc.N_MOVES], [-1]
        for a in range(max_areas):
            for k in range(ues_per_area):
                names.append(("ue_move", a, k)); sizes.append(sc.N_MOVES); areas.append(a)
        for a in range(max_areas):
            names.append(("res", a)); sizes.append(n_resolutions); areas.append(a)
        for a in range(max_areas):
            for k in range(ues_per_area):
                names.append(("power", a, k)); sizes.append(n_powers); areas.append(a)
        self.names = names
        self.sizes = np.array(sizes)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.head_area = np.array(areas)
        self.n_heads = len(sizes)
        self.n_outputs = int(self.sizes.sum())

    def active_heads(self, n_active_areas: int) -> np.ndarray:
        return np.flatnonzero(self.head_area < n_active_areas)

    def slices(self):
        return [slice(int(o), int(o + s)) for o, s in zip(self.offsets, self.sizes)]

    def to_action(self, choices: Sequence[int], n_active_areas: int) -> JointAction:
        """Build the joint action from one choice per global head."""
        K, A = self.ues_per_area, self.max_areas
        n_ue = n_active_areas * K
        c = list(choices)
        ue_moves = tuple(int(x) for x in c[1:1 + n_ue])
        res = tuple(int(x) for x in c[1 + A * K:1 + A * K + n_active_areas])
        p0 = 1 + A * K + A
        powers = tuple(int(x) for x in c[p0:p0 + n_ue])
        return JointAction(int(c[0]), ue_moves, res, powers)

    def from_action(self, action: JointAction) -> np.ndarray:
        """Choice per global head, -1 where the head is inactive."""
        K, A = self.ues_per_area, self.max_areas
        out = np.full(self.n_heads, -1, dtype=np.int64)
        out[0] = action.bs_move
        out[1:1 + len(action.ue_moves)] = action.ue_moves
        r0 = 1 + A * K
        out[r0:r0 + len(action.area_resolutions)] = action.area_resolutions
        p0 = r0 + A
        out[p0:p0 + len(action.ue_power_levels)] = action.ue_power_levels
        return out


class _Legal:
    """Combines a region/bounds predicate with UAV collision avoidance."""

    def __init__(self, bounds, occupied: set, vertical_ok: bool = True, anchor_h: float | None = None):
        self.bounds = bounds
        self.occupied = occupied
        self.vertical_ok = vertical_ok
        self.anchor_h = anchor_h

    def contains(self, pose: UavPose) -> bool:
        if not self.vertical_ok and pose.h != self.anchor_h:
            return False
        return pose not in self.occupied and self.bounds.contains(pose)


class U2UEnv:
    """One UAV-BS collecting uplink video from the UAV-UEs around active fires."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        s = config.scenario
        self.scfg = s
        self.grid = s.grid()
        self.fire_params = s.fire_params()
        self.channel = config.channel
        self.weights = config.qoe.weights()
        self.ladder = config.qoe.resolution_ladder()
        self._pixels = self.ladder.pixel_counts
        self._min_rates = self.ladder.min_rates
        self.K = s.ues_per_area
        self.max_areas = s.max_areas
        self.t_max = config.run.ttis_per_episode
        self.layout = HeadLayout(self.max_areas, self.K, len(self.ladder))
        self.power_levels = np.array(POWER_LEVELS_DBM)
        self.world: World | None = None
        self._fire_rng = None
        self._fading_rng = None
        self.check_constraints = config.run.check_constraints

    # -- bookkeeping -------------------------------------------------------
    @property
    def n_active_areas(self) -> int:
        return len(self.world.fires)

    @property
    def n_active_ues(self) -> int:
        return self.n_active_areas * self.K

    @property
    def state_size(self) -> int:
        A, K = self.max_areas, self.K
        return 3 + 3 * A * K + A + A * K + A + 1

    def enumerate_subactions(self) -> list[tuple[str, int]]:
        """(sub-action id, domain size) for every decision of the current TTI."""
        out = [("bs_move", sc.N_MOVES)]
        A = self.n_active_areas
        out += [(f"ue_move[{a},{k}]", sc.N_MOVES) for a in range(A) for k in range(self.K)]
        out += [(f"resolution[{a}]", len(self.ladder)) for a in range(A)]
        out += [(f"power[{a},{k}]", len(self.power_levels)) for a in range(A) for k in range(self.K)]
        return out

    def default_action(self) -> JointAction:
        """Hover everywhere, keep current resolutions and power levels."""
        w = self.world
        return JointAction(0, (0,) * self.n_active_ues, tuple(w.resolutions),
                           tuple(p for area in w.powers for p in area))

    # -- episode control ---------------------------------------------------
    def reset(self, seed: int) -> np.ndarray:
        ss = np.random.SeedSequence(int(seed))
        fire_ss, fading_ss = ss.spawn(2)
        self._fire_rng = np.random.default_rng(fire_ss)
        self._fading_rng = np.random.default_rng(fading_ss)
        s = self.scfg
        start = UavPose(s.bs_start_x, s.bs_start_y, 0.0)
        if self.grid.snap(start) != start or not self.grid.contains(start):
            raise ValueError("bs start must be a grid node inside the world")
        self.world = World(bs=start)
        fires = sc.spawn_fires(0.0, self._fire_rng, 0, [], self.grid, self.fire_params,
                               keep_clear=[(start.x, start.y)], count=s.initial_fires)
        for f in fires:
            self._activate(self.world, f)
        self.world.bs = UavPose(start.x, start.y, sc.bs_min_height(self.world.fires, self.grid))
        if self.check_constraints:
            self.assert_constraints()
        return self.state_vector()

    def _activate(self, world: World, fire: FireArea) -> None:
        regions = [sc.flying_region(fire, k, self.scfg.safety_distance, self.scfg.region_length, self.scfg.h_max)
                   for k in range(1, self.K + 1)]
        world.fires.append(fire)
        world.regions.append(regions)
        world.ues.append([r.center(self.grid) for r in regions])
        world.resolutions.append(0)
        world.powers.append([0] * self.K)
        world.q_prev.append([None] * self.K)

    def _validate(self, action: JointAction) -> None:
        n_ue, n_a = self.n_active_ues, self.n_active_areas
        if len(action.ue_moves) != n_ue or len(action.ue_power_levels) != n_ue \
                or len(action.area_resolutions) != n_a:
            raise ActionError(f"action sized for a different active set (areas={n_a}, ues={n_ue})")
        if not 0 <= action.bs_move < sc.N_MOVES or any(not 0 <= m < sc.N_MOVES for m in action.ue_moves):
            raise ActionError("move index out of range")
        if any(not 0 <= r < len(self.ladder) for r in action.area_resolutions):
            raise ActionError("resolution index out of range")
        if any(not 0 <= p < len(self.power_levels) for p in action.ue_power_levels):
            raise ActionError("power index out of range")

    def _apply(self, world: World, action: JointAction) -> int:
        """Apply moves, resolutions and powers in place; returns the number of clamped moves."""
        occupied = set(world.all_poses())
        clamped = 0
        occupied.discard(world.bs)
        bs_bounds = sc.BsBounds(self.grid, tuple(world.fires), self.scfg.safety_distance, self.scfg.h_max)
        world.bs, c = sc.apply_move(world.bs, action.bs_move, self.grid, _Legal(bs_bounds, occupied))
        occupied.add(world.bs)
        clamped += c
        i = 0
        for a in range(len(action.area_resolutions)):
            for k in range(self.K):
                pose = world.ues[a][k]
                occupied.discard(pose)
                legal = _Legal(world.regions[a][k], occupied, not self.scfg.same_altitude, pose.h)
                pose, c = sc.apply_move(pose, action.ue_moves[i], self.grid, legal)
                occupied.add(pose)
                world.ues[a][k] = pose
                world.powers[a][k] = action.ue_power_levels[i]
                clamped += c
                i += 1
            world.resolutions[a] = action.area_resolutions[a]
        return clamped

    def _measure_batch(self, worlds: Sequence[World], fading_db) -> list[StepMetrics]:
        """Measure several candidate worlds sharing one active set in a single vectorized pass."""
        K = self.K
        n_areas = len(worlds[0].fires)
        n = n_areas * K
        if n == 0:
            empty = np.zeros(0)
            return [StepMetrics(0.0, 0.0, 0.0, empty, empty, empty, np.zeros(0, dtype=int), empty, empty, empty, 0, 0)
                    for _ in worlds]
        p = self.channel
        bs = np.array([w.bs for w in worlds], dtype=float)[:, None, :]
        ues = np.array([[u for area in w.ues for u in area] for w in worlds], dtype=float)
        p_max = self.power_levels[np.array([[q for area in w.powers for q in area] for w in worlds])]
        res = np.repeat(np.array([w.resolutions for w in worlds]), K, axis=1)
        d = np.maximum(np.sqrt(np.sum((ues - bs) ** 2, axis=2)), MIN_LINK_DISTANCE)
        pl = pathloss_los(d, p)
        p_tx = tx_power_fpc(p_max, pl, p)
        p_rx = received_power(p_tx, d, np.asarray(fading_db, dtype=float), p)
        # explicit sum over m != k
        others = ~np.eye(n, dtype=bool)
        interference = np.sum(np.where(others, p_rx[:, None, :], 0.0), axis=2)
        sinr = p_rx / (p.noise_mw + interference)
        rates = p.bandwidth_hz * np.log2(1.0 + sinr)
        with np.errstate(divide="ignore"):
            times = np.where(rates > 0, self._pixels[res] * self.weights.bits_per_pixel / rates, np.inf)
            q_now = np.log(rates / self._min_rates[res])
        prev = [qp for area in worlds[0].q_prev for qp in area]
        known = np.array([q is not None for q in prev])
        q_prev = np.where(known, np.array([q if q is not None else 0.0 for q in prev]), q_now)
        out = []
        for i in range(len(worlds)):
            delay = max(0.0, float(times[i].max()) - self.weights.frame_deadline)
            reward = qoe_reward(list(zip(q_now[i].tolist(), q_prev[i].tolist())), delay, self.weights, n_areas, K)
            smooth = self.weights.kappa / n * float(np.sum(np.abs(q_now[i] - q_prev[i])))
            out.append(StepMetrics(reward, delay, smooth, rates[i], p_tx[i], p_max[i], res[i], times[i],
                                   q_now[i], q_prev[i], n, n_areas))
        return out

    def _measure(self, world: World, fading_db) -> StepMetrics:
        return self._measure_batch([world], fading_db)[0]

    def evaluate(self, action: JointAction, fading_db=0.0) -> StepMetrics:
        """Metrics ``action`` would produce now, with fading pinned and no new arrivals."""
        return self.evaluate_batch([action], fading_db)[0]

    def evaluate_batch(self, actions: Sequence[JointAction], fading_db=0.0) -> list[StepMetrics]:
        """:meth:`evaluate` for many candidate actions at once."""
        worlds, clamps = [], []
        moved: dict = {}
        for action in actions:
            self._validate(action)
            key = (action.bs_move, action.ue_moves)
            if key not in moved:
                w = self.world.copy()
                moved[key] = (w, self._apply(w, action))
            base, clamped = moved[key]
            w = base.copy()
            # same moves as a cached world: only resolutions and powers differ
            w.resolutions = list(action.area_resolutions)
            pw = iter(action.ue_power_levels)
            w.powers = [[next(pw) for _ in range(self.K)] for _ in w.powers]
            worlds.append(w)
            clamps.append(clamped)
        out = self._measure_batch(worlds, fading_db)
        for m, c in zip(out, clamps):
            m.clamped_moves = c
        return out

    def step(self, action: JointAction) -> StepOutcome:
        if self.world is None:
            raise RuntimeError("reset() must be called before step()")
        self._validate(action)
        w = self.world
        # (1) arrivals
        new = sc.spawn_fires(self.scfg.arrival_rate, self._fire_rng, w.tti, w.fires, self.grid,
                             self.fire_params, keep_clear=[(w.bs.x, w.bs.y)])
        for f in new:
            self._activate(w, f)
        if new:
            lift = sc.bs_min_height(w.fires, self.grid)
            if w.bs.h < lift:
                w.bs = UavPose(w.bs.x, w.bs.y, lift)
        # (2) moves, resolutions, powers of the areas the action was chosen for
        clamped = self._apply(w, action)
        # (3)-(5) channel, QoE, reward
        n = len(w.fires) * self.K
        _, fading = sample_rician_fading(self.channel, self._fading_rng, n)
        m = self._measure(w, fading)
        m.clamped_moves = clamped
        i = 0
        for a in range(len(w.fires)):
            for k in range(self.K):
                w.q_prev[a][k] = float(m.q_now[i])
                i += 1
        w.prev_qoe = m.qoe
        # (6) advance
        w.tti += 1
        if self.check_constraints:
            self.assert_constraints()
        return StepOutcome(self.state_vector(), m.qoe, m, w.tti >= self.t_max)

    # -- observation -------------------------------------------------------
    def _norm(self, pose: UavPose) -> list[float]:
        g = self.grid
        return [2 * pose.x / g.extent_x - 1, 2 * pose.y / g.extent_y - 1, 2 * pose.h / g.extent_z - 1]

    def state_vector(self) -> np.ndarray:
        w = self.world
        A, K = self.max_areas, self.K
        v = np.zeros(self.state_size)
        v[0:3] = self._norm(w.bs)
        o = 3
        n_res = max(len(self.ladder) - 1, 1)
        n_pow = max(len(self.power_levels) - 1, 1)
        for a in range(len(w.fires)):
            for k in range(K):
                v[o + 3 * (a * K + k):o + 3 * (a * K + k) + 3] = self._norm(w.ues[a][k])
        o += 3 * A * K
        for a, r in enumerate(w.resolutions):
            v[o + a] = r / n_res
        o += A
        for a in range(len(w.fires)):
            for k in range(K):
                v[o + a * K + k] = w.powers[a][k] / n_pow
        o += A * K
        v[o:o + len(w.fires)] = 1.0
        o += A
        v[o] = math.tanh(w.prev_qoe)
        return v

    def decode_poses(self, v: np.ndarray) -> tuple[UavPose, list[UavPose]]:
        """Inverse of the pose part of :meth:`state_vector`, snapped to the grid."""
        g = self.grid
        ext = np.array([g.extent_x, g.extent_y, g.extent_z])

        def dec(x):
            return g.snap(UavPose(*((np.asarray(x) + 1) / 2 * ext).tolist()))

        A, K = self.max_areas, self.K
        flags = v[3 + 3 * A * K + A + A * K:3 + 3 * A * K + A + A * K + A]
        ues = [dec(v[3 + 3 * i:6 + 3 * i]) for i in range(A * K) if flags[i // K] > 0.5]
        return dec(v[0:3]), ues

    def assert_constraints(self) -> None:
        w = self.world
        if not self.grid.contains(w.bs) or not sc.safety_ok(w.bs, w.fires, self.scfg.safety_distance,
                                                              self.scfg.h_max):
            raise ConstraintViolation(f"BS pose {w.bs} violates the safety/height constraints")
        for a, area in enumerate(w.ues):
            for k, pose in enumerate(area):
                if not w.regions[a][k].contains(pose) or not self.grid.contains(pose):
                    raise ConstraintViolation(f"UE ({a},{k}) at {pose} left its flying region")
