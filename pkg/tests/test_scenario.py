import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from u2usim import scenario as sc
from u2usim.scenario import FireArea, FireParams, GridWorld, UavPose

GRID = GridWorld()
FIRE = FireArea(0, 2500.0, 2500.0, 250.0, 20.0, 0)


def test_grid_defaults_and_cells():
    assert GRID.n_cells == 100 * 100 * 20
    with pytest.raises(sc.ScenarioError):
        GridWorld(step_x=30.0)
    with pytest.raises(sc.ScenarioError):
        GridWorld(extent_z=0.0)


def test_move_table():
    assert sc.N_MOVES == 7
    assert sc.MOVES[0] == (0, 0, 0)
    assert sorted(map(tuple, np.abs(sc.MOVES).tolist()))[1:] == [(0, 0, 1)] * 2 + [(0, 1, 0)] * 2 + [(1, 0, 0)] * 2


def test_flying_regions_frozen_geometry():
    # a = r + r_s = 300, b = a + l = 500
    north = sc.flying_region(FIRE, 1, 50.0, 200.0, 100.0)
    assert (north.x_min, north.x_max, north.y_min, north.y_max) == (2200.0, 2800.0, 2800.0, 3000.0)
    west = sc.flying_region(FIRE, 2, 50.0, 200.0, 100.0)
    assert (west.x_min, west.x_max, west.y_min, west.y_max) == (2000.0, 2200.0, 2200.0, 2800.0)
    south = sc.flying_region(FIRE, 3, 50.0, 200.0, 100.0)
    assert (south.y_min, south.y_max) == (2000.0, 2200.0)
    east = sc.flying_region(FIRE, 4, 50.0, 200.0, 100.0)
    assert (east.x_min, east.x_max) == (2800.0, 3000.0)
    assert north.h_min == FIRE.height and north.h_max == 100.0


def test_region_center_is_lattice_node_inside():
    for k in range(1, 5):
        reg = sc.flying_region(FIRE, k, 50.0, 200.0, 100.0)
        c = reg.center(GRID)
        assert reg.contains(c) and GRID.snap(c) == c


def test_only_four_templates():
    with pytest.raises(sc.ScenarioError):
        sc.flying_region(FIRE, 1, 50.0, 200.0, 100.0, n_templates=12)
    with pytest.raises(sc.ScenarioError):
        sc.flying_region(FIRE, 5, 50.0, 200.0, 100.0)


def test_safety_rule():
    assert sc.safety_ok(UavPose(2500.0, 2850.0, 25.0), [FIRE], 50.0)
    # on the safety ring is not allowed, neither is sitting at fire height
    assert not sc.safety_ok(UavPose(2500.0, 2800.0, 25.0), [FIRE], 50.0)
    assert not sc.safety_ok(UavPose(2500.0, 2850.0, 20.0), [FIRE], 50.0)
    assert not sc.safety_ok(UavPose(2500.0, 2850.0, 105.0), [FIRE], 50.0)


def test_apply_move_clamps_at_boundary():
    pose, clamped = sc.apply_move(UavPose(0.0, 0.0, 0.0), 2, GRID, GRID)
    assert clamped and pose == UavPose(0.0, 0.0, 0.0)
    pose, clamped = sc.apply_move(UavPose(0.0, 0.0, 0.0), 5, GRID, GRID)
    assert not clamped and pose == UavPose(0.0, 0.0, 5.0)
    assert sc.apply_move(UavPose(50.0, 50.0, 5.0), 0, GRID, GRID) == (UavPose(50.0, 50.0, 5.0), False)


def test_bs_min_height():
    assert sc.bs_min_height([FIRE], GRID) == 25.0
    assert sc.bs_min_height([FireArea(0, 0, 0, 250, 21.3, 0)], GRID) == 25.0
    assert sc.bs_min_height([], GRID) == 5.0


def test_fire_height_distribution():
    rng = np.random.default_rng(3)
    p = FireParams()
    h = np.array([sc.sample_fire_height(rng, p) for _ in range(20000)])
    assert h.min() >= 1.0 and h.max() <= p.h_max - 5.0
    # clipping barely touches a lognormal(3, 0.5); its median is e^3
    assert np.median(h) == pytest.approx(math.exp(3.0), rel=0.03)


def test_spawn_count_truncated_at_max_areas():
    p = FireParams(max_areas=2)
    fires = sc.spawn_fires(0.0, np.random.default_rng(0), 0, [], GRID, p, count=5)
    assert len(fires) == 2


def test_spawn_rate_is_poisson():
    rng = np.random.default_rng(1)
    p = FireParams(max_areas=1000)
    counts = []
    for slot in range(3000):
        counts.append(len(sc.spawn_fires(0.3, rng, slot, [], GRID, p)))
    assert np.mean(counts) == pytest.approx(0.3, abs=0.04)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_spawned_fires_keep_regions_disjoint_and_inside(seed):
    rng = np.random.default_rng(seed)
    p = FireParams(max_areas=5)
    bs = (1250.0, 1250.0)
    fires = sc.spawn_fires(0.0, rng, 0, [], GRID, p, keep_clear=[bs], count=5)
    regions = [sc.flying_region(f, k, p.safety_distance, p.region_length, p.h_max) for f in fires for k in range(1, 5)]
    for f in fires:
        assert GRID.snap(UavPose(f.center_x, f.center_y, 0.0)) == UavPose(f.center_x, f.center_y, 0.0)
        assert math.hypot(f.center_x - bs[0], f.center_y - bs[1]) > p.radius + p.safety_distance
    for r in regions:
        assert 0 <= r.x_min and r.x_max <= GRID.extent_x and 0 <= r.y_min and r.y_max <= GRID.extent_y
    for i, r in enumerate(regions):
        for q in regions[i + 1:]:
            if r.fire_id == q.fire_id:
                continue
            overlap = r.x_min <= q.x_max and q.x_min <= r.x_max and r.y_min <= q.y_max and q.y_min <= r.y_max
            assert not overlap
    for i, f in enumerate(fires):
        for g in fires[i + 1:]:
            assert math.hypot(f.center_x - g.center_x, f.center_y - g.center_y) > 2 * (p.radius + p.safety_distance)


def test_spawn_on_tiny_grid_rejected():
    with pytest.raises(sc.ScenarioError):
        sc.spawn_fires(0.0, np.random.default_rng(0), 0, [], GridWorld(500.0, 500.0), FireParams(), count=1)
