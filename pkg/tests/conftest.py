import math

import numpy as np
import pytest

from u2usim import scenario as sc
from u2usim.config import ExperimentConfig, RunConfig, ScenarioConfig, toy_config
from u2usim.env import U2UEnv

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def small_config(max_areas=1, ues_per_area=1, **scenario) -> ExperimentConfig:
    s = ScenarioConfig(extent_x=2500.0, extent_y=2500.0, max_areas=max_areas, ues_per_area=ues_per_area,
                       initial_fires=min(1, max_areas), arrival_rate=0.0, **scenario)
    return ExperimentConfig(scenario=s, run=RunConfig(episodes=2, ttis_per_episode=10, eval_episodes=1,
                                                      check_constraints=True)).validate()


def randomize_world(env: U2UEnv, rng: np.random.Generator) -> None:
    """Scatter the BS and UEs over legal lattice nodes and draw random settings."""
    w = env.world
    g = env.grid
    occupied = set()
    for a, regions in enumerate(w.regions):
        for k, reg in enumerate(regions):
            while True:
                pose = sc.UavPose(
                    float(rng.integers(math.ceil(reg.x_min / g.step_x), math.floor(reg.x_max / g.step_x) + 1) * g.step_x),
                    float(rng.integers(math.ceil(reg.y_min / g.step_y), math.floor(reg.y_max / g.step_y) + 1) * g.step_y),
                    float(rng.integers(math.ceil(reg.h_min / g.step_z), math.floor(reg.h_max / g.step_z) + 1) * g.step_z))
                if pose not in occupied:
                    break
            occupied.add(pose)
            w.ues[a][k] = pose
            w.powers[a][k] = int(rng.integers(len(env.power_levels)))
            w.q_prev[a][k] = None if rng.random() < 0.2 else float(rng.normal(0.0, 2.0))
        w.resolutions[a] = int(rng.integers(len(env.ladder)))
    h_lo = sc.bs_min_height(w.fires, g)
    bounds = sc.BsBounds(g, tuple(w.fires), env.scfg.safety_distance, env.scfg.h_max)
    while True:
        bs = sc.UavPose(float(rng.integers(0, round(g.extent_x / g.step_x) + 1) * g.step_x),
                        float(rng.integers(0, round(g.extent_y / g.step_y) + 1) * g.step_y),
                        float(rng.integers(round(h_lo / g.step_z), round(env.scfg.h_max / g.step_z) + 1) * g.step_z))
        if bounds.contains(bs) and bs not in occupied:
            break
    w.bs = bs
    w.prev_qoe = float(rng.normal())


@pytest.fixture
def toy():
    return toy_config(check_constraints=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
