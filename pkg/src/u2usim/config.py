"""Experiment configuration: JSON schema, defaults and validation.

Every section maps one-to-one onto a dataclass below.  Unknown keys and
invalid values raise :class:`ConfigError` naming the offending field.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .channel import ChannelDomainError, ChannelParams
from .scenario import FireParams, GridWorld, ScenarioError
from .video_qoe import QoeWeights, Resolution, ResolutionLadder, DEFAULT_LADDER

AGENT_KINDS = ("greedy", "tabular", "dqn", "ac")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ScenarioConfig:
    extent_x: float = 5000.0
    extent_y: float = 5000.0
    extent_z: float = 100.0
    step_x: float = 50.0
    step_y: float = 50.0
    step_z: float = 5.0
    arrival_rate: float = 0.05
    max_areas: int = 5
    ues_per_area: int = 4
    initial_fires: int = 1
    fire_radius: float = 250.0
    safety_distance: float = 50.0
    region_length: float = 200.0
    h_max: float = 100.0
    height_mu: float = 3.0
    height_sigma: float = 0.5
    bs_start_x: float = 1250.0
    bs_start_y: float = 1250.0
    same_altitude: bool = False

    def grid(self) -> GridWorld:
        return GridWorld(self.extent_x, self.extent_y, self.extent_z, self.step_x, self.step_y, self.step_z)

    def fire_params(self) -> FireParams:
        return FireParams(self.fire_radius, self.safety_distance, self.region_length, self.h_max,
                          self.height_mu, self.height_sigma, self.max_areas)


@dataclass
class QoeConfig:
    kappa: float = 1.0
    omega: float = 0.5
    frame_deadline: float = 1.0 / 30.0
    bits_per_pixel: float = 12.0
    ladder: list = field(default_factory=lambda: [[r.label, r.pixels_x, r.pixels_y, r.min_rate]
                                                  for r in DEFAULT_LADDER])

    def weights(self) -> QoeWeights:
        return QoeWeights(self.kappa, self.omega, self.frame_deadline, self.bits_per_pixel)

    def resolution_ladder(self) -> ResolutionLadder:
        return ResolutionLadder(tuple(Resolution(str(l), int(x), int(y), float(r)) for l, x, y, r in self.ladder))


@dataclass
class AgentConfig:
    kind: str = "dqn"
    gamma: float = 0.8
    q_lr: float = 0.01
    dqn_lr: float = 0.01
    actor_lr: float = 0.001
    critic_lr: float = 0.01
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_fraction: float = 0.8
    replay_capacity: int = 10000
    batch_size: int = 32
    target_sync: int = 100
    dqn_hidden: list = field(default_factory=lambda: [256, 128, 128])
    actor_hidden: list = field(default_factory=lambda: [128, 128])
    critic_hidden: list = field(default_factory=lambda: [128, 128])
    linear_critic: bool = False
    grad_clip: float = 10.0


@dataclass
class RunConfig:
    episodes: int = 100
    ttis_per_episode: int = 100
    eval_episodes: int = 20
    seed: int = 0
    output_dir: str = "runs/default"
    format: str = "csv"
    check_constraints: bool = False


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    qoe: QoeConfig = field(default_factory=QoeConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> "ExperimentConfig":
        try:
            self.scenario.grid()
        except ScenarioError as e:
            raise ConfigError("scenario", str(e)) from None
        s = self.scenario
        if not 1 <= s.ues_per_area <= 4:
            raise ConfigError("scenario.ues_per_area", "must be between 1 and 4")
        if s.max_areas < 0:
            raise ConfigError("scenario.max_areas", "must be >= 0")
        if not 0 <= s.initial_fires <= s.max_areas:
            raise ConfigError("scenario.initial_fires", "must be between 0 and max_areas")
        if s.arrival_rate < 0:
            raise ConfigError("scenario.arrival_rate", "must be >= 0")
        if s.h_max > s.extent_z:
            raise ConfigError("scenario.h_max", "must not exceed extent_z")
        if s.h_max <= 5.0:
            raise ConfigError("scenario.h_max", "must exceed 5 m")
        for name in ("fire_radius", "safety_distance", "region_length"):
            if getattr(s, name) <= 0:
                raise ConfigError(f"scenario.{name}", "must be positive")
        try:
            self.qoe.weights()
        except ValueError as e:
            raise ConfigError("qoe", str(e)) from None
        try:
            self.qoe.resolution_ladder()
        except (ValueError, TypeError) as e:
            raise ConfigError("qoe.ladder", str(e)) from None
        a = self.agent
        if a.kind not in AGENT_KINDS:
            raise ConfigError("agent.kind", f"must be one of {AGENT_KINDS}")
        if not 0 <= a.gamma < 1:
            raise ConfigError("agent.gamma", "must lie in [0, 1)")
        for name in ("q_lr", "dqn_lr", "actor_lr", "critic_lr"):
            if not 0 < getattr(a, name) <= 1:
                raise ConfigError(f"agent.{name}", "must lie in (0, 1]")
        if a.kind == "tabular" and s.max_areas > 1:
            raise ConfigError("agent.kind", "tabular Q-learning is limited to max_areas <= 1")
        r = self.run
        if r.episodes < 1:
            raise ConfigError("run.episodes", "must be >= 1")
        if r.ttis_per_episode < 1:
            raise ConfigError("run.ttis_per_episode", "must be >= 1")
        if r.eval_episodes < 0:
            raise ConfigError("run.eval_episodes", "must be >= 0")
        if r.seed is None or int(r.seed) < 0:
            raise ConfigError("run.seed", "a non-negative seed is required")
        if r.format not in ("csv", "json"):
            raise ConfigError("run.format", "must be 'csv' or 'json'")
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        kinds = {"scenario": ScenarioConfig, "channel": ChannelParams, "qoe": QoeConfig,
                 "agent": AgentConfig, "run": RunConfig}
        built = {}
        for key, value in data.items():
            if key not in sections:
                raise ConfigError(key, "unknown config section")
            built[key] = _build(kinds[key], value, key)
        return cls(**built).validate()


def _build(kind, values: dict, prefix: str):
    if not isinstance(values, dict):
        raise ConfigError(prefix, "expected an object")
    known = {f.name: f for f in dataclasses.fields(kind)}
    defaults = kind()
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
        default = getattr(defaults, key)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}", "expected a boolean")
        elif isinstance(default, (int, float)) and not isinstance(value, (int, float)):
            raise ConfigError(f"{prefix}.{key}", "expected a number")
        elif isinstance(default, int) and not isinstance(default, bool) and isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{prefix}.{key}", "expected an integer")
            value = int(value)
        kwargs[key] = value
    try:
        return kind(**kwargs)
    except (ChannelDomainError, ValueError) as e:
        raise ConfigError(prefix, str(e)) from None


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    with open(path) as f:
        return ExperimentConfig.from_dict(json.load(f))


def toy_config(**run_overrides) -> ExperimentConfig:
    """Desk-scale scenario: two fire areas of four UEs in a 2.5 km square."""
    cfg = ExperimentConfig(
        scenario=ScenarioConfig(extent_x=2500.0, extent_y=2500.0, max_areas=2, initial_fires=1,
                                arrival_rate=0.05),
        run=RunConfig(episodes=60, ttis_per_episode=50, eval_episodes=20),
    )
    for k, v in run_overrides.items():
        setattr(cfg.run, k, v)
    return cfg.validate()
