"""Run configuration: every tunable of the simulator, expert, training and
evaluation lives here so a run is reproducible from (config, seed) alone.

Values can be overridden from a YAML file whose nesting mirrors the dataclass
tree, e.g. ``expert: {cruise_speed: 0.4}``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Bad configuration file or override value."""


@dataclass
class SimParams:
    dt: float = 0.05                 # physics step, 20 Hz
    control_hz: float = 10.0         # policy rate during evaluation
    sample_hz: float = 4.0           # demo record / pedestrian-history rate
    robot_radius: float = 0.35
    ped_radius: float = 0.25
    max_v: float = 0.6               # actuation limits
    max_w: float = 1.2
    goal_tolerance: float = 0.5      # reached-goal distance
    timeout_s: float = 90.0
    failure_overlap: float = 0.05    # static-geometry penetration that ends an episode


@dataclass
class LidarParams:
    n_beams: int = 360
    fov_deg: float = 240.0           # forward-facing, centered on heading
    r_max: float = 10.0


@dataclass
class SocialForceParams:
    tau: float = 0.5
    A: float = 2.0
    B: float = 0.3
    desired_speed_default: float = 1.2
    max_speed: float = 1.8
    subgoal_radius: float = 0.4
    obstacle_cutoff: float = 3.0     # repulsion only from nearest points within this range

    def validate(self):
        for name in ("tau", "A", "B", "desired_speed_default", "max_speed", "subgoal_radius"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"sf_params.{name} must be > 0")
        if self.max_speed < self.desired_speed_default:
            raise ConfigError("sf_params.max_speed must be >= desired_speed_default")


@dataclass
class ExpertParams:
    lookahead: float = 1.2
    cruise_speed: float = 0.5
    obstacle_gain: float = 1.0       # m of clearance over which speed ramps back up
    pedestrian_gain: float = 1.0     # lateral steer-away weight
    slow_radius: float = 1.5         # pedestrians inside this slow the robot down
    goal_brake_radius: float = 1.0
    heading_gain: float = 2.0        # omega = gain * heading error
    stop_clearance: float = 0.45     # scan range at which forward speed hits zero
    proxemic_band: float = 1.2       # near-stop when a pedestrian ahead is inside this

    def validate(self):
        if self.cruise_speed > 0.6:
            raise ConfigError("expert.cruise_speed must be <= 0.6")
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"expert.{f.name} must be > 0")


@dataclass
class PlannerParams:
    inflation: float = 0.35          # = robot radius
    n_waypoints: int = 10
    spacing: float = 0.5


@dataclass
class PolicyParams:
    history_len: int = 8             # k past samples per pedestrian row
    feature_dim: int = 512
    attention_hidden: int = 128
    plan_horizon: int = 5            # poses at t+1..t+5 s
    plan_hz: float = 1.0


@dataclass
class TrainParams:
    episodes: int = 300              # canonical desk-scale dataset
    batch_size: int = 300
    epochs: int = 60                 # selection window; must stay <= 100
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.1        # split by episode, not by sample
    init_scale: str = "glorot"


@dataclass
class ScenarioCounts:
    geometric: int = 3
    static_people: int = 2
    moving_pedestrians: int = 3


@dataclass
class EvalParams:
    # held-out sets: familiar, harder same-map, new map
    n_e4: int = 50
    n_e6: int = 25
    n_lab: int = 25
    seeds: tuple = (101, 102, 103)
    e4: ScenarioCounts = field(default_factory=lambda: ScenarioCounts(3, 2, 3))
    e6: ScenarioCounts = field(default_factory=lambda: ScenarioCounts(8, 3, 3))
    lab: ScenarioCounts = field(default_factory=lambda: ScenarioCounts(8, 3, 3))


@dataclass
class GenParams:
    min_start_goal_dist: float = 6.0
    subgoals_min: int = 2
    subgoals_max: int = 4
    max_rejections: int = 10_000
    goal_clearance: float = 2.0      # pedestrians and their subgoals keep away from the goal
    start_clearance: float = 1.0
    obstacle_clearance: float = 1.0  # obstacle centers keep away from start/goal
    half_extent_min: float = 0.25
    half_extent_max: float = 0.375


@dataclass
class RunConfig:
    sim: SimParams = field(default_factory=SimParams)
    lidar: LidarParams = field(default_factory=LidarParams)
    sf_params: SocialForceParams = field(default_factory=SocialForceParams)
    expert: ExpertParams = field(default_factory=ExpertParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    policy: PolicyParams = field(default_factory=PolicyParams)
    train: TrainParams = field(default_factory=TrainParams)
    eval: EvalParams = field(default_factory=EvalParams)
    gen: GenParams = field(default_factory=GenParams)

    def substeps_per_control(self) -> int:
        return round(1.0 / (self.sim.control_hz * self.sim.dt))

    def substeps_per_sample(self) -> int:
        return round(1.0 / (self.sim.sample_hz * self.sim.dt))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _apply_overrides(obj, overrides: dict, path: str):
    for key, value in overrides.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config key '{path}{key}'")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}{key}' expects a mapping")
            _apply_overrides(current, value, f"{path}{key}.")
        else:
            if isinstance(current, bool) != isinstance(value, bool) and isinstance(current, bool):
                raise ConfigError(f"'{path}{key}' expects a boolean")
            if isinstance(current, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"'{path}{key}' expects a number, got {value!r}")
            if isinstance(current, tuple):
                value = tuple(value)
            setattr(obj, key, type(current)(value) if not isinstance(current, tuple) else value)


def load_config(path: str | Path | None = None) -> RunConfig:
    """Default config, optionally overridden from a YAML file."""
    cfg = RunConfig()
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config file {path}: {e}")
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be a mapping: {path}")
        _apply_overrides(cfg, raw, "")
    cfg.sf_params.validate()
    cfg.expert.validate()
    return cfg
