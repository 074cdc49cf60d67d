"""Configuration dataclasses and the YAML/JSON loader.

Every tunable lives here so a single config file can override any default.
Durations handed to the signal controller are seconds; they are quantised
onto the simulation step grid by :mod:`junctionrl.signals`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration."""


ARMS = ("N", "S", "E", "W")
# Incoming lanes: two per north/south arm, one per east/west arm.
LANES = ("N0", "N1", "S0", "S1", "E0", "W0")
LANE_ARM = {"N0": "N", "N1": "N", "S0": "S", "S1": "S", "E0": "E", "W0": "W"}
CROSSINGS = ("PN", "PS", "PE", "PW")


@dataclass
class SimConfig:
    delta_t: float = 0.6
    lane_length: float = 150.0
    junction_length: float = 15.0
    s_max: float = 13.89
    spacing: float = 7.5
    accel: float = 2.6
    decel: float = 4.5
    startup_lost_time: float = 0.6
    wait_speed_threshold: float = 0.1
    crossing_duration: float = 8.0
    rng_seed: int = 0
    arrival_process: str = "poisson"
    episode_steps: int = 3000

    def validate(self):
        for name in ("delta_t", "lane_length", "junction_length", "s_max", "spacing",
                     "accel", "decel", "wait_speed_threshold", "crossing_duration"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"sim.{name} must be strictly positive")
        if self.startup_lost_time < 0:
            raise ConfigError("sim.startup_lost_time must be non-negative")
        if self.arrival_process not in ("poisson", "uniform-headway"):
            raise ConfigError(f"unknown arrival_process {self.arrival_process!r}")
        if self.episode_steps <= 0:
            raise ConfigError("sim.episode_steps must be positive")


def _default_turning():
    return {
        "N0": {"left": 0.3, "ahead": 0.7},
        "N1": {"ahead": 0.4, "right": 0.6},
        "S0": {"left": 0.3, "ahead": 0.7},
        "S1": {"ahead": 0.6, "right": 0.4},
        "E0": {"left": 0.3, "ahead": 0.5, "right": 0.2},
        "W0": {"left": 0.3, "ahead": 0.5, "right": 0.2},
    }


@dataclass
class JunctionConfig:
    # Share of the total vehicle demand arriving on each arm.
    arm_weights: dict = field(default_factory=lambda: {"N": 1 / 3, "S": 1 / 3, "E": 1 / 6, "W": 1 / 6})
    turning_ratios: dict = field(default_factory=_default_turning)

    def validate(self):
        if set(self.arm_weights) != set(ARMS):
            raise ConfigError("junction.arm_weights needs exactly the arms N, S, E, W")
        if any(w < 0 for w in self.arm_weights.values()):
            raise ConfigError("junction.arm_weights must be non-negative")
        if sum(self.arm_weights.values()) <= 0:
            raise ConfigError("junction.arm_weights must not all be zero")
        if set(self.turning_ratios) != set(LANES):
            raise ConfigError("junction.turning_ratios needs one entry per lane")
        for lane, ratios in self.turning_ratios.items():
            if any(p < 0 for p in ratios.values()) or not math.isclose(sum(ratios.values()), 1.0, abs_tol=1e-9):
                raise ConfigError(f"turning ratios of lane {lane} must be non-negative and sum to 1")


@dataclass
class DemandSchedule:
    vehicle_rate: float = 1714.0
    ped_rate: float = 360.0
    d_hat_reference: float = 1714.0
    # "proportional" scales ped_rate by vehicle_rate / d_hat_reference.
    ped_scaling: str = "proportional"

    def validate(self):
        if self.vehicle_rate < 0 or self.ped_rate < 0:
            raise ConfigError("demand rates must be non-negative")
        if not self.d_hat_reference > 0:
            raise ConfigError("demand.d_hat_reference must be strictly positive")
        if self.ped_scaling not in ("proportional", "constant"):
            raise ConfigError(f"unknown ped_scaling {self.ped_scaling!r}")

    def effective_ped_rate(self):
        if self.ped_scaling == "proportional":
            return self.ped_rate * self.vehicle_rate / self.d_hat_reference
        return self.ped_rate


@dataclass
class ControllerConfig:
    min_green: float = 6.0
    intergreen: float = 5.0
    stage1_fixed_duration: float | None = None
    max_green: float | None = None
    initial_stage: int = 2
    encode_target_stage: bool = True

    def validate(self):
        if not (self.min_green > 0 and self.intergreen > 0):
            raise ConfigError("controller durations must be positive")
        if self.stage1_fixed_duration is not None and not self.stage1_fixed_duration > 0:
            raise ConfigError("controller.stage1_fixed_duration must be positive")
        if self.max_green is not None and self.max_green < self.min_green:
            raise ConfigError("controller.max_green must be >= min_green")
        if self.initial_stage not in (2, 3, 4):
            raise ConfigError("controller.initial_stage must be a selectable stage")


@dataclass
class SensorConfig:
    coverage_length: float = 50.0

    def validate(self):
        if not self.coverage_length > 0:
            raise ConfigError("sensors.coverage_length must be positive")


@dataclass
class RewardParams:
    tau_max: float = 120.0
    p_max: float = 10.0
    literal_mode: bool = False

    def validate(self):
        if not (self.tau_max > 0 and self.p_max > 0):
            raise ConfigError("rewards.tau_max and rewards.p_max must be positive")


@dataclass
class AgentConfig:
    gamma: float = 0.8
    learning_rate: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    replay_capacity: int = 100_000
    target_sync_period: int = 10
    minibatch_size: int = 512
    updates_per_episode: int = 1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.6
    hidden_sizes: tuple = (500, 1000)

    def validate(self):
        if not 0 <= self.gamma <= 1:
            raise ConfigError("agent.gamma must lie in [0, 1]")
        if self.replay_capacity < self.minibatch_size:
            raise ConfigError("agent.replay_capacity must be >= minibatch_size")
        if not (0 <= self.epsilon_end <= self.epsilon_start <= 1):
            raise ConfigError("agent epsilon schedule must satisfy 0 <= end <= start <= 1")
        if not 0 < self.epsilon_decay_fraction <= 1:
            raise ConfigError("agent.epsilon_decay_fraction must lie in (0, 1]")
        if self.target_sync_period < 1 or self.updates_per_episode < 0 or self.minibatch_size < 1:
            raise ConfigError("agent sync period, minibatch size and update count must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("agent.learning_rate must be positive")


@dataclass
class TrainingConfig:
    episodes: int = 1500
    replicas: int = 10
    # False trains at the constant demand.vehicle_rate instead of the ramp
    curriculum: bool = True
    curriculum_min_rate: float = 1200.0
    curriculum_max_rate: float = 2571.0
    selection_scenario: str = "peak"
    selection_replications: int = 10

    def validate(self):
        if self.episodes < 1 or self.replicas < 1 or self.selection_replications < 1:
            raise ConfigError("training episodes, replicas and selection replications must be positive")


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    junction: JunctionConfig = field(default_factory=JunctionConfig)
    demand: DemandSchedule = field(default_factory=DemandSchedule)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    rewards: RewardParams = field(default_factory=RewardParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def validate(self):
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        if self.sensors.coverage_length > self.sim.lane_length:
            raise ConfigError("sensor coverage must not exceed the lane length")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# Desk-scale preset: short training that still learns on one CPU core.
PROFILES = {
    "paper": {},
    "desk": {
        "training": {"episodes": 150, "replicas": 2, "selection_replications": 3},
        "agent": {
            "learning_rate": 1e-4,
            "replay_capacity": 50_000,
            "target_sync_period": 5,
            "minibatch_size": 64,
            "updates_per_episode": 60,
        },
    },
}


def _merge(obj, overrides, path):
    if not isinstance(overrides, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {path}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge(current, value, f"{path}{key}.")
        elif isinstance(current, tuple):
            setattr(obj, key, tuple(value))
        else:
            setattr(obj, key, value)


def make_config(profile="paper", overrides=None):
    """Build a validated :class:`Config` from a profile name plus a nested override dict."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    cfg = Config()
    _merge(cfg, PROFILES[profile], "")
    if overrides:
        _merge(cfg, overrides, "")
    return cfg.validate()


def load_config(path=None, profile="paper"):
    overrides = None
    if path is not None:
        text = Path(path).read_text()
        overrides = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return make_config(profile, overrides or {})


def config_from_dict(data: dict[str, Any]) -> Config:
    """Rebuild a config from :meth:`Config.to_dict` output (no profile applied)."""
    cfg = Config()
    _merge(cfg, data, "")
    return cfg.validate()
