"""Application configuration loading."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, List, Optional, get_args, get_type_hints

from .errors import ConfigError

_LOGGER = logging.getLogger(__name__)
_REPO_DIR = Path(__file__).parent.parent
DEFAULT_CONFIG_PATH = _REPO_DIR / "config.json"
CONFIG_PATH_ENV = "SLICE_PLACEMENT_CONFIG"

ENGINES = ("heu", "drl", "hadrl", "oracle")


@dataclass
class TopologyConfig:
    node_count: int = 12
    tier_fanouts: List[int] = field(default_factory=lambda: [3, 3])
    tier_cpu: List[int] = field(default_factory=lambda: [80, 60, 40])
    tier_ram: List[int] = field(default_factory=lambda: [80, 60, 40])
    tier_bw: List[int] = field(default_factory=lambda: [100, 60, 40])
    capacity_jitter: float = 0.0
    seed: int = 1

    def validate(self) -> None:
        if self.node_count < 2:
            raise ConfigError(f"topology.node_count must be >= 2, got {self.node_count}")
        if not self.tier_fanouts or any(f < 1 for f in self.tier_fanouts):
            raise ConfigError("topology.tier_fanouts must be non-empty and >= 1")
        tiers = len(self.tier_cpu)
        if tiers == 0 or len(self.tier_ram) != tiers or len(self.tier_bw) != tiers:
            raise ConfigError("topology.tier_cpu/tier_ram/tier_bw must share a non-zero length")
        for name in ("tier_cpu", "tier_ram", "tier_bw"):
            if any(value <= 0 for value in getattr(self, name)):
                raise ConfigError(f"topology.{name} capacities must be > 0")
        if not 0.0 <= self.capacity_jitter < 1.0:
            raise ConfigError("topology.capacity_jitter must be in [0, 1)")


@dataclass
class WorkloadConfig:
    vnf_count_range: List[int] = field(default_factory=lambda: [5, 20])
    cpu_range: List[int] = field(default_factory=lambda: [2, 6])
    ram_range: List[int] = field(default_factory=lambda: [2, 6])
    bw_range: List[int] = field(default_factory=lambda: [1, 4])
    target_load: float = 0.5
    mean_lifetime: float = 100.0
    horizon: int = 1000
    seed: int = 1

    def validate(self) -> None:
        for name in ("vnf_count_range", "cpu_range", "ram_range", "bw_range"):
            bounds = getattr(self, name)
            if len(bounds) != 2 or bounds[0] > bounds[1] or bounds[0] < 0:
                raise ConfigError(f"workload.{name} must be a non-empty [low, high] interval")
        if self.vnf_count_range[0] < 1:
            raise ConfigError("workload.vnf_count_range must start at >= 1")
        if self.cpu_range[0] < 1 and self.ram_range[0] < 1:
            raise ConfigError("workload.cpu_range or workload.ram_range must start at >= 1")
        if not 0.0 < self.target_load <= 1.5:
            raise ConfigError(f"workload.target_load must be in (0, 1.5], got {self.target_load}")
        if self.mean_lifetime <= 0:
            raise ConfigError("workload.mean_lifetime must be > 0")
        if self.horizon < 1:
            raise ConfigError("workload.horizon must be >= 1")


@dataclass
class ObjectiveConfig:
    c1: Optional[float] = None  # None = |V| * 100
    c2: float = 1.0
    c3: float = 1.0

    def validate(self) -> None:
        values = [self.c2, self.c3] + ([] if self.c1 is None else [self.c1])
        if any(value < 0 for value in values):
            raise ConfigError("objective weights must be non-negative")
        if self.c1 is not None and not any(values):
            raise ConfigError("objective weights must not all be zero")


@dataclass
class HeuristicConfig:
    c2_norm: float = 0.1

    def validate(self) -> None:
        if self.c2_norm < 0:
            raise ConfigError("heuristic.c2_norm must be >= 0")


@dataclass
class RewardConfig:
    r_success: float = 10.0
    r_reject: float = -1.0
    c2_r: float = 0.1
    c3_r: float = 1.0

    def validate(self) -> None:
        if self.r_success <= 0:
            raise ConfigError("reward.r_success must be > 0")
        if self.c2_r < 0 or self.c3_r < 0:
            raise ConfigError("reward.c2_r and reward.c3_r must be >= 0")


@dataclass
class AgentConfig:
    actor_lr: float = 1e-4
    critic_lr: float = 2.5e-3
    beta: float = 2.0
    gamma: float = 0.99
    entropy_w: float = 0.01
    eta: float = 0.5
    hidden: int = 128
    workers: int = 4
    seed: int = 1

    def validate(self) -> None:
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("agent learning rates must be > 0")
        if self.beta < 0:
            raise ConfigError("agent.beta must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("agent.gamma must be in (0, 1]")
        if self.eta <= 0:
            raise ConfigError("agent.eta must be > 0")
        if self.entropy_w < 0:
            raise ConfigError("agent.entropy_w must be >= 0")
        if self.hidden < 1 or self.workers < 1:
            raise ConfigError("agent.hidden and agent.workers must be >= 1")


@dataclass
class RunOptions:
    engine: str = "hadrl"
    phases: int = 50
    arrivals_per_phase: int = 100
    eval_seeds: List[int] = field(default_factory=lambda: [101, 102, 103])
    eval_arrivals: int = 100
    output_dir: str = "runs"
    record_wall_clock: bool = False
    export_arrivals: bool = False
    arrivals_file: Optional[str] = None
    checkpoint: Optional[str] = None
    log_level: str = "INFO"

    def validate(self) -> None:
        if self.engine not in ENGINES:
            raise ConfigError(f"run.engine must be one of {ENGINES}, got {self.engine!r}")
        if self.phases < 1:
            raise ConfigError("run.phases must be >= 1")
        if self.arrivals_per_phase < 1:
            raise ConfigError("run.arrivals_per_phase must be >= 1")
        if self.eval_arrivals < 0:
            raise ConfigError("run.eval_arrivals must be >= 0")


@dataclass
class RunConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def validate(self) -> None:
        for section in fields(self):
            getattr(self, section.name).validate()


def _coerce_bool(value: Any) -> Optional[bool]:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in {"1", "true", "yes", "on"}:
            return True
        if lowered in {"0", "false", "no", "off"}:
            return False
    return None


def _optional_inner(declared: Any) -> Optional[type]:
    args = [arg for arg in get_args(declared) if arg is not type(None)]
    return args[0] if len(args) == 1 and isinstance(args[0], type) else None


def _coerce(section: str, key: str, current: Any, value: Any, declared: Any = None) -> Any:
    if value is None:
        return value
    if current is None:
        inner = _optional_inner(declared)
        if inner is None:
            return value
        # coerce as if the field held a value of its declared type
        return _coerce(section, key, inner(), value)
    try:
        if isinstance(current, bool):
            bool_value = _coerce_bool(value)
            if bool_value is None:
                raise ValueError(value)
            return bool_value
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            return [type(current[0])(item) for item in value] if current else list(value)
        if isinstance(current, str):
            return str(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Invalid value for {section}.{key}: {value!r}") from err
    return value


def _apply_mapping(section: str, target: Any, data: dict[str, Any]) -> None:
    known = {item.name for item in fields(target)}
    hints = get_type_hints(type(target))
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"Unknown config key: {section}.{key}")
        setattr(target, key, _coerce(section, key, getattr(target, key), value, hints[key]))


def config_from_dict(loaded: dict[str, Any]) -> RunConfig:
    config = RunConfig()
    sections = {item.name for item in fields(config)}
    for name, data in loaded.items():
        if name not in sections:
            raise ConfigError(f"Unknown config section: {name}")
        if not isinstance(data, dict):
            raise ConfigError(f"Config section {name} must be an object")
        _apply_mapping(name, getattr(config, name), data)
    config.validate()
    return config


def _write_default_config(path: Path, config: RunConfig) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as config_file:
        json.dump(asdict(config), config_file, ensure_ascii=False, indent=4)


def get_config_path() -> Path:
    env_path = os.environ.get(CONFIG_PATH_ENV, "").strip()
    if env_path:
        return Path(env_path).expanduser()
    return DEFAULT_CONFIG_PATH


def load_config(path: Optional[Path] = None) -> RunConfig:
    config_path = get_config_path() if path is None else path

    if not config_path.exists():
        if path is not None:
            raise ConfigError(f"Config file not found: {config_path}")
        config = RunConfig()
        _write_default_config(config_path, config)
        _LOGGER.info("Created default config: %s", config_path)
        return config

    with open(config_path, "r", encoding="utf-8") as config_file:
        try:
            loaded = json.load(config_file)
        except json.JSONDecodeError as err:
            raise ConfigError(f"Invalid JSON in {config_path}: {err}") from err
    if not isinstance(loaded, dict):
        raise ConfigError(f"Invalid config format in {config_path}: expected object")

    return config_from_dict(loaded)
