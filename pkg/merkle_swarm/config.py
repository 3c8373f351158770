"""Configuration models and helpers for simulation runs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from merkle_swarm.errors import ConfigError
from merkle_swarm.io_utils import read_json_document

DEFAULT_ARENA_SIDE_M = 2.5
DEFAULT_CELLS_PER_SIDE = 5
DEFAULT_TARGET_CELL = (2, 2)
DEFAULT_COMM_RANGE_M = 1.0
DEFAULT_VISION_RANGE_M = 0.35
DEFAULT_OBSTACLE_RANGE_M = 0.10
DEFAULT_TIME_CAP_S = 5100.0
DEFAULT_TICK_S = 0.1
DEFAULT_ROBOT_RADIUS_M = 0.035
DEFAULT_ROBOT_SPEED_MPS = 0.12
DEFAULT_TURN_PROBABILITY = 0.05
DEFAULT_ARRIVAL_TOLERANCE_M = 0.015
DEFAULT_MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True, slots=True)
class ArenaConfig:
    side_m: float = DEFAULT_ARENA_SIDE_M
    cells_per_side: int = DEFAULT_CELLS_PER_SIDE
    target_cell: tuple[int, int] = DEFAULT_TARGET_CELL
    comm_range_m: float = DEFAULT_COMM_RANGE_M
    vision_range_m: float = DEFAULT_VISION_RANGE_M
    obstacle_range_m: float = DEFAULT_OBSTACLE_RANGE_M
    time_cap_s: float = DEFAULT_TIME_CAP_S
    tick_s: float = DEFAULT_TICK_S
    robot_radius_m: float = DEFAULT_ROBOT_RADIUS_M
    robot_speed_mps: float = DEFAULT_ROBOT_SPEED_MPS
    turn_probability: float = DEFAULT_TURN_PROBABILITY
    arrival_tolerance_m: float = DEFAULT_ARRIVAL_TOLERANCE_M
    max_placement_attempts: int = DEFAULT_MAX_PLACEMENT_ATTEMPTS
    stop_when_infeasible: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_cell", tuple(int(value) for value in self.target_cell))
        positive = (
            "side_m",
            "comm_range_m",
            "vision_range_m",
            "obstacle_range_m",
            "time_cap_s",
            "tick_s",
            "robot_radius_m",
            "robot_speed_mps",
            "arrival_tolerance_m",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"arena.{name} must be > 0")
        if self.cells_per_side < 1:
            raise ConfigError("arena.cells_per_side must be >= 1")
        if not 0.0 <= self.turn_probability <= 1.0:
            raise ConfigError("arena.turn_probability must be within [0, 1]")
        if self.max_placement_attempts < 1:
            raise ConfigError("arena.max_placement_attempts must be >= 1")
        if len(self.target_cell) != 2 or not all(
            0 <= value < self.cells_per_side for value in self.target_cell
        ):
            raise ConfigError(f"arena.target_cell {self.target_cell} lies outside the grid")
        if 2 * self.robot_radius_m >= self.cell_size_m:
            raise ConfigError("arena.robot_radius_m is too large for the cell size")

    @property
    def cell_size_m(self) -> float:
        return self.side_m / self.cells_per_side

    @property
    def max_ticks(self) -> int:
        return math.ceil(round(self.time_cap_s / self.tick_s, 9))

    @property
    def step_m(self) -> float:
        return self.robot_speed_mps * self.tick_s


@dataclass(frozen=True, slots=True)
class NetworkConfig:
    latency_ticks: int = 0
    drop_prob: float = 0.0
    query_timeout_ticks: int | None = None

    def __post_init__(self) -> None:
        if self.latency_ticks < 0:
            raise ConfigError("network.latency_ticks must be >= 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ConfigError("network.drop_prob must be within [0, 1)")
        if self.query_timeout_ticks is not None and self.query_timeout_ticks < 1:
            raise ConfigError("network.query_timeout_ticks must be >= 1")

    @property
    def effective_query_timeout(self) -> int:
        if self.query_timeout_ticks is not None:
            return self.query_timeout_ticks
        return 2 * self.latency_ticks + 2


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    arena: ArenaConfig = ArenaConfig()
    network: NetworkConfig = NetworkConfig()
    robots: int | None = None
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.robots is not None and self.robots < 1:
            raise ConfigError("robots must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")


def _build(cls: type, payload: Mapping[str, Any], section: str) -> Any:
    if not isinstance(payload, Mapping):
        raise ConfigError(f"{section} must be a JSON object")
    known = {field.name for field in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown {section} keys: {', '.join(unknown)}")
    try:
        return cls(**payload)
    except TypeError as error:
        raise ConfigError(f"{section}: {error}") from error


def arena_from_dict(payload: Mapping[str, Any] | None) -> ArenaConfig:
    if not payload:
        return ArenaConfig()
    return _build(ArenaConfig, payload, "arena")


def network_from_dict(payload: Mapping[str, Any] | None) -> NetworkConfig:
    if not payload:
        return NetworkConfig()
    return _build(NetworkConfig, payload, "network")


def arena_to_dict(arena: ArenaConfig) -> dict[str, Any]:
    payload = asdict(arena)
    payload["target_cell"] = list(arena.target_cell)
    return payload


def scenario_from_dict(payload: Mapping[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(payload) - {"arena", "network", "robots", "seeds"})
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    seeds = payload.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(seed, int) for seed in seeds):
        raise ConfigError("seeds must be a list of integers")
    return ScenarioConfig(
        arena=arena_from_dict(payload.get("arena")),
        network=network_from_dict(payload.get("network")),
        robots=payload.get("robots"),
        seeds=tuple(seeds),
    )


def load_scenario(path: Path | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    return scenario_from_dict(read_json_document(path))


def override_network(
    network: NetworkConfig,
    *,
    latency_ticks: int | None = None,
    drop_prob: float | None = None,
) -> NetworkConfig:
    changes: dict[str, Any] = {}
    if latency_ticks is not None:
        changes["latency_ticks"] = latency_ticks
    if drop_prob is not None:
        changes["drop_prob"] = drop_prob
    return replace(network, **changes) if changes else network
