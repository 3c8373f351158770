"""Experiment grids: k seeded runs for every (robot count, mission) cell."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Mapping, Sequence

from merkle_swarm.config import (
    ArenaConfig,
    NetworkConfig,
    arena_from_dict,
    network_from_dict,
)
from merkle_swarm.errors import ConfigError, MerkleSwarmError
from merkle_swarm.io_utils import read_json_document
from merkle_swarm.metrics import MetricsReport, summarize_runs
from merkle_swarm.mission import (
    MissionKind,
    MissionSpec,
    encode_mission,
    foraging_mission,
    load_mission,
    maze_mission,
)
from merkle_swarm.sim import RunRecord, run

logger = logging.getLogger(__name__)

_PLAN_KEYS = {
    "mission_kind",
    "robot_counts",
    "op_counts",
    "mission_files",
    "seeds_per_cell",
    "base_seed",
    "arena",
    "network",
    "workers",
    "output_root",
    "events",
}


@dataclass(frozen=True, slots=True)
class SweepPlan:
    mission_kind: MissionKind
    robot_counts: tuple[int, ...]
    op_counts: tuple[int, ...] = ()
    mission_files: tuple[Path, ...] = ()
    seeds_per_cell: int = 100
    base_seed: int = 0
    arena: ArenaConfig = ArenaConfig()
    network: NetworkConfig = NetworkConfig()
    workers: int = 1
    output_root: Path = Path("output/sweep")
    events: bool = False

    def __post_init__(self) -> None:
        if self.seeds_per_cell < 1:
            raise ConfigError("seeds_per_cell must be >= 1")
        if not self.robot_counts or any(count < 1 for count in self.robot_counts):
            raise ConfigError("robot_counts must be a non-empty list of positive integers")
        if bool(self.op_counts) == bool(self.mission_files):
            raise ConfigError("a sweep plan needs exactly one of op_counts or mission_files")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.base_seed + offset for offset in range(self.seeds_per_cell))


@dataclass(frozen=True, slots=True)
class RunTask:
    mission: MissionSpec
    robot_count: int
    seed: int
    arena: ArenaConfig
    network: NetworkConfig
    keep_events: bool


@dataclass(slots=True)
class SweepResult:
    records: list[RunRecord] = field(default_factory=list)
    reports: list[MetricsReport] = field(default_factory=list)


def _int_tuple(payload: Mapping[str, Any], key: str) -> tuple[int, ...]:
    values = payload.get(key, [])
    if not isinstance(values, list) or not all(isinstance(value, int) for value in values):
        raise ConfigError(f"{key} must be a list of integers")
    return tuple(values)


def plan_from_dict(payload: Mapping[str, Any], *, base_dir: Path = Path(".")) -> SweepPlan:
    unknown = sorted(set(payload) - _PLAN_KEYS)
    if unknown:
        raise ConfigError(f"unknown sweep plan keys: {', '.join(unknown)}")
    try:
        kind = MissionKind(payload.get("mission_kind"))
    except ValueError as error:
        raise ConfigError(f"unknown mission_kind {payload.get('mission_kind')!r}") from error

    mission_files = payload.get("mission_files", [])
    if not isinstance(mission_files, list):
        raise ConfigError("mission_files must be a list of paths")

    return SweepPlan(
        mission_kind=kind,
        robot_counts=_int_tuple(payload, "robot_counts"),
        op_counts=_int_tuple(payload, "op_counts"),
        mission_files=tuple(base_dir / str(entry) for entry in mission_files),
        seeds_per_cell=int(payload.get("seeds_per_cell", 100)),
        base_seed=int(payload.get("base_seed", 0)),
        arena=arena_from_dict(payload.get("arena")),
        network=network_from_dict(payload.get("network")),
        workers=int(payload.get("workers", 1)),
        output_root=Path(payload.get("output_root", "output/sweep")),
        events=bool(payload.get("events", False)),
    )


def load_plan(path: Path) -> SweepPlan:
    return plan_from_dict(read_json_document(path), base_dir=path.parent)


def plan_missions(plan: SweepPlan) -> list[MissionSpec]:
    if plan.mission_files:
        missions = [load_mission(path) for path in plan.mission_files]
        for path, mission in zip(plan.mission_files, missions):
            if mission.kind is not plan.mission_kind:
                raise ConfigError(f"{path}: {mission.kind.value} mission in a {plan.mission_kind.value} sweep")
        return missions
    if plan.mission_kind is MissionKind.FORAGING:
        return [foraging_mission(n, arena=plan.arena) for n in plan.op_counts]
    return [maze_mission(limit=n, arena=plan.arena) for n in plan.op_counts]


def plan_tasks(plan: SweepPlan) -> list[RunTask]:
    """Every run of the plan, ordered mission-major, then robot count, then seed.

    Mission files keep their own arena; generated missions use the plan arena.
    """
    return [
        RunTask(
            mission=mission,
            robot_count=robot_count,
            seed=seed,
            arena=mission.arena,
            network=plan.network,
            keep_events=plan.events,
        )
        for mission, robot_count in product(plan_missions(plan), plan.robot_counts)
        for seed in plan.seeds
    ]


def execute_task(task: RunTask) -> RunRecord:
    try:
        tree, _ = encode_mission(task.mission)
        return run(
            task.mission,
            tree,
            task.robot_count,
            task.seed,
            arena=task.arena,
            network=task.network,
            keep_events=task.keep_events,
        )
    except MerkleSwarmError as error:
        logger.warning(
            "run failed: %s robots=%d seed=%d: %s",
            task.mission.label,
            task.robot_count,
            task.seed,
            error,
        )
        return RunRecord.failed(
            task.mission,
            robot_count=task.robot_count,
            seed=task.seed,
            time_cap_s=task.arena.time_cap_s,
            network=task.network,
            error=str(error),
        )


def _execute_all(tasks: Sequence[RunTask], workers: int) -> list[RunRecord]:
    if workers <= 1 or len(tasks) <= 1:
        return [execute_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(execute_task, tasks, chunksize=max(1, len(tasks) // (workers * 4))))


def run_sweep(plan: SweepPlan, *, workers: int | None = None) -> SweepResult:
    tasks = plan_tasks(plan)
    logger.info("sweep: %d runs over %d workers", len(tasks), workers or plan.workers)
    records = _execute_all(tasks, workers or plan.workers)

    result = SweepResult(records=records)
    k = plan.seeds_per_cell
    for start in range(0, len(records), k):
        result.reports.append(summarize_runs(records[start : start + k], time_cap_s=plan.arena.time_cap_s))
    return result
