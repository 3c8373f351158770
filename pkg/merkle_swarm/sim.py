"""Deterministic discrete-time arena for the foraging and maze-formation missions.

One tick runs four phases in a fixed order: every robot senses, the network
delivers beacons, queries and proofs, every robot advances its FSM, then every
robot moves. All randomness comes from one seeded ``numpy`` generator, so an
identical mission, tree, robot count, seed and configuration reproduce the same
event log.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from merkle_swarm.config import ArenaConfig, NetworkConfig
from merkle_swarm.errors import ConfigError, PlacementError
from merkle_swarm.merkle import MerkleTree
from merkle_swarm.mission import (
    MISSION_ACTIONS,
    MissionKind,
    MissionSpec,
    ProofOutcome,
    RawEvidence,
    RobotMissionState,
    init_robot_view,
    mark_completed,
    try_match,
)
from merkle_swarm.network import RangeNetwork, exchange_round
from merkle_swarm.protocol import ProofMsg, RobotNode

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class FsmState(str, Enum):
    WANDER = "wander"
    CHECK = "check"
    HANDLE = "handle"
    STOP = "stop"
    DONE = "done"


@dataclass(slots=True)
class Goal:
    point: np.ndarray
    tolerance: float


@dataclass(slots=True)
class CarriedTask:
    op_index: int
    sensor: str
    action: str
    cell: tuple[int, int]
    goals: list[Goal]
    blocked: bool = False


@dataclass(slots=True, eq=False)
class Robot:
    robot_id: int
    position: np.ndarray  # view into World.positions
    heading: float
    node: RobotNode
    fsm_state: FsmState = FsmState.WANDER
    carried: CarriedTask | None = None
    halted: bool = False
    last_checked: tuple[str, int] | None = None
    completed_ops: int = 0

    @property
    def state(self) -> RobotMissionState:
        return self.node.state


@dataclass(frozen=True, slots=True)
class Event:
    tick: int
    time_s: float
    kind: str
    robot_id: int
    op_index: int | None = None
    peer_id: int | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "tick": self.tick,
            "time_s": self.time_s,
            "kind": self.kind,
            "robot_id": self.robot_id,
            "op_index": self.op_index,
            "peer_id": self.peer_id,
        }


@dataclass(frozen=True, slots=True)
class RunRecord:
    mission_kind: str
    label: str
    seed: int
    robot_count: int
    op_count: int
    finished: bool
    finishing_time_s: float
    completions_per_robot: tuple[int, ...]
    final_indices: tuple[int, ...]
    proof_count: int
    rejected_proofs: int
    stale_proofs: int
    ac_bytes: int
    beacons: int
    queries: int
    message_bytes: int
    ticks: int
    latency_ticks: int = 0
    drop_prob: float = 0.0
    events: tuple[Event, ...] = ()
    error: str | None = None

    @property
    def all_synchronized(self) -> bool:
        return bool(self.final_indices) and all(index == self.op_count for index in self.final_indices)

    @classmethod
    def failed(
        cls,
        mission: MissionSpec,
        *,
        robot_count: int,
        seed: int,
        time_cap_s: float,
        network: NetworkConfig,
        error: str,
    ) -> RunRecord:
        return cls(
            mission_kind=mission.kind.value,
            label=mission.label,
            seed=seed,
            robot_count=robot_count,
            op_count=mission.op_count,
            finished=False,
            finishing_time_s=time_cap_s,
            completions_per_robot=(),
            final_indices=(),
            proof_count=0,
            rejected_proofs=0,
            stale_proofs=0,
            ac_bytes=0,
            beacons=0,
            queries=0,
            message_bytes=0,
            ticks=0,
            latency_ticks=network.latency_ticks,
            drop_prob=network.drop_prob,
            error=error,
        )


@dataclass(slots=True, eq=False)
class World:
    mission: MissionSpec
    tree: MerkleTree
    arena: ArenaConfig
    network_config: NetworkConfig
    seed: int
    rng: np.random.Generator
    positions: np.ndarray
    robots: list[Robot]
    network: RangeNetwork
    task_markers: dict[tuple[int, int], str]
    marker_centers: np.ndarray
    marker_sensors: tuple[str, ...]
    tick: int = 0
    ledger: dict[int, int] = field(default_factory=dict)
    occupied_cells: set[tuple[int, int]] = field(default_factory=set)
    events: list[Event] = field(default_factory=list)
    finished: bool = False
    finishing_time_s: float | None = None
    infeasible: bool = False
    accepted_proofs: int = 0
    rejected_proofs: int = 0
    stale_proofs: int = 0
    ac_bytes: int = 0

    @property
    def clock(self) -> float:
        return self.tick * self.arena.tick_s

    @property
    def op_count(self) -> int:
        return self.mission.op_count

    @property
    def nodes(self) -> list[RobotNode]:
        return [robot.node for robot in self.robots]

    def log(self, kind: str, robot_id: int, op_index: int | None = None, peer_id: int | None = None) -> None:
        self.events.append(
            Event(
                tick=self.tick,
                time_s=round(self.clock, 6),
                kind=kind,
                robot_id=robot_id,
                op_index=op_index,
                peer_id=peer_id,
            )
        )


# Grid geometry.


def cell_of(arena: ArenaConfig, point: np.ndarray) -> tuple[int, int]:
    size = arena.cell_size_m
    last = arena.cells_per_side - 1
    x = min(max(int(math.floor(point[0] / size)), 0), last)
    y = min(max(int(math.floor(point[1] / size)), 0), last)
    return x, y


def cell_center(arena: ArenaConfig, cell: tuple[int, int]) -> np.ndarray:
    size = arena.cell_size_m
    return np.array([(cell[0] + 0.5) * size, (cell[1] + 0.5) * size])


def parse_cell(sensor: str) -> tuple[int, int] | None:
    if not sensor.startswith("cell:"):
        return None
    try:
        x_text, y_text = sensor[len("cell:") :].split(",")
        return int(x_text), int(y_text)
    except ValueError:
        return None


# World construction.


def _validate_mission(mission: MissionSpec, tree: MerkleTree, arena: ArenaConfig) -> None:
    if tree.leaf_count != mission.op_count:
        raise ConfigError(
            f"tree commits to {tree.leaf_count} operations but the mission has {mission.op_count}"
        )
    allowed_actions = set(MISSION_ACTIONS[mission.kind])
    sensors = [op.sensor for op in mission.operations]
    if len(set(sensors)) != len(sensors):
        raise ConfigError("mission sensors must be distinct")
    for op in mission.operations:
        if op.action not in allowed_actions:
            raise ConfigError(f"action {op.action!r} is not available in a {mission.kind.value} mission")

    if mission.kind is MissionKind.FORAGING:
        if not all(sensor.startswith("color:") for sensor in sensors):
            raise ConfigError("foraging operations must use color sensors")
        if mission.op_count > arena.cells_per_side**2 - 1:
            raise ConfigError("not enough free cells to place every foraging task")
        return

    for sensor in sensors:
        cell = parse_cell(sensor)
        if cell is None or not all(0 <= value < arena.cells_per_side for value in cell):
            raise ConfigError(f"maze operation {sensor!r} lies outside the grid")


def _place_tasks(
    mission: MissionSpec, arena: ArenaConfig, rng: np.random.Generator
) -> dict[tuple[int, int], str]:
    if mission.kind is not MissionKind.FORAGING:
        return {}
    free_cells = [
        (x, y)
        for y in range(arena.cells_per_side)
        for x in range(arena.cells_per_side)
        if (x, y) != arena.target_cell
    ]
    picks = rng.choice(len(free_cells), size=mission.op_count, replace=False)
    return {free_cells[int(pick)]: op.sensor for pick, op in zip(picks, mission.operations)}


def _place_robots(
    count: int,
    arena: ArenaConfig,
    rng: np.random.Generator,
    *,
    avoid_target: bool,
) -> np.ndarray:
    radius = arena.robot_radius_m
    positions = np.zeros((count, 2), dtype=np.float64)
    for index in range(count):
        for _ in range(arena.max_placement_attempts):
            candidate = rng.uniform(radius, arena.side_m - radius, size=2)
            if avoid_target and cell_of(arena, candidate) == arena.target_cell:
                continue
            if index and np.any(
                np.hypot(*(positions[:index] - candidate).T) < 2 * radius
            ):
                continue
            positions[index] = candidate
            break
        else:
            raise PlacementError(
                f"could not place robot {index} after {arena.max_placement_attempts} attempts"
            )
    return positions


def new_world(
    mission: MissionSpec,
    tree: MerkleTree,
    robot_count: int,
    seed: int,
    *,
    arena: ArenaConfig | None = None,
    network: NetworkConfig | None = None,
) -> World:
    arena = arena or mission.arena
    network = network or NetworkConfig()
    if robot_count < 1:
        raise ConfigError("robot count must be >= 1")
    _validate_mission(mission, tree, arena)

    rng = np.random.default_rng(seed)
    task_markers = _place_tasks(mission, arena, rng)
    positions = _place_robots(
        robot_count,
        arena,
        rng,
        avoid_target=mission.kind is MissionKind.FORAGING,
    )
    headings = rng.uniform(0.0, TWO_PI, size=robot_count)

    robots = [
        Robot(
            robot_id=index,
            position=positions[index],
            heading=float(headings[index]),
            node=RobotNode(
                robot_id=index,
                state=init_robot_view(tree),
                query_timeout=network.effective_query_timeout,
            ),
        )
        for index in range(robot_count)
    ]
    marker_cells = list(task_markers)
    marker_centers = (
        np.array([cell_center(arena, cell) for cell in marker_cells])
        if marker_cells
        else np.zeros((0, 2))
    )

    return World(
        mission=mission,
        tree=tree,
        arena=arena,
        network_config=network,
        seed=seed,
        rng=rng,
        positions=positions,
        robots=robots,
        network=RangeNetwork(
            comm_range=arena.comm_range_m,
            latency_ticks=network.latency_ticks,
            drop_prob=network.drop_prob,
            rng=rng,
        ),
        task_markers=task_markers,
        marker_centers=marker_centers,
        marker_sensors=tuple(task_markers[cell] for cell in marker_cells),
    )


# Sensing.


def sense(world: World, robot: Robot) -> str | None:
    if world.mission.kind is MissionKind.MAZE:
        x, y = cell_of(world.arena, robot.position)
        return f"cell:{x},{y}"
    if not world.marker_sensors:
        return None
    distances = np.hypot(*(world.marker_centers - robot.position).T)
    nearest = int(np.argmin(distances))
    if distances[nearest] <= world.arena.vision_range_m:
        return world.marker_sensors[nearest]
    return None


def _sense_all(world: World) -> list[str | None]:
    if world.mission.kind is MissionKind.MAZE or not world.marker_sensors:
        return [sense(world, robot) for robot in world.robots]
    deltas = world.positions[:, None, :] - world.marker_centers[None, :, :]
    distances = np.hypot(deltas[..., 0], deltas[..., 1])
    nearest = np.argmin(distances, axis=1)
    readings: list[str | None] = []
    for index, marker in enumerate(nearest.tolist()):
        if distances[index, marker] <= world.arena.vision_range_m:
            readings.append(world.marker_sensors[marker])
        else:
            readings.append(None)
    return readings


# Network phase.


def _record_proof(world: World, receiver: int, sender: int, message: ProofMsg, outcome: ProofOutcome) -> None:
    if outcome is ProofOutcome.ACCEPTED:
        world.accepted_proofs += 1
        world.ac_bytes += message.proof.byte_size
    elif outcome is ProofOutcome.REJECTED:
        world.rejected_proofs += 1
        world.ac_bytes += message.proof.byte_size
    else:
        world.stale_proofs += 1
    world.log(f"proof_{outcome.value}", receiver, op_index=message.proof.op_index, peer_id=sender)


def network_deliver(world: World) -> None:
    def on_proof(receiver: int, sender: int, message: ProofMsg, outcome: ProofOutcome) -> None:
        _record_proof(world, receiver, sender, message, outcome)

    exchange_round(world.nodes, world.network, world.positions, world.tick, on_proof=on_proof)


# FSM phase.


def _idle_state(robot: Robot) -> FsmState:
    return FsmState.DONE if robot.state.is_complete else FsmState.WANDER


def _task_goals(world: World, cell: tuple[int, int]) -> list[Goal]:
    arena = world.arena
    goals = [Goal(point=cell_center(arena, cell), tolerance=arena.arrival_tolerance_m)]
    if world.mission.kind is MissionKind.FORAGING:
        inside_target = arena.cell_size_m / 2 - arena.robot_radius_m
        goals.append(Goal(point=cell_center(arena, arena.target_cell), tolerance=inside_target))
    return goals


def _check(world: World, robot: Robot, sensor: str | None) -> None:
    if sensor is None:
        robot.fsm_state = _idle_state(robot)
        return
    state = robot.state
    robot.last_checked = (sensor, state.working_index)
    match = try_match(state, sensor, MISSION_ACTIONS[world.mission.kind])
    if match is None:
        robot.fsm_state = _idle_state(robot)
        return

    if world.mission.kind is MissionKind.FORAGING:
        cell = next(cell for cell, marker in world.task_markers.items() if marker == sensor)
        robot.fsm_state = FsmState.HANDLE
    else:
        cell = cell_of(world.arena, robot.position)
        robot.fsm_state = FsmState.STOP
    robot.carried = CarriedTask(
        op_index=match.proof.op_index,
        sensor=sensor,
        action=match.action,
        cell=cell,
        goals=_task_goals(world, cell),
    )
    world.log("proof_generated", robot.robot_id, op_index=match.proof.op_index)


def _complete(world: World, robot: Robot) -> None:
    carried = robot.carried
    assert carried is not None
    if carried.op_index in world.ledger:
        # Lost the race; hold position until the winner's proof arrives.
        if not carried.blocked:
            carried.blocked = True
            world.log("completion_blocked", robot.robot_id, op_index=carried.op_index)
        return

    mark_completed(robot.state, carried.op_index, RawEvidence(sensor=carried.sensor, action=carried.action))
    world.ledger[carried.op_index] = robot.robot_id
    robot.completed_ops += 1
    robot.carried = None
    world.log("completed", robot.robot_id, op_index=carried.op_index)
    logger.debug("robot %d completed operation %d at %.1fs", robot.robot_id, carried.op_index, world.clock)

    if world.mission.kind is MissionKind.MAZE:
        robot.halted = True
        robot.fsm_state = FsmState.STOP
        world.occupied_cells.add(carried.cell)
    else:
        robot.fsm_state = _idle_state(robot)

    if len(world.ledger) == world.op_count:
        world.finished = True
        world.finishing_time_s = world.clock
        world.log("mission_finished", robot.robot_id)


def _update_fsm(world: World, robot: Robot, sensor: str | None) -> None:
    if robot.halted:
        return
    state = robot.state
    carried = robot.carried

    if carried is not None:
        if carried.op_index < state.working_index:
            world.log("task_dropped", robot.robot_id, op_index=carried.op_index)
            robot.carried = None
            robot.fsm_state = _idle_state(robot)
        elif not carried.goals:
            _complete(world, robot)
        return

    if robot.fsm_state is FsmState.CHECK:
        _check(world, robot, sensor)
        return

    robot.fsm_state = _idle_state(robot)
    if state.is_complete or sensor is None:
        return
    if robot.last_checked != (sensor, state.working_index):
        robot.fsm_state = FsmState.CHECK


# Kinematic phase.


def _overlaps(world: World, robot_id: int, candidate: np.ndarray) -> bool:
    deltas = world.positions - candidate
    squared = np.einsum("ij,ij->i", deltas, deltas)
    squared[robot_id] = np.inf
    limit = 2 * world.arena.robot_radius_m
    return bool(np.any(squared < limit * limit))


def _try_advance(world: World, robot: Robot, heading: float, distance: float) -> bool:
    arena = world.arena
    radius = arena.robot_radius_m
    candidate = robot.position + distance * np.array([math.cos(heading), math.sin(heading)])
    np.clip(candidate, radius, arena.side_m - radius, out=candidate)
    if _overlaps(world, robot.robot_id, candidate):
        return False
    robot.position[:] = candidate
    robot.heading = heading
    return True


def _obstacle_ahead(world: World, robot: Robot) -> bool:
    arena = world.arena
    dx, dy = math.cos(robot.heading), math.sin(robot.heading)
    x, y = float(robot.position[0]), float(robot.position[1])
    margin = arena.robot_radius_m + arena.obstacle_range_m
    far = arena.side_m - margin
    if (x <= margin and dx < 0) or (x >= far and dx > 0) or (y <= margin and dy < 0) or (y >= far and dy > 0):
        return True

    deltas = world.positions - robot.position
    distances = np.hypot(deltas[:, 0], deltas[:, 1])
    close = distances <= 2 * arena.robot_radius_m + arena.obstacle_range_m
    close[robot.robot_id] = False
    if not close.any():
        return False
    ahead = deltas[:, 0] * dx + deltas[:, 1] * dy > 0
    return bool(np.any(close & ahead))


def _turn_away(world: World, robot: Robot) -> None:
    turn = world.rng.uniform(math.pi / 2, math.pi)
    if world.rng.random() < 0.5:
        turn = -turn
    robot.heading = (robot.heading + turn) % TWO_PI


def _wander(world: World, robot: Robot) -> None:
    arena = world.arena
    if world.rng.random() < arena.turn_probability:
        robot.heading = float(world.rng.uniform(0.0, TWO_PI))
    if _obstacle_ahead(world, robot):
        _turn_away(world, robot)
        return
    if not _try_advance(world, robot, robot.heading, arena.step_m):
        _turn_away(world, robot)


def _navigate(world: World, robot: Robot, goals: list[Goal]) -> None:
    goal = goals[0]
    delta = goal.point - robot.position
    distance = float(math.hypot(delta[0], delta[1]))
    if distance <= goal.tolerance:
        goals.pop(0)
        return
    heading = math.atan2(delta[1], delta[0])
    if _try_advance(world, robot, heading, min(world.arena.step_m, distance)):
        return
    sidestep = float(world.rng.uniform(0.0, TWO_PI))
    _try_advance(world, robot, sidestep, world.arena.step_m)


def _move(world: World, robot: Robot) -> None:
    if robot.halted or robot.fsm_state is FsmState.CHECK:
        return
    if robot.carried is not None:
        if robot.carried.goals:
            _navigate(world, robot, robot.carried.goals)
        return
    _wander(world, robot)


# Run loop.


def _check_feasibility(world: World) -> None:
    if world.mission.kind is not MissionKind.MAZE or not world.arena.stop_when_infeasible:
        return
    movable = sum(1 for robot in world.robots if not robot.halted)
    if movable < world.op_count - len(world.ledger):
        world.infeasible = True
        world.log("mission_infeasible", -1)


def step(world: World) -> World:
    if world.finished or world.infeasible or world.tick >= world.arena.max_ticks:
        return world

    readings = _sense_all(world)
    network_deliver(world)
    for robot in world.robots:
        _update_fsm(world, robot, readings[robot.robot_id])
    if not world.finished:
        for robot in world.robots:
            _move(world, robot)
        _check_feasibility(world)

    world.tick += 1
    return world


def build_run_record(world: World, *, keep_events: bool = True) -> RunRecord:
    stats = world.network.stats
    return RunRecord(
        mission_kind=world.mission.kind.value,
        label=world.mission.label,
        seed=world.seed,
        robot_count=len(world.robots),
        op_count=world.op_count,
        finished=world.finished,
        finishing_time_s=(
            world.finishing_time_s if world.finishing_time_s is not None else world.arena.time_cap_s
        ),
        completions_per_robot=tuple(robot.completed_ops for robot in world.robots),
        final_indices=tuple(robot.state.working_index for robot in world.robots),
        proof_count=world.accepted_proofs + world.rejected_proofs,
        rejected_proofs=world.rejected_proofs,
        stale_proofs=world.stale_proofs,
        ac_bytes=world.ac_bytes,
        beacons=stats.beacons_sent,
        queries=stats.queries_sent,
        message_bytes=stats.message_bytes,
        ticks=world.tick,
        latency_ticks=world.network_config.latency_ticks,
        drop_prob=world.network_config.drop_prob,
        events=tuple(world.events) if keep_events else (),
    )


def run(
    mission: MissionSpec,
    tree: MerkleTree,
    robot_count: int,
    seed: int,
    *,
    arena: ArenaConfig | None = None,
    network: NetworkConfig | None = None,
    keep_events: bool = True,
) -> RunRecord:
    world = new_world(mission, tree, robot_count, seed, arena=arena, network=network)
    if world.mission.kind is MissionKind.MAZE:
        _check_feasibility(world)
    while not world.finished and not world.infeasible and world.tick < world.arena.max_ticks:
        step(world)

    record = build_run_record(world, keep_events=keep_events)
    logger.info(
        "%s run seed=%d robots=%d n=%d finished=%s F_t=%.1fs proofs=%d",
        record.mission_kind,
        record.seed,
        record.robot_count,
        record.op_count,
        record.finished,
        record.finishing_time_s,
        record.proof_count,
    )
    return record
