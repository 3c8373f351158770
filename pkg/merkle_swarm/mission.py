"""Mission encoding on the operator side and hash-only mission state on robots."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from merkle_swarm.config import ArenaConfig, arena_from_dict, arena_to_dict
from merkle_swarm.errors import (
    ConfigError,
    EmptyMissionError,
    EvidenceMismatchError,
    MissionFileError,
    OperationEncodingError,
    OutOfOrderCompletionError,
)
from merkle_swarm.io_utils import read_json_document, write_json_document
from merkle_swarm.merkle import (
    Digest32,
    MerkleTree,
    Proof,
    build_tree,
    gen_proof,
    hash_bytes,
    make_leaf,
    verify_proof,
)

MISSION_FILE_VERSION = 1
SECRETS_FILE_VERSION = 1

FORAGING_COLORS = ("green", "magenta", "blue", "yellow", "red", "cyan", "lime", "orange")
ACTION_CARRY_TO_TARGET = "action:carry_to_target"
ACTION_STOP = "action:stop"

_SENSOR_RE = re.compile(
    r"^(?:color:(?:" + "|".join(FORAGING_COLORS) + r")|cell:(?:0|[1-9][0-9]*),(?:0|[1-9][0-9]*))$"
)
_ACTION_RE = re.compile(r"^action:(?:carry_to_target|stop)$")

# Rows are listed top to bottom; '1' is a wall, '@' the entrance, '*' the exit.
DEFAULT_MAZE_BLUEPRINT = (
    "11@11",
    "10011",
    "10011",
    "10001",
    "111*1",
)


class MissionKind(str, Enum):
    FORAGING = "foraging"
    MAZE = "maze"


MISSION_ACTIONS: dict[MissionKind, tuple[str, ...]] = {
    MissionKind.FORAGING: (ACTION_CARRY_TO_TARGET,),
    MissionKind.MAZE: (ACTION_STOP,),
}


class OpStatus(str, Enum):
    PENDING = "pending"
    COMPLETED = "completed"


class ProofOutcome(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    STALE = "stale"


@dataclass(frozen=True, slots=True)
class Operation:
    sensor: str
    action: str


@dataclass(frozen=True, slots=True)
class EncodedOperation:
    h_s: Digest32
    h_a: Digest32
    leaf: Digest32


@dataclass(frozen=True, slots=True)
class MissionSpec:
    kind: MissionKind
    operations: tuple[Operation, ...]
    arena: ArenaConfig = ArenaConfig()
    label: str = ""
    seed: int = 0
    robots: int | None = None

    @property
    def op_count(self) -> int:
        return len(self.operations)


@dataclass(frozen=True, slots=True)
class OperatorSecrets:
    """Raw operations kept by the operator; never handed to a robot."""

    root: Digest32
    operations: tuple[Operation, ...]

    def as_dict(self) -> dict[str, Any]:
        return {
            "version": SECRETS_FILE_VERSION,
            "root": self.root.hex(),
            "operations": [
                {"index": index, "sensor": op.sensor, "action": op.action}
                for index, op in enumerate(self.operations)
            ],
        }


@dataclass(frozen=True, slots=True)
class HashPairEvidence:
    h_s: Digest32
    h_a: Digest32


@dataclass(frozen=True, slots=True)
class RawEvidence:
    sensor: str
    action: str

    def hashes(self) -> tuple[Digest32, Digest32]:
        return hash_bytes(self.sensor.encode("utf-8")), hash_bytes(self.action.encode("utf-8"))


Evidence = HashPairEvidence | RawEvidence


@dataclass(frozen=True, slots=True)
class MatchResult:
    action: str
    proof: Proof


@dataclass(slots=True)
class RobotMissionState:
    tree: MerkleTree
    statuses: list[OpStatus]
    evidence: list[Evidence | None]
    working_index: int = 0

    @property
    def root(self) -> Digest32:
        return self.tree.root

    @property
    def op_count(self) -> int:
        return self.tree.leaf_count

    @property
    def is_complete(self) -> bool:
        return self.working_index >= self.op_count

    def is_completed(self, index: int) -> bool:
        return 0 <= index < self.op_count and self.statuses[index] is OpStatus.COMPLETED

    def raw_completion_count(self) -> int:
        return sum(1 for item in self.evidence if isinstance(item, RawEvidence))

    def to_dict(self) -> dict[str, Any]:
        operations: list[dict[str, Any]] = []
        for index, (status, evidence) in enumerate(zip(self.statuses, self.evidence)):
            entry: dict[str, Any] = {"index": index, "status": status.value, "evidence": None}
            if isinstance(evidence, HashPairEvidence):
                entry["evidence"] = {
                    "kind": "hash_pair",
                    "h_s": evidence.h_s.hex(),
                    "h_a": evidence.h_a.hex(),
                }
            elif isinstance(evidence, RawEvidence):
                entry["evidence"] = {
                    "kind": "raw",
                    "sensor": evidence.sensor,
                    "action": evidence.action,
                }
            operations.append(entry)
        return {
            "root": self.root.hex(),
            "op_count": self.op_count,
            "working_index": self.working_index,
            "leaves": [leaf.hex() for leaf in self.tree.leaves],
            "operations": operations,
        }


def _is_canonical(value: str, pattern: re.Pattern[str]) -> bool:
    return isinstance(value, str) and pattern.fullmatch(value) is not None


def encode_operation(op: Operation) -> EncodedOperation:
    if not _is_canonical(op.sensor, _SENSOR_RE) or not _is_canonical(op.action, _ACTION_RE):
        raise OperationEncodingError(f"bad operation encoding: {op.sensor!r} / {op.action!r}")
    h_s = hash_bytes(op.sensor.encode("utf-8"))
    h_a = hash_bytes(op.action.encode("utf-8"))
    return EncodedOperation(h_s=h_s, h_a=h_a, leaf=make_leaf(h_s, h_a))


def encode_mission(mission: MissionSpec) -> tuple[MerkleTree, OperatorSecrets]:
    if not mission.operations:
        raise EmptyMissionError()
    leaves = [encode_operation(op).leaf for op in mission.operations]
    tree = build_tree(leaves)
    return tree, OperatorSecrets(root=tree.root, operations=tuple(mission.operations))


def init_robot_view(tree: MerkleTree) -> RobotMissionState:
    n = tree.leaf_count
    return RobotMissionState(
        tree=tree,
        statuses=[OpStatus.PENDING] * n,
        evidence=[None] * n,
        working_index=0,
    )


def try_match(state: RobotMissionState, sensor: str, action_set: Iterable[str]) -> MatchResult | None:
    if state.is_complete:
        return None
    index = state.working_index
    target_leaf = state.tree.leaves[index]
    h_s = hash_bytes(sensor.encode("utf-8"))
    for action in action_set:
        h_a = hash_bytes(action.encode("utf-8"))
        if make_leaf(h_s, h_a) == target_leaf:
            return MatchResult(action=action, proof=gen_proof(state.tree, index, h_s, h_a))
    return None


def _advance(state: RobotMissionState) -> None:
    while state.working_index < state.op_count and state.statuses[state.working_index] is OpStatus.COMPLETED:
        state.working_index += 1


def mark_completed(state: RobotMissionState, index: int, evidence: RawEvidence) -> RobotMissionState:
    if index != state.working_index or state.is_complete:
        raise OutOfOrderCompletionError(
            f"out-of-order completion: operation {index} while working on {state.working_index}"
        )
    h_s, h_a = evidence.hashes()
    if make_leaf(h_s, h_a) != state.tree.leaves[index]:
        raise EvidenceMismatchError(f"evidence does not hash to the leaf of operation {index}")

    state.statuses[index] = OpStatus.COMPLETED
    state.evidence[index] = evidence
    _advance(state)
    return state


def apply_peer_proof(state: RobotMissionState, proof: Proof) -> ProofOutcome:
    if not 0 <= proof.op_index < state.op_count:
        return ProofOutcome.REJECTED
    if state.statuses[proof.op_index] is OpStatus.COMPLETED:
        return ProofOutcome.STALE
    if not verify_proof(state.root, proof):
        return ProofOutcome.REJECTED

    state.statuses[proof.op_index] = OpStatus.COMPLETED
    state.evidence[proof.op_index] = HashPairEvidence(h_s=proof.h_s, h_a=proof.h_a)
    _advance(state)
    return ProofOutcome.ACCEPTED


def prove_completed(state: RobotMissionState, index: int) -> Proof | None:
    """Proof for a completed operation from whichever evidence the robot holds."""
    if not state.is_completed(index):
        return None
    evidence = state.evidence[index]
    if isinstance(evidence, RawEvidence):
        h_s, h_a = evidence.hashes()
    elif isinstance(evidence, HashPairEvidence):
        h_s, h_a = evidence.h_s, evidence.h_a
    else:
        return None
    return gen_proof(state.tree, index, h_s, h_a)


# Mission builders.


def foraging_mission(n: int, *, arena: ArenaConfig | None = None, label: str = "") -> MissionSpec:
    if not 1 <= n <= len(FORAGING_COLORS):
        raise ConfigError(f"foraging missions support 1..{len(FORAGING_COLORS)} operations, got {n}")
    operations = tuple(
        Operation(sensor=f"color:{color}", action=ACTION_CARRY_TO_TARGET)
        for color in FORAGING_COLORS[:n]
    )
    return MissionSpec(
        kind=MissionKind.FORAGING,
        operations=operations,
        arena=arena or ArenaConfig(),
        label=label or f"foraging-n{n}",
    )


def parse_blueprint(rows: Sequence[str]) -> list[tuple[int, int]]:
    """Wall cells of a blueprint, ordered bottom row first then left to right."""
    if not rows:
        raise ConfigError("maze blueprint has no rows")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ConfigError("maze blueprint rows must all have the same width")
    for row in rows:
        unexpected = set(row) - {"0", "1", "@", "*"}
        if unexpected:
            raise ConfigError(f"maze blueprint has unexpected symbols: {''.join(sorted(unexpected))}")

    height = len(rows)
    walls: list[tuple[int, int]] = []
    for y in range(height):
        row = rows[height - 1 - y]
        for x, symbol in enumerate(row):
            if symbol == "1":
                walls.append((x, y))
    return walls


def maze_mission(
    blueprint: Sequence[str] = DEFAULT_MAZE_BLUEPRINT,
    *,
    limit: int | None = None,
    arena: ArenaConfig | None = None,
    label: str = "",
) -> MissionSpec:
    arena = arena or ArenaConfig()
    walls = parse_blueprint(blueprint)
    if len(blueprint) > arena.cells_per_side or len(blueprint[0]) > arena.cells_per_side:
        raise ConfigError("maze blueprint is larger than the arena grid")
    if limit is not None:
        if not 1 <= limit <= len(walls):
            raise ConfigError(f"maze blueprint has {len(walls)} walls, cannot take {limit}")
        walls = walls[:limit]
    operations = tuple(Operation(sensor=f"cell:{x},{y}", action=ACTION_STOP) for x, y in walls)
    return MissionSpec(
        kind=MissionKind.MAZE,
        operations=operations,
        arena=arena,
        label=label or f"maze-n{len(operations)}",
    )


# Mission and secrets files.


def mission_to_dict(mission: MissionSpec) -> dict[str, Any]:
    return {
        "version": MISSION_FILE_VERSION,
        "mission_kind": mission.kind.value,
        "label": mission.label,
        "operations": [{"sensor": op.sensor, "action": op.action} for op in mission.operations],
        "arena": arena_to_dict(mission.arena),
        "robots": mission.robots,
        "seed": mission.seed,
    }


def mission_from_dict(payload: Mapping[str, Any], *, source: str = "<mission>") -> MissionSpec:
    version = payload.get("version", MISSION_FILE_VERSION)
    if version != MISSION_FILE_VERSION:
        raise MissionFileError(f"{source}: unsupported mission file version {version}")
    try:
        kind = MissionKind(payload.get("mission_kind"))
    except ValueError as error:
        raise MissionFileError(f"{source}: unknown mission_kind {payload.get('mission_kind')!r}") from error

    raw_operations = payload.get("operations")
    if not isinstance(raw_operations, list):
        raise MissionFileError(f"{source}: operations must be a list")
    operations: list[Operation] = []
    for position, item in enumerate(raw_operations):
        if not isinstance(item, Mapping) or "sensor" not in item or "action" not in item:
            raise MissionFileError(f"{source}: operations[{position}] needs sensor and action")
        operations.append(Operation(sensor=str(item["sensor"]), action=str(item["action"])))

    robots = payload.get("robots")
    seed = payload.get("seed", 0)
    if robots is not None and (not isinstance(robots, int) or robots < 1):
        raise MissionFileError(f"{source}: robots must be a positive integer")
    if not isinstance(seed, int):
        raise MissionFileError(f"{source}: seed must be an integer")
    try:
        arena = arena_from_dict(payload.get("arena"))
    except ConfigError as error:
        raise MissionFileError(f"{source}: {error}") from error

    return MissionSpec(
        kind=kind,
        operations=tuple(operations),
        arena=arena,
        label=str(payload.get("label", "")),
        seed=seed,
        robots=robots,
    )


def load_mission(path: Path) -> MissionSpec:
    return mission_from_dict(read_json_document(path), source=str(path))


def write_mission(path: Path, mission: MissionSpec) -> None:
    write_json_document(path, mission_to_dict(mission))


def write_secrets(path: Path, secrets: OperatorSecrets) -> None:
    write_json_document(path, secrets.as_dict())


def load_secrets(path: Path) -> OperatorSecrets:
    payload = read_json_document(path)
    try:
        root = bytes.fromhex(payload["root"])
        operations = tuple(
            Operation(sensor=str(item["sensor"]), action=str(item["action"]))
            for item in sorted(payload["operations"], key=lambda item: item["index"])
        )
    except (KeyError, TypeError, ValueError) as error:
        raise MissionFileError(f"{path}: malformed secrets file ({error})") from error
    return OperatorSecrets(root=root, operations=operations)
