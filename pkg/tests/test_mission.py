from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import pytest

from merkle_swarm.errors import (
    ConfigError,
    EmptyMissionError,
    EvidenceMismatchError,
    MissionFileError,
    OperationEncodingError,
    OutOfOrderCompletionError,
)
from merkle_swarm.merkle import HASH_SIZE, ProofStep, gen_proof, hash_bytes
from merkle_swarm.mission import (
    ACTION_CARRY_TO_TARGET,
    ACTION_STOP,
    HashPairEvidence,
    MissionKind,
    MissionSpec,
    Operation,
    OpStatus,
    ProofOutcome,
    RawEvidence,
    apply_peer_proof,
    encode_mission,
    encode_operation,
    foraging_mission,
    init_robot_view,
    load_mission,
    load_secrets,
    mark_completed,
    maze_mission,
    parse_blueprint,
    prove_completed,
    try_match,
    write_mission,
    write_secrets,
)

CARRY = [ACTION_CARRY_TO_TARGET]


def _foraging_state(n: int = 4):
    tree, secrets = encode_mission(foraging_mission(n))
    return tree, secrets, init_robot_view(tree)


def _peer_proof(secrets, tree, index: int):
    op = secrets.operations[index]
    return gen_proof(
        tree,
        index,
        hash_bytes(op.sensor.encode("utf-8")),
        hash_bytes(op.action.encode("utf-8")),
    )


def test_foraging_mission_uses_color_prefix() -> None:
    mission = foraging_mission(4)

    assert [op.sensor for op in mission.operations] == [
        "color:green",
        "color:magenta",
        "color:blue",
        "color:yellow",
    ]
    assert all(op.action == ACTION_CARRY_TO_TARGET for op in mission.operations)


def test_foraging_mission_rejects_more_colors_than_available() -> None:
    with pytest.raises(ConfigError):
        foraging_mission(9)


def test_default_maze_has_sixteen_walls_in_grid_order() -> None:
    mission = maze_mission()

    assert mission.op_count == 16
    assert [op.sensor for op in mission.operations[:5]] == [
        "cell:0,0",
        "cell:1,0",
        "cell:2,0",
        "cell:4,0",
        "cell:0,1",
    ]
    assert mission.operations[-1].sensor == "cell:4,4"
    assert all(op.action == ACTION_STOP for op in mission.operations)


def test_parse_blueprint_reads_bottom_row_first() -> None:
    assert parse_blueprint(["0@", "1*"]) == [(0, 0)]


def test_parse_blueprint_rejects_ragged_rows() -> None:
    with pytest.raises(ConfigError):
        parse_blueprint(["111", "11"])


def test_maze_mission_rejects_empty_blueprint() -> None:
    with pytest.raises(ConfigError, match="no rows"):
        maze_mission(())


def test_encode_operation_requires_canonical_strings() -> None:
    with pytest.raises(OperationEncodingError, match="bad operation encoding"):
        encode_operation(Operation(sensor="Color:Green", action=ACTION_CARRY_TO_TARGET))
    with pytest.raises(OperationEncodingError):
        encode_operation(Operation(sensor="cell:01,2", action=ACTION_STOP))


def test_encode_mission_rejects_empty_mission() -> None:
    with pytest.raises(EmptyMissionError, match="empty mission"):
        encode_mission(MissionSpec(kind=MissionKind.FORAGING, operations=()))


def test_encode_mission_builds_four_leaf_tree() -> None:
    tree, secrets = encode_mission(foraging_mission(4))

    assert tree.leaf_count == 4
    assert tree.padded_count == 4
    assert secrets.root == tree.root
    assert len(secrets.operations) == 4


def test_permuting_operations_changes_root() -> None:
    mission = foraging_mission(4)
    swapped = replace(
        mission,
        operations=(mission.operations[1], mission.operations[0], *mission.operations[2:]),
    )

    assert encode_mission(mission)[0].root != encode_mission(swapped)[0].root


def test_robot_view_holds_only_hashes() -> None:
    tree, secrets, state = _foraging_state()
    serialized = json.dumps(state.to_dict())

    assert state.working_index == 0
    assert len(state.tree.leaves) == tree.padded_count
    for op in secrets.operations:
        assert op.sensor not in serialized
        assert op.action not in serialized


def test_try_match_returns_proof_for_current_operation() -> None:
    _, _, state = _foraging_state()

    match = try_match(state, "color:green", CARRY)

    assert match is not None
    assert match.action == ACTION_CARRY_TO_TARGET
    assert match.proof.op_index == 0


def test_try_match_ignores_later_operation() -> None:
    _, _, state = _foraging_state()

    assert try_match(state, "color:magenta", CARRY) is None


def test_try_match_returns_nothing_once_complete() -> None:
    _, _, state = _foraging_state(1)
    mark_completed(state, 0, RawEvidence("color:green", ACTION_CARRY_TO_TARGET))

    assert try_match(state, "color:green", CARRY) is None


def test_mark_completed_advances_index() -> None:
    _, _, state = _foraging_state()

    mark_completed(state, 0, RawEvidence("color:green", ACTION_CARRY_TO_TARGET))

    assert state.working_index == 1
    assert state.statuses[0] is OpStatus.COMPLETED


def test_mark_completed_skips_operations_already_proven_by_peer() -> None:
    tree, secrets, state = _foraging_state()
    assert apply_peer_proof(state, _peer_proof(secrets, tree, 1)) is ProofOutcome.ACCEPTED
    assert state.working_index == 0

    mark_completed(state, 0, RawEvidence("color:green", ACTION_CARRY_TO_TARGET))

    assert state.working_index == 2


def test_mark_completed_rejects_out_of_order_index() -> None:
    _, _, state = _foraging_state()

    with pytest.raises(OutOfOrderCompletionError, match="out-of-order completion"):
        mark_completed(state, 1, RawEvidence("color:magenta", ACTION_CARRY_TO_TARGET))


def test_mark_completed_rejects_wrong_evidence_and_keeps_state() -> None:
    _, _, state = _foraging_state()

    with pytest.raises(EvidenceMismatchError):
        mark_completed(state, 0, RawEvidence("color:blue", ACTION_CARRY_TO_TARGET))

    assert state.working_index == 0
    assert state.statuses[0] is OpStatus.PENDING
    assert state.evidence[0] is None


def test_apply_peer_proof_accepts_valid_proof() -> None:
    tree, secrets, state = _foraging_state()

    outcome = apply_peer_proof(state, _peer_proof(secrets, tree, 0))

    assert outcome is ProofOutcome.ACCEPTED
    assert state.working_index == 1
    assert isinstance(state.evidence[0], HashPairEvidence)


def test_apply_peer_proof_reports_stale_duplicate() -> None:
    tree, secrets, state = _foraging_state()
    proof = _peer_proof(secrets, tree, 0)
    apply_peer_proof(state, proof)

    assert apply_peer_proof(state, proof) is ProofOutcome.STALE
    assert state.working_index == 1


def test_apply_peer_proof_rejects_corrupted_sibling() -> None:
    tree, secrets, state = _foraging_state()
    proof = _peer_proof(secrets, tree, 0)
    first = proof.path[0]
    corrupted = replace(
        proof,
        path=(ProofStep(side=first.side, sibling=b"\x00" * HASH_SIZE), *proof.path[1:]),
    )

    assert apply_peer_proof(state, corrupted) is ProofOutcome.REJECTED
    assert state.working_index == 0
    assert state.statuses[0] is OpStatus.PENDING


def test_apply_peer_proof_rejects_proof_from_other_mission() -> None:
    _, _, state = _foraging_state()
    other_tree, other_secrets = encode_mission(maze_mission(limit=4))

    outcome = apply_peer_proof(state, _peer_proof(other_secrets, other_tree, 0))

    assert outcome is ProofOutcome.REJECTED


def test_prove_completed_reproves_peer_evidence() -> None:
    tree, secrets, state = _foraging_state()
    proof = _peer_proof(secrets, tree, 0)
    apply_peer_proof(state, proof)

    assert prove_completed(state, 0) == proof
    assert prove_completed(state, 1) is None


def test_mission_file_round_trip(tmp_path: Path) -> None:
    mission = replace(maze_mission(limit=4), robots=6, seed=3)
    path = tmp_path / "maze.json"

    write_mission(path, mission)

    assert load_mission(path) == mission


def test_load_mission_reports_line_and_column(tmp_path: Path) -> None:
    path = tmp_path / "broken.json"
    path.write_text('{\n  "mission_kind": "maze",\n  "operations": [,]\n}\n', encoding="utf-8")

    with pytest.raises(MissionFileError, match=r"broken\.json:3:"):
        load_mission(path)


def test_load_mission_rejects_unknown_kind(tmp_path: Path) -> None:
    path = tmp_path / "odd.json"
    path.write_text('{"mission_kind": "herding", "operations": []}', encoding="utf-8")

    with pytest.raises(MissionFileError, match="mission_kind"):
        load_mission(path)


def test_shipped_mission_files_match_builders() -> None:
    root = Path(__file__).resolve().parents[1] / "config" / "missions"

    assert load_mission(root / "foraging_n4.json").operations == foraging_mission(4).operations
    assert load_mission(root / "maze_n16.json").operations == maze_mission().operations


def test_secrets_file_round_trip(tmp_path: Path) -> None:
    _, secrets = encode_mission(foraging_mission(3))
    path = tmp_path / "ops.secrets.json"

    write_secrets(path, secrets)

    assert load_secrets(path) == secrets
