"""Beacon/query/proof frames and the per-robot prover/verifier state machine.

Every robot beacons its working index. A robot that hears a peer ahead of it
queries that peer for its own working operation; the peer answers with an
inclusion proof; the verifier checks it against its root and asks for the next
one until both indices match. Handlers are pure with respect to scheduling:
they take a node, a message and the current tick and return the reply.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from merkle_swarm.errors import MalformedFrameError
from merkle_swarm.merkle import HASH_SIZE, Digest32, Proof, pack_proof_fields, unpack_proof_fields
from merkle_swarm.mission import ProofOutcome, RobotMissionState, apply_peer_proof, prove_completed

FRAME_MAGIC = b"MT"
FRAME_VERSION = 1

_HEADER = struct.Struct("<2sBBH")
_BEACON = struct.Struct("<HI32s")
_QUERY = struct.Struct("<HI")
_ROBOT_ID = struct.Struct("<H")

HEADER_SIZE = _HEADER.size
BEACON_FRAME_SIZE = HEADER_SIZE + _BEACON.size
QUERY_FRAME_SIZE = HEADER_SIZE + _QUERY.size
_PROOF_FIXED_SIZE = _ROBOT_ID.size + 4 + 2 * HASH_SIZE + 1
_PROOF_ENTRY_SIZE = 1 + HASH_SIZE


class MessageType(IntEnum):
    BEACON = 0x01
    QUERY = 0x02
    PROOF = 0x03


@dataclass(frozen=True, slots=True)
class Beacon:
    robot_id: int
    working_index: int
    root: Digest32


@dataclass(frozen=True, slots=True)
class Query:
    robot_id: int
    op_index: int


@dataclass(frozen=True, slots=True)
class ProofMsg:
    robot_id: int
    proof: Proof


Message = Beacon | Query | ProofMsg


def frame_length(message: Message) -> int:
    if isinstance(message, Beacon):
        return BEACON_FRAME_SIZE
    if isinstance(message, Query):
        return QUERY_FRAME_SIZE
    return HEADER_SIZE + _PROOF_FIXED_SIZE + _PROOF_ENTRY_SIZE * len(message.proof.path)


def encode_message(message: Message) -> bytes:
    try:
        if isinstance(message, Beacon):
            if len(message.root) != HASH_SIZE:
                raise MalformedFrameError("malformed frame: beacon root must be 32 bytes")
            msg_type = MessageType.BEACON
            payload = _BEACON.pack(message.robot_id, message.working_index, message.root)
        elif isinstance(message, Query):
            msg_type = MessageType.QUERY
            payload = _QUERY.pack(message.robot_id, message.op_index)
        elif isinstance(message, ProofMsg):
            msg_type = MessageType.PROOF
            payload = _ROBOT_ID.pack(message.robot_id) + pack_proof_fields(message.proof)
        else:
            raise MalformedFrameError(f"malformed frame: unknown message {type(message).__name__}")
    except (struct.error, ValueError) as error:
        raise MalformedFrameError(f"malformed frame: {error}") from error

    return _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, msg_type, len(payload)) + payload


def decode_message(frame: bytes) -> Message:
    if len(frame) < HEADER_SIZE:
        raise MalformedFrameError("malformed frame: truncated header")
    magic, version, msg_type, payload_len = _HEADER.unpack_from(frame)
    if magic != FRAME_MAGIC:
        raise MalformedFrameError("malformed frame: bad magic")
    if version != FRAME_VERSION:
        raise MalformedFrameError(f"malformed frame: unsupported version {version}")
    if payload_len != len(frame) - HEADER_SIZE:
        raise MalformedFrameError(
            f"malformed frame: payload_len {payload_len} but {len(frame) - HEADER_SIZE} bytes follow"
        )
    payload = frame[HEADER_SIZE:]

    if msg_type == MessageType.BEACON:
        if payload_len != _BEACON.size:
            raise MalformedFrameError("malformed frame: beacon payload size")
        robot_id, working_index, root = _BEACON.unpack(payload)
        return Beacon(robot_id=robot_id, working_index=working_index, root=root)

    if msg_type == MessageType.QUERY:
        if payload_len != _QUERY.size:
            raise MalformedFrameError("malformed frame: query payload size")
        robot_id, op_index = _QUERY.unpack(payload)
        return Query(robot_id=robot_id, op_index=op_index)

    if msg_type == MessageType.PROOF:
        if payload_len < _PROOF_FIXED_SIZE:
            raise MalformedFrameError("malformed frame: proof payload size")
        (robot_id,) = _ROBOT_ID.unpack_from(payload)
        try:
            proof, end = unpack_proof_fields(payload, _ROBOT_ID.size)
        except ValueError as error:
            raise MalformedFrameError(f"malformed frame: {error}") from error
        if end != payload_len:
            raise MalformedFrameError("malformed frame: trailing bytes after proof path")
        return ProofMsg(robot_id=robot_id, proof=proof)

    raise MalformedFrameError(f"malformed frame: unknown message type {msg_type:#04x}")


@dataclass(slots=True)
class SyncSession:
    peer_id: int
    peer_index: int = 0
    outstanding: int | None = None
    issued_at: int = 0
    queries_sent: int = 0
    proof_bytes_sent: int = 0
    proof_bytes_received: int = 0


@dataclass(slots=True)
class RobotNode:
    robot_id: int
    state: RobotMissionState
    query_timeout: int = 2
    sessions: dict[int, SyncSession] = field(default_factory=dict)

    def session(self, peer_id: int) -> SyncSession:
        session = self.sessions.get(peer_id)
        if session is None:
            session = SyncSession(peer_id=peer_id)
            self.sessions[peer_id] = session
        return session


@dataclass(frozen=True, slots=True)
class HandleResult:
    reply: Message | None = None
    outcome: ProofOutcome | None = None


def _issue_query(node: RobotNode, session: SyncSession, now: int) -> Query:
    session.outstanding = node.state.working_index
    session.issued_at = now
    session.queries_sent += 1
    return Query(robot_id=node.robot_id, op_index=node.state.working_index)


def on_beacon(node: RobotNode, beacon: Beacon, now: int = 0) -> Query | None:
    if beacon.root != node.state.root:
        return None
    session = node.session(beacon.robot_id)
    session.peer_index = max(session.peer_index, beacon.working_index)
    if node.state.working_index >= beacon.working_index:
        return None
    if session.outstanding is not None and now - session.issued_at < node.query_timeout:
        return None
    return _issue_query(node, session, now)


def on_query(node: RobotNode, query: Query) -> ProofMsg | None:
    proof = prove_completed(node.state, query.op_index)
    if proof is None:
        return None
    node.session(query.robot_id).proof_bytes_sent += proof.byte_size
    return ProofMsg(robot_id=node.robot_id, proof=proof)


def on_proof(node: RobotNode, message: ProofMsg, now: int = 0) -> tuple[ProofOutcome, Query | None]:
    session = node.session(message.robot_id)
    session.proof_bytes_received += message.proof.byte_size
    session.outstanding = None

    outcome = apply_peer_proof(node.state, message.proof)
    if outcome is ProofOutcome.REJECTED:
        # Stop pulling from this peer until its next beacon.
        session.peer_index = min(session.peer_index, node.state.working_index)
        return outcome, None
    if node.state.working_index < session.peer_index:
        return outcome, _issue_query(node, session, now)
    return outcome, None


def handle_message(node: RobotNode, message: Message, now: int = 0) -> HandleResult:
    if isinstance(message, Beacon):
        return HandleResult(reply=on_beacon(node, message, now))
    if isinstance(message, Query):
        return HandleResult(reply=on_query(node, message))
    outcome, follow_up = on_proof(node, message, now)
    return HandleResult(reply=follow_up, outcome=outcome)
