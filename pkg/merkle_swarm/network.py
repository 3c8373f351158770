"""Range-limited, lossy, delayed message delivery between simulated robots."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from merkle_swarm.mission import ProofOutcome
from merkle_swarm.protocol import (
    BEACON_FRAME_SIZE,
    Beacon,
    Message,
    ProofMsg,
    Query,
    RobotNode,
    frame_length,
    handle_message,
)

ProofCallback = Callable[[int, int, ProofMsg, ProofOutcome], None]


@dataclass(slots=True)
class NetworkStats:
    beacons_sent: int = 0
    queries_sent: int = 0
    proofs_sent: int = 0
    beacon_bytes: int = 0
    query_bytes: int = 0
    proof_frame_bytes: int = 0
    dropped_out_of_range: int = 0
    dropped_lossy: int = 0

    @property
    def message_bytes(self) -> int:
        return self.beacon_bytes + self.query_bytes + self.proof_frame_bytes


@dataclass(order=True, slots=True)
class InFlight:
    deliver_at: int
    sequence: int
    sender: int = field(compare=False)
    receiver: int = field(compare=False)
    message: Message = field(compare=False)


class RangeNetwork:
    """Delivers a message sent at tick t at tick t+L with probability 1-p.

    Sender and receiver must be within ``comm_range`` when the message is sent;
    range at delivery time is not checked.
    """

    def __init__(
        self,
        *,
        comm_range: float,
        latency_ticks: int,
        drop_prob: float,
        rng: np.random.Generator,
    ) -> None:
        self.comm_range = comm_range
        self.latency_ticks = latency_ticks
        self.drop_prob = drop_prob
        self.rng = rng
        self.stats = NetworkStats()
        self._queue: list[InFlight] = []
        self._sequence = 0

    @property
    def pending(self) -> int:
        return len(self._queue)

    def in_range_pairs(self, positions: np.ndarray) -> np.ndarray:
        """Ordered (sender, receiver) index pairs within range, row-major."""
        deltas = positions[:, None, :] - positions[None, :, :]
        distances = np.hypot(deltas[..., 0], deltas[..., 1])
        mask = distances <= self.comm_range
        np.fill_diagonal(mask, False)
        return np.argwhere(mask)

    def _lost(self) -> bool:
        return self.drop_prob > 0 and self.rng.random() < self.drop_prob

    def _enqueue(self, now: int, sender: int, receiver: int, message: Message) -> None:
        self._sequence += 1
        heapq.heappush(
            self._queue,
            InFlight(
                deliver_at=now + self.latency_ticks,
                sequence=self._sequence,
                sender=sender,
                receiver=receiver,
                message=message,
            ),
        )

    def _count(self, message: Message) -> None:
        size = frame_length(message)
        if isinstance(message, Query):
            self.stats.queries_sent += 1
            self.stats.query_bytes += size
        elif isinstance(message, ProofMsg):
            self.stats.proofs_sent += 1
            self.stats.proof_frame_bytes += size
        else:
            self.stats.beacons_sent += 1
            self.stats.beacon_bytes += size

    def send(
        self,
        now: int,
        sender: int,
        receiver: int,
        message: Message,
        positions: np.ndarray,
    ) -> bool:
        self._count(message)
        delta = positions[sender] - positions[receiver]
        if float(np.hypot(delta[0], delta[1])) > self.comm_range:
            self.stats.dropped_out_of_range += 1
            return False
        if self._lost():
            self.stats.dropped_lossy += 1
            return False
        self._enqueue(now, sender, receiver, message)
        return True

    def broadcast_beacons(self, nodes: Sequence[RobotNode], positions: np.ndarray, now: int) -> None:
        pairs = self.in_range_pairs(positions)
        if len(pairs) == 0:
            return
        self.stats.beacons_sent += len(pairs)
        self.stats.beacon_bytes += len(pairs) * BEACON_FRAME_SIZE

        if self.drop_prob > 0:
            kept = self.rng.random(len(pairs)) >= self.drop_prob
            self.stats.dropped_lossy += int(np.count_nonzero(~kept))
            pairs = pairs[kept]

        indices = np.fromiter(
            (node.state.working_index for node in nodes), dtype=np.int64, count=len(nodes)
        )
        # A beacon only matters when the receiver is behind the sender; the
        # receiver's index never decreases, so the rest are counted and dropped.
        useful = pairs[indices[pairs[:, 0]] > indices[pairs[:, 1]]]
        for sender, receiver in useful.tolist():
            node = nodes[sender]
            beacon = Beacon(
                robot_id=node.robot_id,
                working_index=node.state.working_index,
                root=node.state.root,
            )
            self._enqueue(now, sender, receiver, beacon)

    def pop_due(self, now: int) -> list[InFlight]:
        due: list[InFlight] = []
        while self._queue and self._queue[0].deliver_at <= now:
            due.append(heapq.heappop(self._queue))
        return due


def exchange_round(
    nodes: Sequence[RobotNode],
    network: RangeNetwork,
    positions: np.ndarray,
    now: int,
    *,
    on_proof: ProofCallback | None = None,
) -> None:
    """One tick of beacons and every query/proof exchange they trigger.

    ``nodes[k]`` must be the node whose robot id is ``k``.
    """
    network.broadcast_beacons(nodes, positions, now)
    while True:
        due = network.pop_due(now)
        if not due:
            return
        for packet in due:
            node = nodes[packet.receiver]
            result = handle_message(node, packet.message, now)
            if result.outcome is not None and on_proof is not None:
                on_proof(packet.receiver, packet.sender, packet.message, result.outcome)
            if result.reply is not None:
                network.send(now, packet.receiver, packet.sender, result.reply, positions)
