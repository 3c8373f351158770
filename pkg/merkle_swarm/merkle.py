"""SHA-256 Merkle trees with power-of-two padding and index-bound inclusion proofs.

Leaves commit to one mission operation each: ``H(h_s || h_a)`` where ``h_s`` and
``h_a`` are the digests of the sensor and action strings. Interior nodes are
``H(left || right)``. Short leaf lists are padded up to the next power of two
with ``PADDING_LEAF`` so that every level pairs cleanly.

A proof carries ``h_s``, ``h_a`` and the sibling hash at every level from leaf
to root, so a verifier that only holds the root can recompute it bottom-up.
Sibling sides must spell out the operation index in binary; a proof replayed
under another index fails.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from merkle_swarm.errors import (
    EmptyMissionError,
    InvalidDigestError,
    MalformedFileError,
    ProofGenerationError,
    UnknownPreimageError,
)
from merkle_swarm.io_utils import write_bytes

HASH_SIZE = 32
Digest32 = bytes
PADDING_LEAF: Digest32 = hashlib.sha256(b"").digest()

TREE_MAGIC = b"MTRE"
PROOF_MAGIC = b"MTPF"
FILE_VERSION = 1

_TREE_HEADER = struct.Struct("<4sBII")
_PROOF_FILE_HEADER = struct.Struct("<4sB")
_U32 = struct.Struct("<I")
_U8 = struct.Struct("<B")


class Side(Enum):
    """Where the sibling hash sits relative to the node being proven."""

    LEFT = "left"
    RIGHT = "right"

    @property
    def index_bit(self) -> int:
        # A right sibling means the proven node is the left child.
        return 0 if self is Side.RIGHT else 1

    @classmethod
    def from_index_bit(cls, bit: int) -> Side:
        return cls.RIGHT if bit == 0 else cls.LEFT


@dataclass(frozen=True, slots=True)
class ProofStep:
    side: Side
    sibling: Digest32


@dataclass(frozen=True, slots=True)
class Proof:
    op_index: int
    h_s: Digest32
    h_a: Digest32
    path: tuple[ProofStep, ...]

    @property
    def hash_count(self) -> int:
        return len(self.path) + 2

    @property
    def byte_size(self) -> int:
        return self.hash_count * HASH_SIZE


@dataclass(frozen=True, slots=True)
class MerkleTree:
    leaf_count: int
    padded_count: int
    levels: tuple[tuple[Digest32, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def root(self) -> Digest32:
        return self.levels[-1][0]

    @property
    def leaves(self) -> tuple[Digest32, ...]:
        return self.levels[0]

    @property
    def node_count(self) -> int:
        return sum(len(level) for level in self.levels)


def hash_bytes(data: bytes) -> Digest32:
    return hashlib.sha256(data).digest()


def make_leaf(h_s: Digest32, h_a: Digest32) -> Digest32:
    _require_digest(h_s, "h_s")
    _require_digest(h_a, "h_a")
    return hash_bytes(h_s + h_a)


def padded_size(n: int) -> int:
    if n < 1:
        raise ValueError(f"leaf count must be >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def proof_length(n: int) -> int:
    """Hashes in a proof for an ``n``-operation mission: log2(n_hat) + 2."""
    return padded_size(n).bit_length() - 1 + 2


def build_tree(leaves: Sequence[Digest32]) -> MerkleTree:
    if not leaves:
        raise EmptyMissionError()
    for position, leaf in enumerate(leaves):
        _require_digest(leaf, f"leaf {position}")

    n = len(leaves)
    n_hat = padded_size(n)
    level: tuple[Digest32, ...] = tuple(leaves) + (PADDING_LEAF,) * (n_hat - n)
    levels = [level]
    while len(level) > 1:
        level = tuple(
            hash_bytes(level[index] + level[index + 1]) for index in range(0, len(level), 2)
        )
        levels.append(level)

    return MerkleTree(leaf_count=n, padded_count=n_hat, levels=tuple(levels))


def root(tree: MerkleTree) -> Digest32:
    return tree.root


def gen_proof(tree: MerkleTree, op_index: int, h_s: Digest32, h_a: Digest32) -> Proof:
    if not 0 <= op_index < tree.leaf_count:
        raise ProofGenerationError(
            f"operation index {op_index} out of range for {tree.leaf_count} operations"
        )
    if make_leaf(h_s, h_a) != tree.leaves[op_index]:
        raise UnknownPreimageError()

    path: list[ProofStep] = []
    index = op_index
    for level in tree.levels[:-1]:
        side = Side.from_index_bit(index & 1)
        path.append(ProofStep(side=side, sibling=level[index ^ 1]))
        index >>= 1

    return Proof(op_index=op_index, h_s=h_s, h_a=h_a, path=tuple(path))


def verify_proof(expected_root: Digest32, proof: Proof) -> bool:
    if proof.op_index < 0 or proof.op_index >> len(proof.path):
        return False
    if len(proof.h_s) != HASH_SIZE or len(proof.h_a) != HASH_SIZE:
        return False

    current = hash_bytes(proof.h_s + proof.h_a)
    for level, step in enumerate(proof.path):
        if len(step.sibling) != HASH_SIZE:
            return False
        if step.side.index_bit != (proof.op_index >> level) & 1:
            return False
        if step.side is Side.RIGHT:
            current = hash_bytes(current + step.sibling)
        else:
            current = hash_bytes(step.sibling + current)

    return hmac.compare_digest(current, expected_root)


def _require_digest(value: bytes, label: str) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != HASH_SIZE:
        raise InvalidDigestError(f"{label} must be a {HASH_SIZE}-byte digest")


# Binary tree and proof files.


def encode_tree(tree: MerkleTree) -> bytes:
    header = _TREE_HEADER.pack(TREE_MAGIC, FILE_VERSION, tree.leaf_count, tree.padded_count)
    return header + b"".join(digest for level in tree.levels for digest in level)


def decode_tree(payload: bytes) -> MerkleTree:
    if len(payload) < _TREE_HEADER.size:
        raise MalformedFileError("tree file: truncated header")
    magic, version, n, n_hat = _TREE_HEADER.unpack_from(payload)
    if magic != TREE_MAGIC:
        raise MalformedFileError("tree file: bad magic")
    if version != FILE_VERSION:
        raise MalformedFileError(f"tree file: unsupported version {version}")
    if n < 1 or n_hat != padded_size(n):
        raise MalformedFileError(f"tree file: inconsistent leaf counts n={n} n_hat={n_hat}")

    expected_size = _TREE_HEADER.size + (2 * n_hat - 1) * HASH_SIZE
    if len(payload) != expected_size:
        raise MalformedFileError(
            f"tree file: expected {expected_size} bytes, found {len(payload)}"
        )

    levels: list[tuple[Digest32, ...]] = []
    offset = _TREE_HEADER.size
    width = n_hat
    while width >= 1:
        level = tuple(
            payload[offset + index * HASH_SIZE : offset + (index + 1) * HASH_SIZE]
            for index in range(width)
        )
        levels.append(level)
        offset += width * HASH_SIZE
        width //= 2

    for height in range(1, len(levels)):
        below = levels[height - 1]
        for index, digest in enumerate(levels[height]):
            if hash_bytes(below[2 * index] + below[2 * index + 1]) != digest:
                raise MalformedFileError(
                    f"tree file: interior hash {index} at level {height} does not match its children"
                )

    return MerkleTree(leaf_count=n, padded_count=n_hat, levels=tuple(levels))


def pack_proof_fields(proof: Proof) -> bytes:
    """op_index u32, h_s, h_a, path_len u8, then (side u8, sibling) entries."""
    if not 0 <= proof.op_index <= 0xFFFFFFFF:
        raise ValueError(f"op_index {proof.op_index} does not fit in u32")
    if len(proof.path) > 0xFF:
        raise ValueError(f"proof path of {len(proof.path)} entries does not fit in u8")
    parts = [_U32.pack(proof.op_index), proof.h_s, proof.h_a, _U8.pack(len(proof.path))]
    for step in proof.path:
        parts.append(_U8.pack(step.side.index_bit))
        parts.append(step.sibling)
    return b"".join(parts)


def unpack_proof_fields(payload: bytes, offset: int = 0) -> tuple[Proof, int]:
    """Inverse of ``pack_proof_fields``; raises ``ValueError`` on short or bad input."""
    fixed = _U32.size + 2 * HASH_SIZE + _U8.size
    if len(payload) - offset < fixed:
        raise ValueError("proof fields truncated")
    (op_index,) = _U32.unpack_from(payload, offset)
    offset += _U32.size
    h_s = bytes(payload[offset : offset + HASH_SIZE])
    offset += HASH_SIZE
    h_a = bytes(payload[offset : offset + HASH_SIZE])
    offset += HASH_SIZE
    (path_len,) = _U8.unpack_from(payload, offset)
    offset += _U8.size

    entry_size = _U8.size + HASH_SIZE
    if len(payload) - offset < path_len * entry_size:
        raise ValueError("proof path truncated")

    path: list[ProofStep] = []
    for _ in range(path_len):
        (side_bit,) = _U8.unpack_from(payload, offset)
        if side_bit not in (0, 1):
            raise ValueError(f"invalid side byte {side_bit}")
        sibling = bytes(payload[offset + 1 : offset + entry_size])
        path.append(ProofStep(side=Side.from_index_bit(side_bit), sibling=sibling))
        offset += entry_size

    return Proof(op_index=op_index, h_s=h_s, h_a=h_a, path=tuple(path)), offset


def encode_proof(proof: Proof) -> bytes:
    return _PROOF_FILE_HEADER.pack(PROOF_MAGIC, FILE_VERSION) + pack_proof_fields(proof)


def decode_proof(payload: bytes) -> Proof:
    if len(payload) < _PROOF_FILE_HEADER.size:
        raise MalformedFileError("proof file: truncated header")
    magic, version = _PROOF_FILE_HEADER.unpack_from(payload)
    if magic != PROOF_MAGIC:
        raise MalformedFileError("proof file: bad magic")
    if version != FILE_VERSION:
        raise MalformedFileError(f"proof file: unsupported version {version}")
    try:
        proof, end = unpack_proof_fields(payload, _PROOF_FILE_HEADER.size)
    except ValueError as error:
        raise MalformedFileError(f"proof file: {error}") from error
    if end != len(payload):
        raise MalformedFileError(f"proof file: {len(payload) - end} trailing bytes")
    return proof


def write_tree_file(path: Path, tree: MerkleTree) -> None:
    write_bytes(path, encode_tree(tree))


def read_tree_file(path: Path) -> MerkleTree:
    return decode_tree(_read_file(path, "tree"))


def write_proof_file(path: Path, proof: Proof) -> None:
    write_bytes(path, encode_proof(proof))


def read_proof_file(path: Path) -> Proof:
    return decode_proof(_read_file(path, "proof"))


def _read_file(path: Path, label: str) -> bytes:
    try:
        return path.read_bytes()
    except OSError as error:
        raise MalformedFileError(f"{label} file {path}: {error.strerror or error}") from error
