"""Exception types raised by merkle-swarm."""

from __future__ import annotations


class MerkleSwarmError(Exception):
    """Base class for every error this package raises on purpose."""


class InvalidDigestError(MerkleSwarmError):
    pass


class EmptyMissionError(MerkleSwarmError):
    def __init__(self, message: str = "empty mission") -> None:
        super().__init__(message)


class ProofGenerationError(MerkleSwarmError):
    pass


class UnknownPreimageError(ProofGenerationError):
    def __init__(self, message: str = "unknown preimage") -> None:
        super().__init__(message)


class OperationEncodingError(MerkleSwarmError):
    pass


class OutOfOrderCompletionError(MerkleSwarmError):
    pass


class EvidenceMismatchError(MerkleSwarmError):
    pass


class MalformedFrameError(MerkleSwarmError):
    pass


class MalformedFileError(MerkleSwarmError):
    pass


class MissionFileError(MerkleSwarmError):
    pass


class ConfigError(MerkleSwarmError):
    pass


class PlacementError(MerkleSwarmError):
    pass


class MetricsError(MerkleSwarmError):
    pass
