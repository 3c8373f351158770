"""Wall-clock cost of building, proving and verifying mission-sized trees."""

from __future__ import annotations

import logging
import time
from typing import Sequence

import numpy as np

from merkle_swarm.errors import ConfigError, MerkleSwarmError
from merkle_swarm.merkle import build_tree, gen_proof, hash_bytes, make_leaf, proof_length, verify_proof
from merkle_swarm.metrics import mean_and_std, memory_footprint, per_robot_ac_bound
from merkle_swarm.reporting import BenchRow

logger = logging.getLogger(__name__)

DEFAULT_BENCH_SIZES = (7541, 5923, 3599)
DEFAULT_BENCH_REPEATS = 100
_GRID_SPAN = 1000


def random_operation_hashes(n: int, rng: np.random.Generator) -> list[tuple[bytes, bytes]]:
    """(h_s, h_a) pairs for n random canonical maze-style operations."""
    cells = rng.integers(0, _GRID_SPAN, size=(n, 2))
    h_a = hash_bytes(b"action:stop")
    return [(hash_bytes(f"cell:{x},{y}".encode("utf-8")), h_a) for x, y in cells.tolist()]


def bench_size(n: int, repeats: int, rng: np.random.Generator) -> BenchRow:
    pairs = random_operation_hashes(n, rng)
    leaves = [make_leaf(h_s, h_a) for h_s, h_a in pairs]

    generate: list[float] = []
    prove: list[float] = []
    verify: list[float] = []
    for _ in range(repeats):
        started = time.perf_counter()
        tree = build_tree(leaves)
        generate.append(time.perf_counter() - started)

        index = int(rng.integers(0, n))
        h_s, h_a = pairs[index]
        started = time.perf_counter()
        proof = gen_proof(tree, index, h_s, h_a)
        prove.append(time.perf_counter() - started)

        started = time.perf_counter()
        valid = verify_proof(tree.root, proof)
        verify.append(time.perf_counter() - started)
        if not valid:
            raise MerkleSwarmError(f"bench proof for index {index} of n={n} did not verify")

    generate_mean, generate_std = mean_and_std(generate)
    prove_mean, prove_std = mean_and_std(prove)
    verify_mean, verify_std = mean_and_std(verify)
    return BenchRow(
        n=n,
        repeats=repeats,
        memory_bytes=memory_footprint(n),
        ac_per_robot_bytes=per_robot_ac_bound(n),
        proof_length=proof_length(n),
        generate_mean_s=generate_mean,
        generate_std_s=generate_std,
        prove_mean_s=prove_mean,
        prove_std_s=prove_std,
        verify_mean_s=verify_mean,
        verify_std_s=verify_std,
    )


def run_bench(
    n_values: Sequence[int] = DEFAULT_BENCH_SIZES,
    repeats: int = DEFAULT_BENCH_REPEATS,
    seed: int = 0,
) -> list[BenchRow]:
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    rows: list[BenchRow] = []
    for n in n_values:
        row = bench_size(n, repeats, rng)
        logger.info(
            "bench n=%d G=%.4fs P=%.6fs V=%.6fs",
            n,
            row.generate_mean_s,
            row.prove_mean_s,
            row.verify_mean_s,
        )
        rows.append(row)
    return rows
