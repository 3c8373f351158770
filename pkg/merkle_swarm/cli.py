"""Command line entrypoint for encoding missions, running simulations and checking proofs."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from merkle_swarm.bench import DEFAULT_BENCH_REPEATS, DEFAULT_BENCH_SIZES, run_bench
from merkle_swarm.config import ScenarioConfig, load_scenario, override_network
from merkle_swarm.errors import ConfigError, MerkleSwarmError, MissionFileError
from merkle_swarm.io_utils import write_text
from merkle_swarm.merkle import (
    HASH_SIZE,
    MerkleTree,
    gen_proof,
    hash_bytes,
    read_proof_file,
    read_tree_file,
    verify_proof,
    write_proof_file,
    write_tree_file,
)
from merkle_swarm.metrics import summarize_runs
from merkle_swarm.mission import MissionSpec, encode_mission, load_mission, load_secrets, write_secrets
from merkle_swarm.reporting import (
    render_bench_csv,
    render_bench_summary,
    render_metrics_summary,
    render_runs_csv,
    write_events,
    write_sweep_reports,
)
from merkle_swarm.sim import RunRecord, run
from merkle_swarm.sweep import load_plan, run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2

TREE_SUFFIX = ".mtree"
SECRETS_SUFFIX = ".secrets.json"


def _default_tree_path(mission_path: Path) -> Path:
    return mission_path.with_suffix(TREE_SUFFIX)


def _default_secrets_path(mission_path: Path) -> Path:
    return mission_path.with_suffix(SECRETS_SUFFIX)


def _add_network_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON scenario file (arena, network, robots, seeds).")
    parser.add_argument("--net-latency-ticks", type=int, default=None, help="Delivery latency L in ticks.")
    parser.add_argument("--net-drop", type=float, default=None, help="Per-message drop probability p.")


def _scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    scenario = load_scenario(args.config)
    network = override_network(
        scenario.network,
        latency_ticks=args.net_latency_ticks,
        drop_prob=args.net_drop,
    )
    return replace(scenario, network=network)


def _encode_command(args: argparse.Namespace) -> int:
    mission = load_mission(args.mission)
    tree, secrets = encode_mission(mission)
    tree_path = args.tree or _default_tree_path(args.mission)
    secrets_path = args.secrets or _default_secrets_path(args.mission)
    write_tree_file(tree_path, tree)
    write_secrets(secrets_path, secrets)
    logger.info("encoded %d operations into %s", tree.leaf_count, tree_path)
    print(tree.root.hex())
    return EXIT_OK


def _prove_command(args: argparse.Namespace) -> int:
    tree = read_tree_file(args.tree)
    secrets = load_secrets(args.secrets)
    if secrets.root != tree.root:
        raise MissionFileError(f"{args.secrets}: secrets root does not match {args.tree}")
    if not 0 <= args.index < len(secrets.operations):
        raise ConfigError(f"operation index {args.index} outside 0..{len(secrets.operations) - 1}")
    operation = secrets.operations[args.index]
    proof = gen_proof(
        tree,
        args.index,
        hash_bytes(operation.sensor.encode("utf-8")),
        hash_bytes(operation.action.encode("utf-8")),
    )
    write_proof_file(args.out, proof)
    print(f"op_index={proof.op_index} hashes={proof.hash_count} bytes={proof.byte_size} -> {args.out}")
    return EXIT_OK


def _mission_tree(mission: MissionSpec, tree_path: Path | None) -> MerkleTree:
    tree, _ = encode_mission(mission)
    if tree_path is None:
        return tree
    stored = read_tree_file(tree_path)
    if stored.root != tree.root:
        raise MissionFileError(f"{tree_path}: tree root does not match the mission file")
    return stored


def _run_seeds(args: argparse.Namespace, scenario: ScenarioConfig, mission: MissionSpec) -> list[int]:
    """Explicit --seed counts up from it; a scenario runs its own seed list, cut or extended to --seeds."""
    if args.seeds is not None and args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    if args.seed is None and args.config is not None:
        seeds = list(scenario.seeds)
        count = len(seeds) if args.seeds is None else args.seeds
        while len(seeds) < count:
            seeds.append(seeds[-1] + 1)
        return seeds[:count]
    first_seed = args.seed if args.seed is not None else mission.seed
    return [first_seed + offset for offset in range(args.seeds or 1)]


def _run_command(args: argparse.Namespace) -> int:
    if args.robots is not None and args.robots < 1:
        raise ConfigError("--robots must be >= 1")
    scenario = _scenario_from_args(args)
    mission = load_mission(args.mission)
    tree = _mission_tree(mission, args.tree)

    robot_count = next(
        (count for count in (args.robots, scenario.robots, mission.robots) if count is not None),
        None,
    )
    if robot_count is None:
        raise ConfigError("robot count missing: pass --robots or set robots in the mission or scenario")
    seeds = _run_seeds(args, scenario, mission)
    arena = scenario.arena if args.config else mission.arena

    records: list[RunRecord] = [
        run(
            mission,
            tree,
            robot_count,
            seed,
            arena=arena,
            network=scenario.network,
            keep_events=args.events is not None,
        )
        for seed in seeds
    ]

    csv_text = render_runs_csv(records)
    if args.out is not None:
        write_text(args.out, csv_text)
        print(f"Run records: {args.out}")
    else:
        sys.stdout.write(csv_text)
    if args.events is not None:
        write_events(args.events, records)
        print(f"Event log: {args.events}")
    if len(records) > 1:
        sys.stdout.write(render_metrics_summary([summarize_runs(records, time_cap_s=arena.time_cap_s)]))
    return EXIT_OK


def _sweep_command(args: argparse.Namespace) -> int:
    plan = load_plan(args.plan)
    network = override_network(plan.network, latency_ticks=args.net_latency_ticks, drop_prob=args.net_drop)
    changes: dict[str, object] = {"network": network}
    if args.seeds is not None:
        changes["seeds_per_cell"] = args.seeds
    if args.out is not None:
        changes["output_root"] = args.out
    if args.events:
        changes["events"] = True
    plan = replace(plan, **changes)

    result = run_sweep(plan, workers=args.workers)
    paths = write_sweep_reports(output_root=plan.output_root, records=result.records, reports=result.reports)
    if plan.events:
        paths["events"] = plan.output_root / "events.ndjson"
        write_events(paths["events"], result.records)

    print(f"Runs: {len(result.records)} in {len(result.reports)} cells")
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _bench_command(args: argparse.Namespace) -> int:
    n_values = args.n or list(DEFAULT_BENCH_SIZES)
    rows = run_bench(n_values, repeats=args.repeats, seed=args.seed)
    if args.out is not None:
        write_text(args.out, render_bench_csv(rows))
        print(f"Bench table: {args.out}")
    sys.stdout.write(render_bench_summary(rows))
    return EXIT_OK


def _expected_root(args: argparse.Namespace) -> bytes:
    if args.tree is not None:
        return read_tree_file(args.tree).root
    try:
        root = bytes.fromhex(args.root)
    except ValueError as error:
        raise ConfigError(f"--root is not hex: {error}") from error
    if len(root) != HASH_SIZE:
        raise ConfigError(f"--root must be {HASH_SIZE} bytes, got {len(root)}")
    return root


def _verify_command(args: argparse.Namespace) -> int:
    expected_root = _expected_root(args)
    proof = read_proof_file(args.proof)
    valid = verify_proof(expected_root, proof)
    print(f"op_index={proof.op_index} {'valid' if valid else 'invalid'}")
    return EXIT_OK if valid else EXIT_INVALID


def _add_subcommands(parser: argparse.ArgumentParser) -> None:
    subparsers = parser.add_subparsers(dest="command")
    subparsers.required = True

    encode = subparsers.add_parser("encode", help="Build the tree and operator secrets for a mission file.")
    encode.add_argument("--mission", type=Path, required=True)
    encode.add_argument("--tree", type=Path, default=None, help=f"Defaults to the mission path with {TREE_SUFFIX}.")
    encode.add_argument("--secrets", type=Path, default=None)
    encode.set_defaults(handler=_encode_command)

    prove = subparsers.add_parser("prove", help="Write a proof file for one operation.")
    prove.add_argument("--tree", type=Path, required=True)
    prove.add_argument("--secrets", type=Path, required=True)
    prove.add_argument("--index", type=int, required=True)
    prove.add_argument("--out", type=Path, required=True)
    prove.set_defaults(handler=_prove_command)

    run_parser = subparsers.add_parser("run", help="Simulate one mission with a fixed robot count.")
    run_parser.add_argument("--mission", type=Path, required=True)
    run_parser.add_argument("--tree", type=Path, default=None)
    run_parser.add_argument("--robots", type=int, default=None)
    run_parser.add_argument("--seed", type=int, default=None)
    run_parser.add_argument(
        "--seeds", type=int, default=None, help="Number of seeds to run (consecutive, or the scenario list cut or extended)."
    )
    run_parser.add_argument("--out", type=Path, default=None, help="Run-record CSV path (stdout if omitted).")
    run_parser.add_argument("--events", type=Path, default=None, help="Newline-delimited JSON event log path.")
    _add_network_args(run_parser)
    run_parser.set_defaults(handler=_run_command)

    sweep = subparsers.add_parser("sweep", help="Run every cell of a sweep plan.")
    sweep.add_argument("--plan", type=Path, required=True)
    sweep.add_argument("--seeds", type=int, default=None, help="Override seeds per cell (k).")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--out", type=Path, default=None, help="Output directory for CSV and summary files.")
    sweep.add_argument("--events", action="store_true")
    sweep.add_argument("--net-latency-ticks", type=int, default=None)
    sweep.add_argument("--net-drop", type=float, default=None)
    sweep.set_defaults(handler=_sweep_command)

    bench = subparsers.add_parser("bench", help="Time tree build, proof generation and verification.")
    bench.add_argument("--n", type=int, action="append", default=[], help="Operation count (repeatable).")
    bench.add_argument("--repeats", type=int, default=DEFAULT_BENCH_REPEATS)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", type=Path, default=None)
    bench.set_defaults(handler=_bench_command)

    verify = subparsers.add_parser("verify", help="Check a proof file against a tree file or root.")
    target = verify.add_mutually_exclusive_group(required=True)
    target.add_argument("--tree", type=Path)
    target.add_argument("--root", help="Expected root as 64 hex characters.")
    verify.add_argument("--proof", type=Path, required=True)
    verify.set_defaults(handler=_verify_command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="merkle-swarm")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    _add_subcommands(parser)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except MerkleSwarmError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
