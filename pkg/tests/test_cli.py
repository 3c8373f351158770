from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from merkle_swarm.cli import _scenario_from_args, build_parser, main
from merkle_swarm.merkle import read_tree_file

ROOT = Path(__file__).resolve().parents[1]
FORAGING_N4 = ROOT / "config" / "missions" / "foraging_n4.json"
MAZE_N16 = ROOT / "config" / "missions" / "maze_n16.json"


def _encode(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> tuple[Path, Path, str]:
    tree_path = tmp_path / "foraging.mtree"
    secrets_path = tmp_path / "foraging.secrets.json"
    code = main(["encode", "--mission", str(FORAGING_N4), "--tree", str(tree_path), "--secrets", str(secrets_path)])
    assert code == 0
    return tree_path, secrets_path, capsys.readouterr().out.strip()


def _prove(tmp_path: Path, tree_path: Path, secrets_path: Path, index: int) -> Path:
    proof_path = tmp_path / f"op{index}.proof"
    code = main(
        [
            "prove",
            "--tree",
            str(tree_path),
            "--secrets",
            str(secrets_path),
            "--index",
            str(index),
            "--out",
            str(proof_path),
        ]
    )
    assert code == 0
    return proof_path


def test_cli_help_lists_expected_subcommands() -> None:
    result = subprocess.run(
        [sys.executable, "-m", "merkle_swarm.cli", "--help"],
        capture_output=True,
        text=True,
    )

    assert result.returncode == 0
    for command in ("encode", "prove", "run", "sweep", "bench", "verify"):
        assert command in result.stdout


def test_encode_prints_root_and_writes_four_leaf_tree(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    tree_path, secrets_path, root_hex = _encode(tmp_path, capsys)

    tree = read_tree_file(tree_path)
    assert tree.padded_count == 4
    assert root_hex == tree.root.hex()
    assert json.loads(secrets_path.read_text(encoding="utf-8"))["root"] == root_hex


def test_encode_is_deterministic(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    _, _, first = _encode(tmp_path / "a", capsys)
    _, _, second = _encode(tmp_path / "b", capsys)

    assert first == second


def test_encode_empty_mission_exits_with_error(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    mission = tmp_path / "empty.json"
    mission.write_text('{"mission_kind": "foraging", "operations": []}', encoding="utf-8")

    code = main(["encode", "--mission", str(mission)])

    assert code == 2
    assert "empty mission" in capsys.readouterr().err
    assert not (tmp_path / "empty.mtree").exists()


def test_encode_reports_parse_error_location(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    mission = tmp_path / "broken.json"
    mission.write_text('{"mission_kind": "maze",\n "operations": [}\n', encoding="utf-8")

    code = main(["encode", "--mission", str(mission)])

    assert code == 2
    assert "broken.json:2:" in capsys.readouterr().err


def test_verify_accepts_valid_proof(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    tree_path, secrets_path, _ = _encode(tmp_path, capsys)
    proof_path = _prove(tmp_path, tree_path, secrets_path, 2)
    capsys.readouterr()

    code = main(["verify", "--tree", str(tree_path), "--proof", str(proof_path)])

    assert code == 0
    assert capsys.readouterr().out.strip() == "op_index=2 valid"


def test_verify_rejects_bit_flipped_proof(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    tree_path, secrets_path, _ = _encode(tmp_path, capsys)
    proof_path = _prove(tmp_path, tree_path, secrets_path, 1)
    payload = bytearray(proof_path.read_bytes())
    payload[20] ^= 0x04
    proof_path.write_bytes(bytes(payload))
    capsys.readouterr()

    code = main(["verify", "--tree", str(tree_path), "--proof", str(proof_path)])

    assert code == 1
    assert capsys.readouterr().out.strip() == "op_index=1 invalid"


def test_verify_rejects_wrong_root(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    tree_path, secrets_path, _ = _encode(tmp_path, capsys)
    proof_path = _prove(tmp_path, tree_path, secrets_path, 0)

    code = main(["verify", "--root", "00" * 32, "--proof", str(proof_path)])

    assert code == 1


def test_verify_malformed_proof_file_exits_2(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    tree_path, _, _ = _encode(tmp_path, capsys)
    bogus = tmp_path / "bogus.proof"
    bogus.write_bytes(b"not a proof")

    code = main(["verify", "--tree", str(tree_path), "--proof", str(bogus)])

    assert code == 2
    assert "proof file" in capsys.readouterr().err


def test_run_writes_csv_row_and_events(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / "run.csv"
    events = tmp_path / "events.ndjson"
    scenario = tmp_path / "scenario.json"
    scenario.write_text('{"arena": {"time_cap_s": 30.0}}', encoding="utf-8")

    code = main(
        [
            "run",
            "--mission",
            str(FORAGING_N4),
            "--robots",
            "3",
            "--seed",
            "5",
            "--config",
            str(scenario),
            "--out",
            str(out),
            "--events",
            str(events),
        ]
    )

    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text(encoding="utf-8"))))
    assert len(rows) == 1
    assert rows[0]["seed"] == "5"
    assert rows[0]["R_n"] == "3"
    assert events.exists()


def test_run_with_too_few_maze_robots_exits_zero_unfinished(capsys: pytest.CaptureFixture[str]) -> None:
    code = main(["run", "--mission", str(MAZE_N16), "--robots", "8", "--seed", "1"])

    assert code == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows[0]["finished"] == "false"
    assert rows[0]["F_t_s"] == "5100.0"


def test_run_flags_override_scenario_network() -> None:
    parser = build_parser()
    args = parser.parse_args(
        ["run", "--mission", str(FORAGING_N4), "--net-latency-ticks", "5", "--net-drop", "0.2"]
    )

    scenario = _scenario_from_args(args)

    assert scenario.network.latency_ticks == 5
    assert scenario.network.drop_prob == 0.2
    assert scenario.network.effective_query_timeout == 12


def test_run_rejects_invalid_drop_probability(capsys: pytest.CaptureFixture[str]) -> None:
    code = main(["run", "--mission", str(FORAGING_N4), "--net-drop", "1.5"])

    assert code == 2
    assert "drop_prob" in capsys.readouterr().err


def test_sweep_writes_reports(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    plan = tmp_path / "plan.json"
    plan.write_text(
        json.dumps(
            {
                "mission_kind": "foraging",
                "robot_counts": [1, 2],
                "op_counts": [2],
                "seeds_per_cell": 1,
                "arena": {"time_cap_s": 20.0},
            }
        ),
        encoding="utf-8",
    )

    code = main(["sweep", "--plan", str(plan), "--out", str(tmp_path / "out")])

    assert code == 0
    metrics = list(csv.DictReader(io.StringIO((tmp_path / "out" / "metrics.csv").read_text(encoding="utf-8"))))
    assert [row["R_n"] for row in metrics] == ["1", "2"]
    assert "Runs: 2 in 2 cells" in capsys.readouterr().out


def test_bench_single_repeat_prints_zero_sigma(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / "bench.csv"

    code = main(["bench", "--n", "128", "--repeats", "1", "--out", str(out)])

    assert code == 0
    row = next(csv.DictReader(io.StringIO(out.read_text(encoding="utf-8"))))
    assert row["memory_bytes"] == "4096"
    assert row["V_std_s"] == "0.000000000"
    assert "| 128 |" in capsys.readouterr().out


def _run_seed_column(tmp_path: Path, extra: list[str]) -> list[str]:
    scenario = tmp_path / "scenario.json"
    scenario.write_text(
        json.dumps({"robots": 2, "seeds": [5, 9, 17], "arena": {"time_cap_s": 5.0}}),
        encoding="utf-8",
    )
    out = tmp_path / "run.csv"

    code = main(["run", "--mission", str(FORAGING_N4), "--config", str(scenario), "--out", str(out), *extra])

    assert code == 0
    return [row["seed"] for row in csv.DictReader(io.StringIO(out.read_text(encoding="utf-8")))]


def test_run_uses_scenario_seed_list(tmp_path: Path) -> None:
    assert _run_seed_column(tmp_path, []) == ["5", "9", "17"]
    assert _run_seed_column(tmp_path, ["--seeds", "3"]) == ["5", "9", "17"]


def test_run_seeds_flag_cuts_or_extends_scenario_list(tmp_path: Path) -> None:
    assert _run_seed_column(tmp_path, ["--seeds", "2"]) == ["5", "9"]
    assert _run_seed_column(tmp_path, ["--seeds", "5"]) == ["5", "9", "17", "18", "19"]


def test_run_explicit_seed_wins_over_scenario_list(tmp_path: Path) -> None:
    assert _run_seed_column(tmp_path, ["--seed", "40", "--seeds", "2"]) == ["40", "41"]


def test_run_rejects_zero_robots(capsys: pytest.CaptureFixture[str]) -> None:
    code = main(["run", "--mission", str(FORAGING_N4), "--robots", "0"])

    assert code == 2
    assert "--robots must be >= 1" in capsys.readouterr().err
