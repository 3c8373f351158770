"""Run, metrics, curve and bench tables for simulation sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from merkle_swarm.io_utils import write_jsonl, write_text
from merkle_swarm.metrics import KIB, MetricsReport, measured_ac
from merkle_swarm.sim import RunRecord

RUN_COLUMNS = [
    "mission_kind",
    "label",
    "seed",
    "R_n",
    "n",
    "finished",
    "F_t_s",
    "ac_bytes",
    "proofs",
    "rejected_proofs",
    "stale_proofs",
    "beacons",
    "queries",
    "message_bytes",
    "ticks",
    "latency_ticks",
    "drop_prob",
    "ops_per_robot",
    "error",
]

METRICS_COLUMNS = [
    "mission_kind",
    "R_n",
    "n",
    "runs",
    "finished_runs",
    "failed_runs",
    "latency_ticks",
    "drop_prob",
    "F_t_mean_s",
    "F_t_std_s",
    "P_s_final",
    "P_s_half_time_s",
    "AC_mean_bytes",
    "AC_std_bytes",
    "AC_ul_bytes",
    "I_e_mean",
    "I_e_std",
    "memory_bytes",
]

BENCH_COLUMNS = [
    "n",
    "repeats",
    "memory_bytes",
    "memory_kib",
    "ac_per_robot_bytes",
    "ac_per_robot_kib",
    "proof_length",
    "G_mean_s",
    "G_std_s",
    "P_mean_s",
    "P_std_s",
    "V_mean_s",
    "V_std_s",
]


@dataclass(frozen=True, slots=True)
class BenchRow:
    n: int
    repeats: int
    memory_bytes: int
    ac_per_robot_bytes: int
    proof_length: int
    generate_mean_s: float
    generate_std_s: float
    prove_mean_s: float
    prove_std_s: float
    verify_mean_s: float
    verify_std_s: float


def _format_float(value: float, digits: int = 6) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}f}"


def _render_csv(columns: Sequence[str], rows: Iterable[dict[str, object]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({column: row.get(column, "") for column in columns})
    return buffer.getvalue()


def run_row(record: RunRecord) -> dict[str, object]:
    return {
        "mission_kind": record.mission_kind,
        "label": record.label,
        "seed": record.seed,
        "R_n": record.robot_count,
        "n": record.op_count,
        "finished": "true" if record.finished else "false",
        "F_t_s": _format_float(record.finishing_time_s, 1),
        "ac_bytes": measured_ac(record),
        "proofs": record.proof_count,
        "rejected_proofs": record.rejected_proofs,
        "stale_proofs": record.stale_proofs,
        "beacons": record.beacons,
        "queries": record.queries,
        "message_bytes": record.message_bytes,
        "ticks": record.ticks,
        "latency_ticks": record.latency_ticks,
        "drop_prob": record.drop_prob,
        "ops_per_robot": "[" + ",".join(str(count) for count in record.completions_per_robot) + "]",
        "error": record.error or "",
    }


def render_runs_csv(records: Iterable[RunRecord]) -> str:
    return _render_csv(RUN_COLUMNS, (run_row(record) for record in records))


def metrics_row(report: MetricsReport) -> dict[str, object]:
    return {
        "mission_kind": report.mission_kind,
        "R_n": report.robot_count,
        "n": report.op_count,
        "runs": report.runs,
        "finished_runs": report.finished_runs,
        "failed_runs": report.failed_runs,
        "latency_ticks": report.latency_ticks,
        "drop_prob": report.drop_prob,
        "F_t_mean_s": _format_float(report.ft_mean_s, 3),
        "F_t_std_s": _format_float(report.ft_std_s, 3),
        "P_s_final": _format_float(report.ps_final, 4),
        "P_s_half_time_s": _format_float(report.ps_half_time_s, 1),
        "AC_mean_bytes": _format_float(report.ac_mean_bytes, 1),
        "AC_std_bytes": _format_float(report.ac_std_bytes, 1),
        "AC_ul_bytes": report.ac_upper_limit_bytes,
        "I_e_mean": _format_float(report.ie_mean),
        "I_e_std": _format_float(report.ie_std),
        "memory_bytes": report.memory_bytes,
    }


def render_metrics_csv(reports: Iterable[MetricsReport]) -> str:
    return _render_csv(METRICS_COLUMNS, (metrics_row(report) for report in reports))


def render_curves_csv(reports: Iterable[MetricsReport]) -> str:
    """Long format: one row per (configuration, grid time)."""
    columns = ["mission_kind", "R_n", "n", "t_s", "P_s"]
    rows = (
        {
            "mission_kind": report.mission_kind,
            "R_n": report.robot_count,
            "n": report.op_count,
            "t_s": _format_float(t, 1),
            "P_s": _format_float(value, 4),
        }
        for report in reports
        for t, value in zip(report.ps_grid_s, report.ps_curve)
    )
    return _render_csv(columns, rows)


def bench_row(row: BenchRow) -> dict[str, object]:
    return {
        "n": row.n,
        "repeats": row.repeats,
        "memory_bytes": row.memory_bytes,
        "memory_kib": _format_float(row.memory_bytes / KIB, 2),
        "ac_per_robot_bytes": row.ac_per_robot_bytes,
        "ac_per_robot_kib": _format_float(row.ac_per_robot_bytes / KIB, 2),
        "proof_length": row.proof_length,
        "G_mean_s": _format_float(row.generate_mean_s, 6),
        "G_std_s": _format_float(row.generate_std_s, 6),
        "P_mean_s": _format_float(row.prove_mean_s, 9),
        "P_std_s": _format_float(row.prove_std_s, 9),
        "V_mean_s": _format_float(row.verify_mean_s, 9),
        "V_std_s": _format_float(row.verify_std_s, 9),
    }


def render_bench_csv(rows: Iterable[BenchRow]) -> str:
    return _render_csv(BENCH_COLUMNS, (bench_row(row) for row in rows))


def render_metrics_summary(reports: Sequence[MetricsReport], *, title: str = "Sweep Summary") -> str:
    lines = [
        f"# {title}",
        "",
        "| mission | R_n | n | runs | finished | F_t mean (s) | F_t std (s) | AC mean (B) | AC_ul (B) | I_e mean |",
        "|---|---|---|---|---|---|---|---|---|---|",
    ]
    for report in reports:
        lines.append(
            f"| {report.mission_kind} | {report.robot_count} | {report.op_count} | {report.runs} "
            f"| {report.finished_runs} | {report.ft_mean_s:.1f} | {report.ft_std_s:.1f} "
            f"| {report.ac_mean_bytes:.0f} | {report.ac_upper_limit_bytes} | {report.ie_mean:.3f} |"
        )
    failed = sum(report.failed_runs for report in reports)
    if failed:
        lines.extend(["", f"- Runs that raised an error: {failed}"])
    return "\n".join(lines) + "\n"


def render_bench_summary(rows: Sequence[BenchRow]) -> str:
    lines = [
        "# Tree Cost Bench",
        "",
        "| n | memory (KiB) | AC per robot (KiB) | G mean (s) | P mean (ms) | V mean (ms) |",
        "|---|---|---|---|---|---|",
    ]
    for row in rows:
        lines.append(
            f"| {row.n} | {row.memory_bytes / KIB:.1f} | {row.ac_per_robot_bytes / KIB:.1f} "
            f"| {row.generate_mean_s:.4f} | {row.prove_mean_s * 1000:.4f} | {row.verify_mean_s * 1000:.4f} |"
        )
    return "\n".join(lines) + "\n"


def write_events(path: Path, records: Iterable[RunRecord]) -> None:
    write_jsonl(
        path,
        (
            {"seed": record.seed, "R_n": record.robot_count, "n": record.op_count, **event.as_dict()}
            for record in records
            for event in record.events
        ),
    )


def write_sweep_reports(
    *,
    output_root: Path,
    records: Sequence[RunRecord],
    reports: Sequence[MetricsReport],
) -> dict[str, Path]:
    paths = {
        "runs": output_root / "runs.csv",
        "metrics": output_root / "metrics.csv",
        "curves": output_root / "ps_curves.csv",
        "summary": output_root / "summary.md",
    }
    write_text(paths["runs"], render_runs_csv(records))
    write_text(paths["metrics"], render_metrics_csv(reports))
    write_text(paths["curves"], render_curves_csv(reports))
    write_text(paths["summary"], render_metrics_summary(reports))
    return paths
