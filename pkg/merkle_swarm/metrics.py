"""Performance, communication and information-diversity metrics for run records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from merkle_swarm.config import DEFAULT_TIME_CAP_S
from merkle_swarm.errors import MetricsError
from merkle_swarm.merkle import HASH_SIZE, proof_length
from merkle_swarm.sim import RunRecord

KIB = 1024
DEFAULT_GRID_STEP_S = 10.0


@dataclass(frozen=True, slots=True)
class MetricsReport:
    mission_kind: str
    robot_count: int
    op_count: int
    runs: int
    finished_runs: int
    failed_runs: int
    ft_mean_s: float
    ft_std_s: float
    ps_grid_s: tuple[float, ...]
    ps_curve: tuple[float, ...]
    ps_half_time_s: float
    ac_mean_bytes: float
    ac_std_bytes: float
    ac_upper_limit_bytes: int
    ie_mean: float
    ie_std: float
    memory_bytes: int
    latency_ticks: int = 0
    drop_prob: float = 0.0

    @property
    def ps_final(self) -> float:
        return self.ps_curve[-1] if self.ps_curve else 0.0


def success_curve(run_times: Sequence[float], k: int, t_grid: Iterable[float]) -> list[float]:
    """Empirical P_s(tau <= t) = |{j : r_j <= t}| / k at each grid point.

    Unfinished runs must be recorded with a run time above the time cap
    (``math.inf`` works).
    """
    if k < 1 or not run_times:
        raise MetricsError("success curve needs at least one run")
    if len(run_times) != k:
        raise MetricsError(f"expected {k} run times, got {len(run_times)}")
    ordered = np.sort(np.asarray(run_times, dtype=np.float64))
    grid = np.asarray(list(t_grid), dtype=np.float64)
    counts = np.searchsorted(ordered, grid, side="right")
    return (counts / k).tolist()


def time_to_probability(run_times: Sequence[float], level: float) -> float:
    """Earliest run time at which P_s reaches ``level``; ``inf`` if it never does."""
    if not run_times:
        raise MetricsError("no run times")
    ordered = sorted(run_times)
    needed = math.ceil(level * len(ordered) - 1e-12)
    if needed <= 0:
        return 0.0
    value = ordered[needed - 1]
    return float(value)


def ac_upper_limit(robot_count: int, n: int, hash_size: int = HASH_SIZE) -> int:
    """AC_ul = P_n * P_l * |H| with P_n = (R_n - 1) * n proof exchanges."""
    if robot_count < 1 or n < 1:
        raise MetricsError("robot count and operation count must be >= 1")
    return (robot_count - 1) * n * proof_length(n) * hash_size


def per_robot_ac_bound(n: int, hash_size: int = HASH_SIZE) -> int:
    """Most proof bytes one robot receives while learning an n-operation mission."""
    return n * proof_length(n) * hash_size


def shannon_equitability(ops_per_robot: Sequence[int], n: int) -> float:
    if any(count < 0 for count in ops_per_robot):
        raise MetricsError("operation counts must be non-negative")
    if sum(ops_per_robot) > n:
        raise MetricsError(f"robots completed {sum(ops_per_robot)} operations but the mission has {n}")

    contributors = [count for count in ops_per_robot if count >= 1]
    if len(contributors) <= 1:
        return 0.0
    entropy = -math.fsum((count / n) * math.log(count / n) for count in contributors)
    return entropy / math.log(len(contributors))


def memory_footprint(n: int, hash_size: int = HASH_SIZE) -> int:
    if n < 1:
        raise MetricsError("operation count must be >= 1")
    return n * hash_size


def measured_ac(record: RunRecord) -> int:
    if record.proof_count == 0:
        return 0
    return record.proof_count * proof_length(record.op_count) * HASH_SIZE


def linear_fit_r2(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line through (xs, ys)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise MetricsError("linear fit needs at least two paired points")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (slope * x + intercept)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    if total == 0.0:
        return 1.0
    return 1.0 - residual / total


def mean_and_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation; sigma is 0 for fewer than two samples."""
    if not values:
        return 0.0, 0.0
    array = np.asarray(values, dtype=np.float64)
    std = float(array.std(ddof=1)) if len(array) > 1 else 0.0
    return float(array.mean()), std


def default_time_grid(time_cap_s: float = DEFAULT_TIME_CAP_S, step_s: float = DEFAULT_GRID_STEP_S) -> list[float]:
    count = int(math.floor(time_cap_s / step_s + 1e-9))
    grid = [round(index * step_s, 6) for index in range(count + 1)]
    if grid[-1] < time_cap_s:
        grid.append(time_cap_s)
    return grid


def summarize_runs(
    records: Sequence[RunRecord],
    *,
    t_grid: Sequence[float] | None = None,
    time_cap_s: float = DEFAULT_TIME_CAP_S,
) -> MetricsReport:
    if not records:
        raise MetricsError("cannot summarise an empty set of runs")
    first = records[0]
    usable = [record for record in records if record.error is None]
    grid = list(t_grid) if t_grid is not None else default_time_grid(time_cap_s)

    run_times = [record.finishing_time_s if record.finished else math.inf for record in usable]
    ft_mean, ft_std = mean_and_std([record.finishing_time_s for record in usable])
    ac_mean, ac_std = mean_and_std([float(measured_ac(record)) for record in usable])
    ie_mean, ie_std = mean_and_std(
        [shannon_equitability(record.completions_per_robot, record.op_count) for record in usable]
    )

    return MetricsReport(
        mission_kind=first.mission_kind,
        robot_count=first.robot_count,
        op_count=first.op_count,
        runs=len(records),
        finished_runs=sum(1 for record in usable if record.finished),
        failed_runs=len(records) - len(usable),
        ft_mean_s=ft_mean,
        ft_std_s=ft_std,
        ps_grid_s=tuple(grid),
        ps_curve=tuple(success_curve(run_times, len(run_times), grid)) if run_times else tuple(0.0 for _ in grid),
        ps_half_time_s=time_to_probability(run_times, 0.5) if run_times else math.inf,
        ac_mean_bytes=ac_mean,
        ac_std_bytes=ac_std,
        ac_upper_limit_bytes=ac_upper_limit(first.robot_count, first.op_count),
        ie_mean=ie_mean,
        ie_std=ie_std,
        memory_bytes=memory_footprint(first.op_count),
        latency_ticks=first.latency_ticks,
        drop_prob=first.drop_prob,
    )
