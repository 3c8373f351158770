from __future__ import annotations

import math
from dataclasses import replace

import pytest

from merkle_swarm.errors import MetricsError
from merkle_swarm.metrics import (
    ac_upper_limit,
    default_time_grid,
    linear_fit_r2,
    mean_and_std,
    measured_ac,
    memory_footprint,
    per_robot_ac_bound,
    shannon_equitability,
    success_curve,
    summarize_runs,
    time_to_probability,
)
from merkle_swarm.sim import RunRecord


def _record(**overrides) -> RunRecord:
    base = RunRecord(
        mission_kind="foraging",
        label="foraging-n4",
        seed=0,
        robot_count=3,
        op_count=4,
        finished=True,
        finishing_time_s=100.0,
        completions_per_robot=(2, 1, 1),
        final_indices=(4, 4, 4),
        proof_count=8,
        rejected_proofs=0,
        stale_proofs=1,
        ac_bytes=8 * 4 * 32,
        beacons=10,
        queries=8,
        message_bytes=1000,
        ticks=1000,
    )
    return replace(base, **overrides)


def test_success_curve_counts_finished_runs() -> None:
    assert success_curve([10.0, 20.0], 2, [5.0, 15.0, 20.0]) == [0.0, 0.5, 1.0]


def test_success_curve_treats_unfinished_runs_as_never_done() -> None:
    curve = success_curve([10.0, math.inf], 2, [0.0, 5100.0])

    assert curve == [0.0, 0.5]


def test_success_curve_is_monotone() -> None:
    curve = success_curve([30.0, 10.0, 20.0, 40.0], 4, default_time_grid(50.0, 5.0))

    assert all(later >= earlier for earlier, later in zip(curve, curve[1:]))
    assert curve[-1] == 1.0


def test_success_curve_rejects_empty_or_mismatched_input() -> None:
    with pytest.raises(MetricsError):
        success_curve([], 0, [1.0])
    with pytest.raises(MetricsError):
        success_curve([1.0, 2.0], 3, [1.0])


def test_time_to_probability() -> None:
    assert time_to_probability([40.0, 10.0, 30.0, 20.0], 0.5) == 20.0
    assert time_to_probability([10.0, math.inf], 1.0) == math.inf


@pytest.mark.parametrize(
    ("robots", "n", "expected"),
    [(28, 16, 82_944), (2, 2, 192), (1, 5, 0), (16, 8, 15 * 8 * 5 * 32)],
)
def test_ac_upper_limit(robots: int, n: int, expected: int) -> None:
    assert ac_upper_limit(robots, n) == expected


def test_ac_upper_limit_rejects_zero_robots() -> None:
    with pytest.raises(MetricsError):
        ac_upper_limit(0, 4)


@pytest.mark.parametrize(
    ("n", "expected"),
    [(7541, 241_312), (5923, 189_536), (3599, 115_168)],
)
def test_memory_footprint(n: int, expected: int) -> None:
    assert memory_footprint(n) == expected


def test_memory_footprint_matches_kib_reading() -> None:
    for n, kib in [(7541, 235), (5923, 185), (3599, 112)]:
        assert abs(memory_footprint(n) / 1024 - kib) / kib < 0.01


def test_per_robot_ac_bound_for_largest_tree() -> None:
    assert per_robot_ac_bound(7541) == 3_619_680


def test_shannon_equitability_uneven_split() -> None:
    assert shannon_equitability([3, 1], 4) == pytest.approx(0.811278, abs=1e-6)


def test_shannon_equitability_even_split_is_one() -> None:
    assert shannon_equitability([2, 2], 4) == pytest.approx(1.0, abs=1e-12)
    assert shannon_equitability([1] * 16 + [0] * 12, 16) == pytest.approx(1.0, abs=1e-12)


def test_shannon_equitability_single_contributor_is_zero() -> None:
    assert shannon_equitability([4, 0, 0], 4) == 0.0
    assert shannon_equitability([0, 0], 4) == 0.0


def test_shannon_equitability_rejects_overcount() -> None:
    with pytest.raises(MetricsError):
        shannon_equitability([3, 3], 4)


def test_measured_ac_uses_proof_length() -> None:
    assert measured_ac(_record()) == 8 * 4 * 32
    assert measured_ac(_record(proof_count=0)) == 0


def test_linear_fit_r2_for_exact_line() -> None:
    assert linear_fit_r2([1, 2, 4, 8], [3, 5, 9, 17]) == pytest.approx(1.0)


def test_linear_fit_r2_requires_two_points() -> None:
    with pytest.raises(MetricsError):
        linear_fit_r2([1], [1])


def test_mean_and_std_single_sample_has_zero_sigma() -> None:
    assert mean_and_std([5.0]) == (5.0, 0.0)
    assert mean_and_std([1.0, 3.0]) == pytest.approx((2.0, math.sqrt(2.0)))


def test_default_time_grid_spans_time_cap() -> None:
    grid = default_time_grid(5100.0)

    assert grid[0] == 0.0
    assert grid[-1] == 5100.0
    assert len(grid) == 511


def test_summarize_runs_aggregates_one_cell() -> None:
    records = [
        _record(seed=0, finishing_time_s=100.0),
        _record(seed=1, finishing_time_s=300.0, proof_count=6),
        _record(seed=2, finished=False, finishing_time_s=5100.0, final_indices=(4, 2, 3)),
    ]

    report = summarize_runs(records, t_grid=[0.0, 200.0, 5100.0])

    assert report.runs == 3
    assert report.finished_runs == 2
    assert report.ps_curve == pytest.approx((0.0, 1 / 3, 2 / 3))
    assert report.ps_half_time_s == 300.0
    assert report.ft_mean_s == pytest.approx(5500.0 / 3)
    assert report.ac_upper_limit_bytes == ac_upper_limit(3, 4)
    assert report.ac_mean_bytes == pytest.approx((8 + 6 + 8) * 128 / 3)
    assert report.memory_bytes == 128


def test_summarize_runs_skips_failed_runs() -> None:
    records = [_record(), _record(seed=1, error="placement failed", proof_count=0)]

    report = summarize_runs(records, t_grid=[0.0, 200.0])

    assert report.failed_runs == 1
    assert report.finished_runs == 1
    assert report.ps_curve == (0.0, 1.0)


def test_summarize_runs_rejects_empty_input() -> None:
    with pytest.raises(MetricsError):
        summarize_runs([])
