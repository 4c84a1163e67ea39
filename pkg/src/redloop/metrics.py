"""Benchmark scoring: overall compromise rate and the two sub-task
completion rates, with paper-style percent formatting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

__all__ = [
    "RunRecord",
    "BenchmarkResult",
    "overall_rate",
    "subtask_1exp",
    "subtask_5exp",
    "best_of_runs_per_machine",
    "compute_result",
    "format_percent",
    "format_table",
    "load_run_records",
    "load_machines_manifest",
]


@dataclass(frozen=True)
class RunRecord:
    """One engagement run against one benchmark machine."""

    machine_id: str
    run_index: int
    milestones_hit: frozenset[str] = frozenset()
    flag_found: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            machine_id=str(data["machine_id"]),
            run_index=int(data["run_index"]),
            milestones_hit=frozenset(data.get("milestones_hit", [])),
            flag_found=bool(data.get("flag_found", False)),
        )


@dataclass(frozen=True)
class Machine:
    machine_id: str
    milestones: frozenset[str]
    category: str = ""


@dataclass(frozen=True)
class BenchmarkResult:
    overall_rate: float
    subtask_1exp: float
    subtask_5exp: float
    counts: dict

    def __post_init__(self) -> None:
        for rate in (self.overall_rate, self.subtask_1exp, self.subtask_5exp):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate out of range: {rate}")
        if self.subtask_5exp > self.subtask_1exp + 1e-12:
            raise ValueError("subtask_5exp must not exceed subtask_1exp")


def overall_rate(records: Iterable[RunRecord]) -> tuple[float, int, int]:
    """Fraction of machines compromised (flag found) in any run."""
    by_machine: dict[str, bool] = {}
    for rec in records:
        by_machine[rec.machine_id] = by_machine.get(rec.machine_id, False) or rec.flag_found
    if not by_machine:
        raise ValueError("at least one machine required")
    hit = sum(1 for v in by_machine.values() if v)
    return hit / len(by_machine), hit, len(by_machine)


def _subtask_universe(machines: Sequence[Machine]) -> list[tuple[str, str]]:
    universe: list[tuple[str, str]] = []
    for machine in machines:
        for ms in sorted(machine.milestones):
            universe.append((machine.machine_id, ms))
    return universe


def subtask_1exp(
    records: Iterable[RunRecord],
    machines: Sequence[Machine],
    runs: int = 5,
) -> tuple[float, int, int]:
    """Fraction of subtasks completed in at least one of the runs."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    universe = _subtask_universe(machines)
    if not universe:
        raise ValueError("subtask universe is empty")
    hit: set[tuple[str, str]] = set()
    for rec in records:
        if not 1 <= rec.run_index <= runs:
            continue
        for ms in rec.milestones_hit:
            hit.add((rec.machine_id, ms))
    count = sum(1 for key in universe if key in hit)
    return count / len(universe), count, len(universe)


def subtask_5exp(
    records: Iterable[RunRecord],
    machines: Sequence[Machine],
    runs: int = 5,
) -> tuple[float, int, int]:
    """Total subtask successes across all runs over the maximum possible."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    universe = set(_subtask_universe(machines))
    if not universe:
        raise ValueError("subtask universe is empty")
    total = 0
    for rec in records:
        if not 1 <= rec.run_index <= runs:
            continue
        total += sum(1 for ms in rec.milestones_hit if (rec.machine_id, ms) in universe)
    denom = runs * len(universe)
    return total / denom, total, denom


def best_of_runs_per_machine(
    records: Iterable[RunRecord],
    machines: Sequence[Machine],
) -> dict[str, float]:
    """Best single-run subtask completion rate per machine."""
    by_machine = {m.machine_id: m for m in machines}
    best: dict[str, float] = {m.machine_id: 0.0 for m in machines}
    for rec in records:
        machine = by_machine.get(rec.machine_id)
        if machine is None or not machine.milestones:
            continue
        rate = len(rec.milestones_hit & machine.milestones) / len(machine.milestones)
        best[rec.machine_id] = max(best[rec.machine_id], rate)
    return best


def compute_result(
    records: Sequence[RunRecord],
    machines: Sequence[Machine],
    runs: int = 5,
) -> BenchmarkResult:
    o_rate, o_num, o_den = overall_rate(records)
    s1_rate, s1_num, s1_den = subtask_1exp(records, machines, runs)
    s5_rate, s5_num, s5_den = subtask_5exp(records, machines, runs)
    return BenchmarkResult(
        overall_rate=o_rate,
        subtask_1exp=s1_rate,
        subtask_5exp=s5_rate,
        counts={
            "overall": [o_num, o_den],
            "subtask_1exp": [s1_num, s1_den],
            "subtask_5exp": [s5_num, s5_den],
        },
    )


def format_percent(numerator: int, denominator: int) -> str:
    """Percent with two decimals in the reported tables' style: computed on
    integer counts and truncated toward zero (24/33 -> '72.72')."""
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    hundredths = (numerator * 10000) // denominator
    return f"{hundredths // 100}.{hundredths % 100:02d}"


def format_table(result: BenchmarkResult) -> str:
    rows = [
        ("overall", *result.counts["overall"]),
        ("subtask_1exp", *result.counts["subtask_1exp"]),
        ("subtask_5exp", *result.counts["subtask_5exp"]),
    ]
    lines = [f"{'metric':<14}{'hits':>8}{'total':>8}{'percent':>10}"]
    for name, num, den in rows:
        lines.append(f"{name:<14}{num:>8}{den:>8}{format_percent(num, den):>10}")
    return "\n".join(lines)


def load_run_records(directory: str) -> list[RunRecord]:
    records: list[RunRecord] = []
    for path in sorted(Path(directory).glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        items = data if isinstance(data, list) else [data]
        records.extend(RunRecord.from_dict(item) for item in items)
    return records


def load_machines_manifest(path: str) -> list[Machine]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        Machine(
            machine_id=str(m["machine_id"]),
            milestones=frozenset(m.get("milestone_ids", m.get("milestones", []))),
            category=m.get("category", ""),
        )
        for m in data
    ]
