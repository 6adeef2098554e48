"""Incremental-learning metrics from a per-phase, per-task accuracy matrix.

All accuracies are percentages in [0, 100]. Sums are plain left-to-right
Python sums so repeated evaluation is bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class AccuracyMatrix:
    """Lower-triangular accuracy record a[t][j] plus all-seen accuracy a_t.

    a[t][j] is accuracy on task j's classes measured after phase t (j <= t);
    seen[t] is the sample-weighted accuracy over all classes seen up to t.
    """

    num_phases: int
    task_acc: dict = field(default_factory=dict)  # (t, j) -> percent
    seen_acc: dict = field(default_factory=dict)  # t -> percent

    def set_task(self, t: int, j: int, acc: float) -> None:
        self._check_phase(t)
        if not 0 <= j <= t:
            raise ValueError(f"task index {j} outside [0, {t}]")
        if not 0.0 <= acc <= 100.0:
            raise ValueError(f"accuracy {acc} outside [0, 100]")
        self.task_acc[(t, j)] = float(acc)

    def set_seen(self, t: int, acc: float) -> None:
        self._check_phase(t)
        if not 0.0 <= acc <= 100.0:
            raise ValueError(f"accuracy {acc} outside [0, 100]")
        self.seen_acc[t] = float(acc)

    def task(self, t: int, j: int) -> float:
        if (t, j) not in self.task_acc:
            raise ValueError(f"no entry for phase {t}, task {j}")
        return self.task_acc[(t, j)]

    def seen(self, t: int) -> float:
        if t not in self.seen_acc:
            raise ValueError(f"no all-seen accuracy for phase {t}")
        return self.seen_acc[t]

    def _check_phase(self, t: int) -> None:
        if not 0 <= t < self.num_phases:
            raise ValueError(f"phase {t} outside [0, {self.num_phases - 1}]")

    def to_json(self, path: str | Path) -> None:
        payload = {
            "num_phases": self.num_phases,
            "task_acc": [[t, j, v] for (t, j), v in sorted(self.task_acc.items())],
            "seen_acc": [[t, v] for t, v in sorted(self.seen_acc.items())],
        }
        Path(path).write_text(json.dumps(payload, indent=1))

    @classmethod
    def from_json(cls, path: str | Path) -> "AccuracyMatrix":
        payload = json.loads(Path(path).read_text())
        matrix = cls(payload["num_phases"])
        for t, j, v in payload["task_acc"]:
            matrix.set_task(t, j, v)
        for t, v in payload["seen_acc"]:
            matrix.set_seen(t, v)
        return matrix


def average_incremental_accuracy(seen_accuracies: list[float]) -> float:
    """Mean all-seen accuracy over phases 0..T (T + 1 entries)."""
    if not seen_accuracies:
        raise ValueError("need at least the initial phase accuracy")
    return sum(seen_accuracies) / len(seen_accuracies)


def forgetting_of_task(matrix: AccuracyMatrix, j: int, t: int) -> float:
    """Peak-minus-current accuracy of task j at phase t.

    max_{i in {j..t-1}} a[i][j] - a[t][j]. Negative when the task's accuracy
    at phase t exceeds all earlier measurements; the formula allows that.
    """
    if j >= t:
        raise ValueError(f"forgetting needs j < t, got j={j}, t={t}")
    peak = max(matrix.task(i, j) for i in range(j, t))
    return peak - matrix.task(t, j)


def phase_forgetting(matrix: AccuracyMatrix, t: int) -> float:
    """Mean forgetting over tasks 0..t-1 at phase t (t >= 1)."""
    if t < 1:
        raise ValueError("phase forgetting is defined for t >= 1")
    return sum(forgetting_of_task(matrix, j, t) for j in range(t)) / t


def average_forgetting(matrix: AccuracyMatrix, num_incremental: int) -> float:
    """Mean of phase forgetting over phases 1..T."""
    if num_incremental < 1:
        raise ValueError("average forgetting needs at least one incremental phase")
    return sum(phase_forgetting(matrix, t) for t in range(1, num_incremental + 1)) / num_incremental


def render_report(matrix: AccuracyMatrix) -> str:
    """Tab-delimited per-phase table plus a summary row (A_T, F_T)."""
    phases = sorted(matrix.seen_acc)
    lines = ["phase\tseen_acc\tphase_forgetting\tper_task_acc"]
    for t in phases:
        per_task = " ".join(f"{matrix.task(t, j):.4f}" for j in range(t + 1) if (t, j) in matrix.task_acc)
        fgt = f"{phase_forgetting(matrix, t):.4f}" if t >= 1 else "-"
        lines.append(f"{t}\t{matrix.seen(t):.4f}\t{fgt}\t{per_task}")
    avg_acc = average_incremental_accuracy([matrix.seen(t) for t in phases])
    last = phases[-1]
    avg_fgt = f"{average_forgetting(matrix, last):.4f}" if last >= 1 else "-"
    lines.append(f"summary\tA_T={avg_acc:.4f}\tF_T={avg_fgt}\t")
    return "\n".join(lines) + "\n"
