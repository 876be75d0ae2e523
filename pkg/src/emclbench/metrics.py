"""Test-set accuracy, the task accuracy matrix, ACC and BWT."""

import csv
import io
import math
from fractions import Fraction

import numpy as np


class UndefinedMetricError(ValueError):
    pass


def evaluate_accuracy(model, test_dataset, head_mask=None, chunk=2048) -> float:
    """Fraction of examples whose arg-max logit matches the label.

    Logits outside ``head_mask`` are excluded; ties go to the lowest class index.
    """
    n = len(test_dataset.labels)
    if n == 0:
        raise ValueError("empty test set")
    correct = 0
    for start in range(0, n, chunk):
        logits = model.forward(test_dataset.inputs[start:start + chunk], head_mask)
        pred = np.argmax(logits, axis=1)  # argmax returns the first maximum
        correct += int((pred == test_dataset.labels[start:start + chunk]).sum())
    return correct / n


class AccuracyMatrix:
    """``entries[t, s]`` = accuracy on task t after training through task s (t <= s).

    Undefined cells hold NaN.
    """

    def __init__(self, num_tasks, entries=None):
        self.num_tasks = int(num_tasks)
        if entries is None:
            self.entries = np.full((self.num_tasks, self.num_tasks), np.nan)
        else:
            self.entries = np.array(entries, dtype=np.float64)
            if self.entries.shape != (self.num_tasks, self.num_tasks):
                raise ValueError("entries must be a square T x T matrix")

    def record(self, s, accuracies):
        """Fill column ``s`` with accuracies for tasks ``0..s``."""
        accuracies = list(accuracies)
        if len(accuracies) != s + 1:
            raise ValueError(f"column {s} needs {s + 1} accuracies, got {len(accuracies)}")
        for t, a in enumerate(accuracies):
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"accuracy {a} outside [0, 1]")
            self.entries[t, s] = a

    def __getitem__(self, ts):
        return self.entries[ts]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task"] + [str(s) for s in range(self.num_tasks)])
        for t in range(self.num_tasks):
            w.writerow([str(t)] + ["" if math.isnan(v) else repr(float(v)) for v in self.entries[t]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        body = rows[1:]
        entries = [[float(v) if v != "" else np.nan for v in row[1:]] for row in body]
        return cls(len(body), entries)

    def to_list(self):
        return [[None if math.isnan(v) else float(v) for v in row] for row in self.entries]

    @classmethod
    def from_list(cls, rows):
        return cls(len(rows), [[np.nan if v is None else v for v in row] for row in rows])


def _as_entries(matrix):
    if isinstance(matrix, AccuracyMatrix):
        return matrix.entries
    return np.asarray(matrix, dtype=np.float64)


def _exact_mean(values):
    # rational arithmetic so the only rounding is the final conversion
    values = list(values)
    return float(sum(values, Fraction(0)) / len(values))


def compute_acc(matrix) -> float:
    """Mean accuracy over all tasks after the last task."""
    e = _as_entries(matrix)
    last = e[:, -1]
    if np.isnan(last).any():
        raise UndefinedMetricError("final column has undefined cells")
    return _exact_mean(Fraction(v) for v in last.tolist())


def compute_bwt(matrix) -> float:
    """Mean change in accuracy of tasks 0..T-2 between learning them and the end."""
    e = _as_entries(matrix)
    T = e.shape[0]
    if T < 2:
        raise UndefinedMetricError("BWT needs at least two tasks")
    pairs = [(float(e[t, T - 1]), float(e[t, t])) for t in range(T - 1)]
    if any(math.isnan(a) or math.isnan(b) for a, b in pairs):
        raise UndefinedMetricError("diagonal or final column has undefined cells")
    return _exact_mean(Fraction(a) - Fraction(b) for a, b in pairs)


def bwt_or_flag(matrix):
    """``(bwt, defined)``; a single-task run reports ``(0.0, False)``."""
    try:
        return compute_bwt(matrix), True
    except UndefinedMetricError:
        if _as_entries(matrix).shape[0] == 1:
            return 0.0, False
        raise


def average_accuracy_curve(matrix):
    """Mean over t <= s of ACC[t, s] for each s."""
    e = _as_entries(matrix)
    return [_exact_mean(Fraction(v) for v in e[: s + 1, s].tolist()) for s in range(e.shape[0])]


def task_evaluator(task_sequence):
    """Default eval hook: test accuracy of every task seen so far."""
    def hook(model, s):
        return [evaluate_accuracy(model, task.test, task.head_mask)
                for task in task_sequence.tasks[: s + 1]]
    return hook
