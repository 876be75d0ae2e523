"""Single-pass driver shared by EMCL and the baselines."""

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import TaskSequence, stream_batches
from .metrics import AccuracyMatrix, task_evaluator
from .nn import init_mlp


class NumericalError(FloatingPointError):
    pass


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    mean_h: list = field(default_factory=list)
    mean_alpha: list = field(default_factory=list)
    task_times: list = field(default_factory=list)
    examples_seen: int = 0
    inner_steps: int = 0

    @property
    def total_time(self):
        return float(sum(self.task_times))


def build_model(task_sequence: TaskSequence, hidden_sizes, seed):
    sizes = [task_sequence.input_dim, *hidden_sizes, task_sequence.num_classes]
    return init_mlp(sizes, seed)


def run_online(task_sequence: TaskSequence, model, step: Callable, eval_hook=None,
               batch_size=10, seed=0, on_task_end: Optional[Callable] = None, log=None):
    """Feed every task's stream once through ``step(batch) -> loss``.

    After each task, ``on_task_end(s, task)`` runs (inside the timed region)
    and then ``eval_hook(model, s)`` fills column ``s`` of the accuracy matrix.
    Wall time covers training only.
    """
    if eval_hook is None:
        eval_hook = task_evaluator(task_sequence)
    log = TrainLog() if log is None else log
    matrix = AccuracyMatrix(len(task_sequence))
    for s, task in enumerate(task_sequence):
        start = time.perf_counter()
        for batch in stream_batches(task, batch_size, [seed, s]):
            loss = step(batch)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss on task {s} after {log.examples_seen} examples")
            if not np.isfinite(model.params).all():
                raise NumericalError(f"non-finite parameters on task {s} after {log.examples_seen} examples")
            log.losses.append(float(loss))
            log.examples_seen += len(batch)
        if on_task_end is not None:
            on_task_end(s, task)
        log.task_times.append(time.perf_counter() - start)
        matrix.record(s, eval_hook(model, s))
    return matrix, log
