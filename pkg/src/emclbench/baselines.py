"""Online continual-learning baselines: SGD, ER, A-GEM and a diagonal-Fisher EWC."""

from collections import deque
from typing import Callable, Optional

import numpy as np

from .data import TaskSequence
from .nn import MLP, Batch
from .training import build_model, run_online


class ReplayBuffer:
    """Fixed-capacity episodic memory filled by reservoir sampling."""

    def __init__(self, capacity, input_dim, seed=0):
        if capacity < 0:
            raise ValueError("capacity must be nonnegative")
        self.capacity = int(capacity)
        self.inputs = np.zeros((self.capacity, input_dim))
        self.labels = np.zeros(self.capacity, dtype=np.int64)
        self.task_ids = np.zeros(self.capacity, dtype=np.int64)
        self.masks = {}
        self.seen_count = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return min(self.seen_count, self.capacity)

    def add(self, x, y, task_id, head_mask=None):
        if self.capacity == 0:
            self.seen_count += 1
            return
        if self.seen_count < self.capacity:
            slot = self.seen_count
        else:
            slot = int(self.rng.integers(0, self.seen_count + 1))
        self.seen_count += 1
        if slot < self.capacity:
            self.inputs[slot] = x
            self.labels[slot] = y
            self.task_ids[slot] = task_id
            self.masks[task_id] = head_mask

    def add_batch(self, batch: Batch):
        for x, y in zip(batch.inputs, batch.labels):
            self.add(x, y, batch.task_id, batch.head_mask)

    def sample(self, n):
        """Uniform draw of ``n`` items as per-task batches.

        Without replacement when the buffer holds at least ``n`` items.
        """
        size = len(self)
        if size == 0 or n <= 0:
            return []
        idx = self.rng.choice(size, n, replace=n > size)
        out = []
        for t in np.unique(self.task_ids[idx]):
            sel = idx[self.task_ids[idx] == t]
            out.append(Batch(self.inputs[sel], self.labels[sel], int(t), self.masks[int(t)]))
        return out


def combined_loss_and_grad(model: MLP, batches):
    """Mean loss and gradient over the union of several (differently masked) batches."""
    if len(batches) == 1:
        return model.loss_and_grad(batches[0])
    total = sum(len(b) for b in batches)
    loss, grad = 0.0, np.zeros(model.num_params)
    for b in batches:
        l, g = model.loss_and_grad(b)
        w = len(b) / total
        loss += w * l
        grad += w * g
    return loss, grad


def agem_project(g, g_ref):
    """Project ``g`` so it does not point against ``g_ref``."""
    dot = float(np.dot(g, g_ref))
    ref_sq = float(np.dot(g_ref, g_ref))
    if dot >= 0 or ref_sq == 0.0:
        return g
    return g - (dot / ref_sq) * g_ref


def _prepare(task_sequence, hidden_sizes, seed, model):
    if model is None:
        model = build_model(task_sequence, hidden_sizes, seed)
    return model


def sgd_online_train(task_sequence: TaskSequence, lr, eval_hook: Optional[Callable] = None,
                     hidden_sizes=(100, 100), batch_size=10, seed=0, model=None):
    model = _prepare(task_sequence, hidden_sizes, seed, model)

    def step(batch):
        loss, g = model.loss_and_grad(batch)
        model.params -= lr * g
        return loss

    matrix, log = run_online(task_sequence, model, step, eval_hook, batch_size, seed)
    return model, matrix, log


def er_train(task_sequence: TaskSequence, lr, buffer_capacity, eval_hook=None,
             hidden_sizes=(100, 100), batch_size=10, seed=0, model=None):
    """Experience replay: each step mixes the batch with an equal-size memory draw."""
    model = _prepare(task_sequence, hidden_sizes, seed, model)
    buffer = ReplayBuffer(buffer_capacity, task_sequence.input_dim, seed=seed + 1)

    def step(batch):
        loss, g = combined_loss_and_grad(model, [batch, *buffer.sample(len(batch))])
        model.params -= lr * g
        buffer.add_batch(batch)
        return loss

    matrix, log = run_online(task_sequence, model, step, eval_hook, batch_size, seed)
    return model, matrix, log


def agem_train(task_sequence: TaskSequence, lr, buffer_capacity, eval_hook=None,
               hidden_sizes=(100, 100), batch_size=10, seed=0, model=None,
               ref_batch_size=None):
    """A-GEM with a single reference gradient drawn from the memory."""
    model = _prepare(task_sequence, hidden_sizes, seed, model)
    buffer = ReplayBuffer(buffer_capacity, task_sequence.input_dim, seed=seed + 1)

    def step(batch):
        loss, g = model.loss_and_grad(batch)
        ref = buffer.sample(ref_batch_size or len(batch))
        if ref:
            _, g_ref = combined_loss_and_grad(model, ref)
            g = agem_project(g, g_ref)
        model.params -= lr * g
        buffer.add_batch(batch)
        return loss

    matrix, log = run_online(task_sequence, model, step, eval_hook, batch_size, seed)
    return model, matrix, log


class FisherState:
    """Consolidated diagonal Fisher terms, one ``(fisher, anchor)`` per finished task."""

    def __init__(self, num_params):
        self.terms = []
        self.fisher_sum = np.zeros(num_params)
        self.weighted_anchor = np.zeros(num_params)
        self._anchor_energy = 0.0

    @property
    def fisher_diag(self):
        return self.fisher_sum

    def consolidate(self, fisher, anchor):
        fisher = np.asarray(fisher, dtype=np.float64)
        self.terms.append((fisher, np.array(anchor)))
        self.fisher_sum += fisher
        self.weighted_anchor += fisher * anchor
        self._anchor_energy += float(np.dot(fisher * anchor, anchor))

    def penalty(self, theta, reg):
        """``reg/2 * sum_t sum_m F_t,m (theta_m - anchor_t,m)^2`` from the running sums."""
        quad = float(np.dot(self.fisher_sum * theta, theta))
        cross = float(np.dot(self.weighted_anchor, theta))
        return 0.5 * reg * (quad - 2.0 * cross + self._anchor_energy)

    def penalty_grad(self, theta, reg):
        return reg * (self.fisher_sum * theta - self.weighted_anchor)


def diagonal_fisher(model: MLP, samples):
    """Mean squared per-example gradient over ``samples`` (a list of one-example batches)."""
    fisher = np.zeros(model.num_params)
    for b in samples:
        _, g = model.loss_and_grad(b)
        fisher += g * g
    return fisher / max(len(samples), 1)


def ewc_lite_train(task_sequence: TaskSequence, lr, reg_strength, eval_hook=None,
                   hidden_sizes=(100, 100), batch_size=10, seed=0, model=None,
                   fisher_window=100):
    """EWC with a Fisher estimated on each task's trailing ``fisher_window`` examples."""
    if reg_strength < 0:
        raise ValueError("reg_strength must be nonnegative")
    model = _prepare(task_sequence, hidden_sizes, seed, model)
    state = FisherState(model.num_params)
    window = deque(maxlen=fisher_window)

    def step(batch):
        loss, g = model.loss_and_grad(batch)
        if state.terms and reg_strength != 0:
            g = g + state.penalty_grad(model.params, reg_strength)
            loss += state.penalty(model.params, reg_strength)
        model.params -= lr * g
        window.extend(batch[i] for i in range(len(batch)))
        return loss

    def consolidate(s, task):
        state.consolidate(diagonal_fisher(model, list(window)), model.params)
        window.clear()

    matrix, log = run_online(task_sequence, model, step, eval_hook, batch_size, seed,
                             on_task_end=consolidate)
    return model, matrix, log
