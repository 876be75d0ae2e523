"""Datasets, IDX loading and continual-learning task sequences."""

import gzip
import struct
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .nn import Batch

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

SINGLE_HEAD = "single-head"
MULTI_HEAD = "multi-head"


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("empty dataset")
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, index):
        return Dataset(self.inputs[index], self.labels[index], self.num_classes)


@dataclass
class Task:
    task_id: int
    train: Dataset
    test: Dataset
    head_mask: np.ndarray
    permutation: Optional[np.ndarray] = None
    classes: Optional[np.ndarray] = None


@dataclass
class TaskSequence:
    tasks: List[Task]
    regime: str = SINGLE_HEAD
    num_classes: int = 10
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def input_dim(self):
        return self.tasks[0].train.dim


def _read(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, n, path):
    if len(raw) < 4 * n:
        raise TruncatedFileError(f"{path}: header truncated")
    return struct.unpack(f">{n}I", raw[: 4 * n])


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    img = _read(images_path)
    lab = _read(labels_path)

    magic = _header(img, 1, images_path)[0]
    if magic != IMAGES_MAGIC:
        raise BadMagicError(f"{images_path}: bad magic {magic}, expected {IMAGES_MAGIC}")
    magic = _header(lab, 1, labels_path)[0]
    if magic != LABELS_MAGIC:
        raise BadMagicError(f"{labels_path}: bad magic {magic}, expected {LABELS_MAGIC}")

    _, n_img, rows, cols = _header(img, 4, images_path)
    _, n_lab = _header(lab, 2, labels_path)
    if len(img) < 16 + n_img * rows * cols:
        raise TruncatedFileError(f"{images_path}: expected {n_img} images of {rows}x{cols}")
    if len(lab) < 8 + n_lab:
        raise TruncatedFileError(f"{labels_path}: expected {n_lab} labels")
    if n_img != n_lab:
        raise CountMismatchError(f"{n_img} images but {n_lab} labels")

    pixels = np.frombuffer(img, dtype=np.uint8, count=n_img * rows * cols, offset=16)
    labels = np.frombuffer(lab, dtype=np.uint8, count=n_lab, offset=8).astype(np.int64)
    inputs = pixels.reshape(n_img, rows * cols) / 255.0
    return Dataset(inputs, labels, int(labels.max()) + 1 if n_lab else 0)


def make_synthetic(num_classes, dim, n_per_class, seed) -> Dataset:
    """Gaussian blobs around well-separated random class means, clipped to [0, 1]."""
    if min(num_classes, dim, n_per_class) <= 0:
        raise ValueError("all counts must be positive")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    # centres sit ~0.35 from each pairwise decision boundary: ~3 noise std devs
    sigma = 0.12
    labels = np.repeat(np.arange(num_classes), n_per_class)
    inputs = 0.5 + 0.5 * means[labels] + sigma * rng.normal(size=(len(labels), dim))
    order = rng.permutation(len(labels))
    return Dataset(np.clip(inputs[order], 0.0, 1.0), labels[order], num_classes)


def _split_sources(train, test, samples_per_task, test_per_task):
    if test is None:
        need = samples_per_task + test_per_task
        if len(train) < need:
            raise InsufficientDataError(f"need {need} examples per task, have {len(train)}")
        return train, None
    if len(train) < samples_per_task or len(test) < test_per_task:
        raise InsufficientDataError("not enough examples for the requested task sizes")
    return train, test


def make_permuted_tasks(dataset: Dataset, num_tasks, samples_per_task, test_per_task=1000,
                        seed=0, test_dataset: Optional[Dataset] = None) -> TaskSequence:
    """Single-head sequence where task t applies a fixed pixel permutation.

    Task 0 keeps the identity permutation.  Test examples come from
    ``test_dataset`` when given (held-out split), otherwise from examples of
    ``dataset`` disjoint from that task's training draw.
    """
    if num_tasks <= 0:
        raise ValueError("num_tasks must be positive")
    _split_sources(dataset, test_dataset, samples_per_task, test_per_task)
    rng = np.random.default_rng(seed)
    dim = dataset.dim
    all_classes = np.arange(dataset.num_classes)
    tasks = []
    for t in range(num_tasks):
        perm = np.arange(dim) if t == 0 else rng.permutation(dim)
        if test_dataset is None:
            idx = rng.choice(len(dataset), samples_per_task + test_per_task, replace=False)
            tr, te = dataset.subset(idx[:samples_per_task]), dataset.subset(idx[samples_per_task:])
        else:
            tr = dataset.subset(rng.choice(len(dataset), samples_per_task, replace=False))
            te = test_dataset.subset(rng.choice(len(test_dataset), test_per_task, replace=False))
        tasks.append(Task(
            task_id=t,
            train=Dataset(tr.inputs[:, perm], tr.labels, dataset.num_classes),
            test=Dataset(te.inputs[:, perm], te.labels, dataset.num_classes),
            head_mask=all_classes,
            permutation=perm,
        ))
    return TaskSequence(tasks, SINGLE_HEAD, dataset.num_classes)


def make_split_tasks(dataset: Dataset, num_tasks, classes_per_task, seed=0,
                     test_fraction=0.2, test_dataset: Optional[Dataset] = None) -> TaskSequence:
    """Multi-head sequence over disjoint class subsets; each task's head is its classes."""
    if num_tasks <= 0 or classes_per_task <= 0:
        raise ValueError("num_tasks and classes_per_task must be positive")
    if num_tasks * classes_per_task > dataset.num_classes:
        raise ValueError(
            f"{num_tasks} tasks x {classes_per_task} classes exceeds {dataset.num_classes} classes"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(dataset.num_classes)
    tasks = []
    for t in range(num_tasks):
        classes = np.sort(order[t * classes_per_task:(t + 1) * classes_per_task])
        idx = rng.permutation(np.flatnonzero(np.isin(dataset.labels, classes)))
        if test_dataset is None:
            n_test = max(1, int(round(test_fraction * len(idx))))
            if len(idx) - n_test < 1:
                raise InsufficientDataError(f"task {t} has too few examples")
            tr, te = dataset.subset(idx[n_test:]), dataset.subset(idx[:n_test])
        else:
            tr = dataset.subset(idx)
            te = test_dataset.subset(np.flatnonzero(np.isin(test_dataset.labels, classes)))
        tasks.append(Task(t, tr, te, head_mask=classes, classes=classes))
    return TaskSequence(tasks, MULTI_HEAD, dataset.num_classes)


def stream_batches(task: Task, batch_size, seed) -> Iterator[Batch]:
    """Single pass over the task's training set in a seeded random order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(task.train))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield Batch(task.train.inputs[idx], task.train.labels[idx], task.task_id, task.head_mask)
