"""Experiment orchestration: build tasks, dispatch an algorithm, persist results."""

import csv
import io
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import agem_train, er_train, ewc_lite_train, sgd_online_train
from .config import ConfigError, ResultsRecord, RunConfig
from .data import load_idx, make_permuted_tasks, make_split_tasks, make_synthetic
from .emcl import emcl_train
from .metrics import average_accuracy_curve, bwt_or_flag, compute_acc

MNIST_ENV = "EMCLBENCH_MNIST_DIR"
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
# numeric algorithm fields a grid may sweep
GRID_FIELDS = {"lr", "alpha0", "beta", "lam", "gamma", "eta", "r", "reg_strength"}


class DataError(Exception):
    """Missing or unusable input data."""


def code_version():
    return f"emclbench {__version__} numpy {np.__version__}"


def default_mnist_dir():
    env = os.environ.get(MNIST_ENV)
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data" / "mnist"


def _find(directory, stem):
    for name in (stem, stem + ".gz"):
        p = Path(directory) / name
        if p.exists():
            return p
    raise DataError(f"{stem}[.gz] not found in {directory} (set {MNIST_ENV})")


def mnist_paths(directory=None):
    directory = default_mnist_dir() if directory is None else directory
    return {k: _find(directory, v) for k, v in MNIST_FILES.items()}


def load_mnist(directory=None):
    p = mnist_paths(directory)
    return load_idx(p["train_images"], p["train_labels"]), load_idx(p["test_images"], p["test_labels"])


def build_tasks(cfg: RunConfig):
    d = cfg.dataset
    try:
        if d.kind == "idx":
            if d.paths is None:
                train, test = load_mnist()
            else:
                train = load_idx(d.paths.train_images, d.paths.train_labels)
                test = None
                if d.paths.test_images and d.paths.test_labels:
                    test = load_idx(d.paths.test_images, d.paths.test_labels)
        else:
            per_class = -(-(d.samples_per_task + d.test_per_task) // d.num_classes)
            if d.regime == "multi-head":
                per_class = -(-(d.samples_per_task + d.test_per_task) // d.classes_per_task)
            train, test = make_synthetic(d.num_classes, d.dim, per_class, d.data_seed), None
        if d.regime == "multi-head":
            return make_split_tasks(train, d.tasks, d.classes_per_task, seed=cfg.seed,
                                    test_dataset=test)
        return make_permuted_tasks(train, d.tasks, d.samples_per_task, d.test_per_task,
                                   seed=cfg.seed, test_dataset=test)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        # IdxError and InsufficientDataError are ValueErrors
        raise DataError(str(exc)) from exc


def train(cfg: RunConfig, tasks):
    a = cfg.algo
    common = dict(hidden_sizes=tuple(cfg.model.hidden_sizes), batch_size=cfg.batch_size,
                  seed=cfg.seed)
    if a.name == "emcl":
        return emcl_train(tasks, a.to_emcl_config(), **common)
    if a.name == "sgd":
        return sgd_online_train(tasks, a.lr, **common)
    if a.name == "er":
        return er_train(tasks, a.lr, a.buffer_capacity, **common)
    if a.name == "agem":
        return agem_train(tasks, a.lr, a.buffer_capacity, ref_batch_size=a.ref_batch_size, **common)
    return ewc_lite_train(tasks, a.lr, a.reg_strength, fisher_window=a.fisher_window, **common)


def run_experiment(cfg: RunConfig, output_dir=None) -> ResultsRecord:
    """Train once and, when an output directory is set, write results.json and accuracy_matrix.csv."""
    tasks = build_tasks(cfg)
    _, matrix, log = train(cfg, tasks)
    expected = sum(len(t.train) for t in tasks)
    if log.examples_seen != expected:
        raise RuntimeError(f"single-pass violated: saw {log.examples_seen} of {expected} examples")
    bwt, defined = bwt_or_flag(matrix)
    record = ResultsRecord(
        config=cfg, accuracy_matrix=matrix.to_list(), acc=compute_acc(matrix), bwt=bwt,
        bwt_defined=defined, task_times=log.task_times, total_time=log.total_time,
        losses=log.losses, examples_seen=log.examples_seen, code_version=code_version(),
    )
    out = output_dir if output_dir is not None else cfg.output_dir
    if out is not None:
        write_record(record, out)
    return record


def write_record(record: ResultsRecord, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "results.json").write_text(record.to_json())
    (d / "accuracy_matrix.csv").write_text(record.matrix().to_csv())


def expand_grid(base: RunConfig, grid_spec):
    """All configs from ``{"lr": [...], "lam": [...]}`` style specs, in row-major order."""
    if not grid_spec or any(len(v) == 0 for v in grid_spec.values()):
        raise ConfigError("grid is empty")
    keys = sorted(grid_spec)
    for k in keys:
        if k not in GRID_FIELDS:
            raise ConfigError(f"cannot grid over {k!r}; allowed: {sorted(GRID_FIELDS)}")
        if k not in type(base.algo).model_fields:
            raise ConfigError(f"algorithm {base.algo.name!r} has no field {k!r}")
    from .config import parse_config
    cells = []
    for values in itertools.product(*(grid_spec[k] for k in keys)):
        raw = base.model_dump(mode="json")
        raw["algo"].update(dict(zip(keys, values)))
        cells.append((dict(zip(keys, values)), parse_config(raw)))
    return cells


def _run_cell(args):
    cfg, out = args
    return run_experiment(cfg, out)


def grid_search(base: RunConfig, grid_spec, output_dir=None, workers=1):
    """Run every grid cell and return ``[(params, record)]`` sorted by ACC, best first."""
    cells = expand_grid(base, grid_spec)
    outs = [None if output_dir is None else Path(output_dir) / f"cell_{i:03d}"
            for i in range(len(cells))]
    jobs = [(cfg, out) for (_, cfg), out in zip(cells, outs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(j) for j in jobs]
    order = sorted(range(len(cells)), key=lambda i: -records[i].acc)  # stable on ties
    ranked = [(cells[i][0], records[i], outs[i]) for i in order]
    if output_dir is not None:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        (Path(output_dir) / "summary.csv").write_text(summary_csv(ranked))
        summary = [{"params": p, "acc": r.acc, "bwt": r.bwt, "dir": str(o)} for p, r, o in ranked]
        (Path(output_dir) / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return [(p, r) for p, r, _ in ranked]


def summary_csv(ranked):
    keys = sorted(ranked[0][0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", *keys, "acc", "bwt", "dir"])
    for i, (p, r, o) in enumerate(ranked, 1):
        w.writerow([i, *(repr(p[k]) for k in keys), repr(r.acc), repr(r.bwt), o or ""])
    return buf.getvalue()


def emit_plot_data(records, labels=None) -> str:
    """CSV of tasks seen vs the mean accuracy over tasks seen so far, one column per run."""
    if not records:
        raise ConfigError("no results given")
    sizes = {len(r.accuracy_matrix) for r in records}
    if len(sizes) != 1:
        raise ConfigError(f"results cover different task counts: {sorted(sizes)}")
    labels = list(labels) if labels is not None else _unique_labels(records)
    curves = [average_accuracy_curve(r.matrix()) for r in records]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tasks_seen", *labels])
    for s in range(sizes.pop()):
        w.writerow([s + 1, *(repr(c[s]) for c in curves)])
    return buf.getvalue()


def _unique_labels(records):
    seen, out = {}, []
    for r in records:
        n = seen.get(r.label, 0)
        seen[r.label] = n + 1
        out.append(r.label if n == 0 else f"{r.label}_{n + 1}")
    return out
