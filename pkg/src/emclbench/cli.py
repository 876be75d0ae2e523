"""Command line entry point.

Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric failure, 4 audit failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_AUDIT = 0, 1, 2, 3, 4
THREADS_ENV = "EMCLBENCH_THREADS"


def _parser():
    p = argparse.ArgumentParser(prog="emclbench", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help=f"cap BLAS threads (default: ${THREADS_ENV} or library default)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)

    grid = sub.add_parser("grid", help="grid search over algorithm hyperparameters")
    grid.add_argument("--config", required=True)
    grid.add_argument("--grid", required=True, help='JSON object, e.g. {"lr": [0.01, 0.03]}')
    grid.add_argument("--out", required=True)
    grid.add_argument("--workers", type=int, default=1)

    plot = sub.add_parser("plotdata", help="average-accuracy curves from results files")
    plot.add_argument("results", nargs="+", help="results.json files or run directories")
    plot.add_argument("--out", required=True)
    plot.add_argument("--labels", nargs="*", default=None)

    gc = sub.add_parser("gradcheck", help="backprop vs finite differences")
    gc.add_argument("--sizes", type=int, nargs="+", default=[8, 5, 3])
    gc.add_argument("--models", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--rtol", type=float, default=1e-6)

    pc = sub.add_parser("proxcheck", help="closed-form prox vs numeric minimization")
    pc.add_argument("--draws", type=int, default=1000)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--tol", type=float, default=1e-8)

    ia = sub.add_parser("importance-audit", help="first-order importance vs exact zero-out")
    ia.add_argument("--dim", type=int, default=64)
    ia.add_argument("--classes", type=int, default=10)
    ia.add_argument("--seed", type=int, default=0)
    ia.add_argument("--min-spearman", type=float, default=0.8)
    return p


def _results_path(p):
    p = Path(p)
    return p / "results.json" if p.is_dir() else p


def _report(result):
    print(json.dumps(result, indent=1))
    return EXIT_OK if result["passed"] else EXIT_AUDIT


def _dispatch(args):
    from . import audits, harness
    from .config import ConfigError, ResultsRecord, load_config

    if args.command == "run":
        rec = harness.run_experiment(load_config(args.config), args.out)
        print(f"ACC={rec.acc:.4f} BWT={rec.bwt:.4f} time={rec.total_time:.1f}s -> {args.out}")
        return EXIT_OK
    if args.command == "grid":
        try:
            spec = json.loads(Path(args.grid).read_text()) if Path(args.grid).exists() else json.loads(args.grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad grid spec: {exc}") from exc
        if not isinstance(spec, dict):
            raise ConfigError("grid spec must be a JSON object")
        ranked = harness.grid_search(load_config(args.config), spec, args.out, args.workers)
        for i, (params, rec) in enumerate(ranked, 1):
            print(f"{i:3d} {params} ACC={rec.acc:.4f} BWT={rec.bwt:.4f}")
        return EXIT_OK
    if args.command == "plotdata":
        records = [ResultsRecord.load(_results_path(r)) for r in args.results]
        Path(args.out).write_text(harness.emit_plot_data(records, args.labels or None))
        return EXIT_OK
    if args.command == "gradcheck":
        return _report(audits.gradcheck(tuple(args.sizes), args.models, seed=args.seed, rtol=args.rtol))
    if args.command == "proxcheck":
        return _report(audits.proxcheck(args.draws, args.seed, args.tol))
    return _report(audits.importance_audit(args.dim, args.classes, seed=args.seed,
                                           min_spearman=args.min_spearman))


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        threads = args.threads or int(os.environ.get(THREADS_ENV) or 0)
    except ValueError:
        print(f"config error: {THREADS_ENV} must be an integer", file=sys.stderr)
        return EXIT_CONFIG

    from .config import ConfigError
    from .harness import DataError
    from .training import NumericalError

    try:
        if threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                return _dispatch(args)
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
