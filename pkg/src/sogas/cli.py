"""Command-line entry point: ``sogas run | solve | demo``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .csogas import ClassicalEstimatorConfig, csogas_run
from .harness import (
    BACKENDS,
    FAMILIES,
    SWEEPS,
    ConfigError,
    ExperimentConfig,
    advantage_ratios,
    emit_csv,
    emit_plot,
    load_instance,
    loglog_slope,
    rows_csv,
    run_cells,
    series,
    trace_rows_csv,
)
from .qcore import LayoutError, grover_success_curve
from .qsub import SubroutineBackend
from .search import sogas_run, trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sogas", description="Grover adaptive search for simulation optimization")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--sweep", choices=SWEEPS, required=True)
    run.add_argument("--values", nargs="+", help="sizes, inverse gaps or family names")
    run.add_argument("--epsilon", type=float, default=0.1)
    run.add_argument("--delta", type=float, default=0.05)
    run.add_argument("--reps", type=int, default=30)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--backend", choices=list(BACKENDS), default="contract")
    run.add_argument("--cost-constant", type=float, default=1.0)
    run.add_argument("--family", choices=FAMILIES, default="bernoulli")
    run.add_argument("--size", type=int, default=25, help="instance size for the gap sweep")
    run.add_argument("--dist-size", type=int, default=10, help="instance size for the distribution sweep")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--log-axes", action="store_true")
    run.add_argument("--csv", dest="csv_path")
    run.add_argument("--plot", dest="plot_path")
    run.add_argument("--trace", dest="trace_path")

    solve = sub.add_parser("solve", help="solve a single instance file")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--epsilon", type=float, default=0.1)
    solve.add_argument("--delta", type=float, default=0.05)
    solve.add_argument("--method", choices=("sogas", "csogas"), default="sogas")
    solve.add_argument("--backend", choices=list(BACKENDS), default="contract")
    solve.add_argument("--cost-constant", type=float, default=1.0)
    solve.add_argument("--k", type=int, default=3, help="uncertainty qubits for continuous families")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--trace")

    demo = sub.add_parser("demo", help="Grover identity check")
    demo.add_argument("--grover", type=int, required=True, metavar="N", help="number of items")
    demo.add_argument("--marked", type=int)
    return p


_DEFAULT_VALUES = {
    "size": ["5", "10", "15", "20", "25"],
    "gap": ["5", "10", "15", "20", "25"],
    "distribution": ["gaussian", "uniform", "exponential"],
    "single": ["10"],
}


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(
        sweep=args.sweep,
        values=args.values or _DEFAULT_VALUES[args.sweep],
        eps=args.epsilon,
        delta=args.delta,
        replications=args.reps,
        seed=args.seed,
        backend=args.backend,
        cost_constant=args.cost_constant,
        family=args.family,
        size=args.size,
        dist_size=args.dist_size,
        workers=args.workers,
        csv_path=args.csv_path,
        plot_path=args.plot_path,
        trace_path=args.trace_path,
        log_axes=args.log_axes,
    )
    result = run_cells(cfg)
    rows = result.rows
    if cfg.csv_path:
        emit_csv(rows, cfg.csv_path)
    else:
        sys.stdout.write(rows_csv(rows))
    if cfg.plot_path:
        emit_plot(rows, cfg.plot_path, log_axes=cfg.log_axes, title=f"{cfg.sweep} sweep")
    if cfg.trace_path:
        Path(cfg.trace_path).write_text(trace_rows_csv(result.replications))
    for value, ratio in advantage_ratios(rows).items():
        print(f"# CSOGAS/SOGAS query ratio at {value}: {ratio:.2f}", file=sys.stderr)
    xs, s = series(rows)
    if cfg.sweep in ("size", "gap") and len(xs) > 1:
        for method, pts in s.items():
            slope = loglog_slope([float(x) for x in xs], [m for m, _ in pts])
            print(f"# {method} log-log slope: {slope:.3f}", file=sys.stderr)
    return EXIT_OK


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance, args.epsilon, args.delta, k=args.k)
    rng = np.random.default_rng(args.seed)
    if args.method == "sogas":
        backend = SubroutineBackend(BACKENDS[args.backend], args.cost_constant)
        res = sogas_run(instance, backend, rng)
    else:
        res = csogas_run(instance, ClassicalEstimatorConfig(), rng)
    if args.trace:
        Path(args.trace).write_text(trace_csv(res.region_trace))
    print(f"selected: {res.selected}")
    print(f"eps-optimal: {res.correct}")
    print(f"region: [{res.final_region.a!r}, {res.final_region.b!r}] after {res.iterations} iterations")
    print(f"queries: {res.ledger.total}")
    for phase, n in res.ledger.counts.items():
        if n:
            print(f"  {phase}: {n}")
    if res.error:
        print(f"error: {res.error}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def _cmd_demo(args) -> int:
    n = args.grover
    marked = n - 1 if args.marked is None else args.marked
    iterations = max(1, math.floor(math.pi / 4 * math.sqrt(n)))
    curve = grover_success_curve(n, marked, iterations)
    worst = 0.0
    print("k\tsimulated\tclosed_form")
    for k, (sim, exact) in enumerate(curve):
        worst = max(worst, abs(sim - exact))
        print(f"{k}\t{sim:.12f}\t{exact:.12f}")
    print(f"max deviation: {worst:.3e}")
    return EXIT_OK if worst <= 1e-9 else EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "solve": _cmd_solve, "demo": _cmd_demo}[args.command]
    try:
        return handler(args)
    except (ConfigError, LayoutError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
