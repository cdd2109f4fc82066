"""Experiment runner: instances, seeded replications, aggregation and output.

Instance file grammar (one solution per line)::

    # comment lines and blank lines are ignored
    <id> bernoulli   <p>
    <id> gaussian    <center> <sd>
    <id> uniform     <lo> <hi>
    <id> exponential <rate> [<loc>]

Fields are whitespace separated; ids must be unique and may not be ``x_a``.
Continuous families are discretized with ``k`` uncertainty qubits.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .csogas import ClassicalEstimatorConfig, csogas_run
from .dists import (
    Bernoulli,
    PerformanceDistribution,
    TruncatedExponential,
    TruncatedGaussian,
    Uniform,
    discretize,
)
from .qsub import Mode, SubroutineBackend
from .search import InternalError, ProblemInstance, RunResult, TraceRow, sogas_run

FAMILIES = ("bernoulli", "gaussian", "uniform", "exponential")
SWEEPS = ("size", "gap", "distribution", "single")
BACKENDS = {"contract": Mode.CONTRACT, "statevector-hybrid": Mode.STATEVECTOR}
METHODS = ("SOGAS", "CSOGAS")
Z95 = 1.96

BERNOULLI_RANGE = (0.78, 0.85)
GAUSSIAN_CENTERS = (0.46, 0.80)
UNIFORM_MEANS = (0.50, 0.81)
UNIFORM_HALF_WIDTH = 0.15
EXPONENTIAL_MEANS = (0.62, 0.83)
MIN_GAP = 1e-4

CSV_HEADER = (
    "method,sweep_value,mean_queries,ci95,pcs,queries_region,queries_flag,"
    "queries_estimate,queries_amplify,queries_classical"
)
PHASE_COLUMNS = {
    "queries_region": "optimal_region",
    "queries_flag": "flag_qae",
    "queries_estimate": "proportion_estimate",
    "queries_amplify": "amplify",
    "queries_classical": "classical_sampling",
}


class ConfigError(ValueError):
    """Invalid experiment configuration or instance file."""


# -- instances ------------------------------------------------------------------


def _jittered_uniform(lo: float, hi: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws on [lo, hi], redrawn until the maximum leads the runner-up by MIN_GAP."""
    if hi - lo <= 2 * MIN_GAP:
        raise ConfigError(f"range [{lo}, {hi}] too narrow")
    while True:
        means = rng.uniform(lo, hi, size)
        top = np.sort(means)[-2:]
        if size < 2 or top[1] - top[0] >= MIN_GAP:
            return means


def exponential_loc_for_mean(target: float, rate: float) -> float:
    """Shift ``loc`` so that the truncated exponential has mean ``target``."""
    lo, hi = 0.0, 1.0 - 1e-9
    if not TruncatedExponential(rate, lo).mean() <= target <= TruncatedExponential(rate, hi).mean():
        raise ConfigError(f"mean {target} unreachable with rate {rate}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if TruncatedExponential(rate, mid).mean() < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def family_distributions(
    family: str,
    size: int,
    rng: np.random.Generator,
    *,
    gaussian_sd: float = 0.08,
    exp_rate: float = 2.5,
) -> list[PerformanceDistribution]:
    if family == "bernoulli":
        return [Bernoulli(float(p)) for p in _jittered_uniform(*BERNOULLI_RANGE, size, rng)]
    if family == "gaussian":
        return [TruncatedGaussian(float(c), gaussian_sd) for c in np.linspace(*GAUSSIAN_CENTERS, size)]
    if family == "uniform":
        h = UNIFORM_HALF_WIDTH
        return [Uniform(float(m) - h, float(m) + h) for m in np.linspace(*UNIFORM_MEANS, size)]
    if family == "exponential":
        targets = np.linspace(*EXPONENTIAL_MEANS, size)
        return [TruncatedExponential(exp_rate, exponential_loc_for_mean(t, exp_rate)) for t in targets]
    raise ConfigError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def generate_instance(
    family: str,
    size: int,
    seed: int,
    *,
    eps: float = 0.1,
    delta: float = 0.05,
    k: int = 3,
    gaussian_sd: float = 0.08,
    exp_rate: float = 2.5,
) -> ProblemInstance:
    """Seeded benchmark instance; solution order is shuffled by the seed."""
    if size < 2:
        raise ConfigError("an instance needs at least two solutions")
    rng = np.random.default_rng(seed)
    dists = family_distributions(family, size, rng, gaussian_sd=gaussian_sd, exp_rate=exp_rate)
    order = rng.permutation(size)
    return ProblemInstance(
        [(f"s{i}", discretize(dists[j], k)) for i, j in enumerate(order)], eps, delta
    )


_KIND_ARITY = {"bernoulli": (1, 1), "gaussian": (2, 2), "uniform": (2, 2), "exponential": (1, 2)}


def parse_instance(text: str, eps: float, delta: float, *, k: int = 3) -> ProblemInstance:
    solutions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ConfigError(f"line {lineno}: expected 'id kind p1 [p2]'")
        sid, kind, params = parts[0], parts[1].lower(), parts[2:]
        if kind not in _KIND_ARITY:
            raise ConfigError(f"line {lineno}: unknown kind {kind!r}")
        lo, hi = _KIND_ARITY[kind]
        if not lo <= len(params) <= hi:
            raise ConfigError(f"line {lineno}: {kind} takes {lo}-{hi} parameters")
        try:
            vals = [float(p) for p in params]
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        ctor = {
            "bernoulli": Bernoulli,
            "gaussian": TruncatedGaussian,
            "uniform": Uniform,
            "exponential": TruncatedExponential,
        }[kind]
        try:
            solutions.append((sid, discretize(ctor(*vals), k)))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    try:
        return ProblemInstance(solutions, eps, delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_instance(path: str | os.PathLike, eps: float, delta: float, *, k: int = 3) -> ProblemInstance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read instance file: {exc}") from exc
    return parse_instance(text, eps, delta, k=k)


# -- configuration ----------------------------------------------------------------


@dataclass
class ExperimentConfig:
    sweep: str = "size"
    values: list = field(default_factory=lambda: [5, 10, 15, 20, 25])
    eps: float = 0.1
    delta: float = 0.05
    replications: int = 30
    seed: int = 0
    backend: str = "contract"
    cost_constant: float = 1.0
    family: str = "bernoulli"
    size: int = 25  # instance size for the gap sweep
    dist_size: int = 10  # instance size for the distribution sweep
    k: int = 3
    gaussian_sd: float = 0.08
    exp_rate: float = 2.5
    shots: int = 100
    classical: ClassicalEstimatorConfig = field(default_factory=ClassicalEstimatorConfig)
    workers: int = 1
    csv_path: str | None = None
    plot_path: str | None = None
    trace_path: str | None = None
    log_axes: bool = False

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {', '.join(SWEEPS)}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        for name in ("eps", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        if not self.cost_constant > 0:
            raise ConfigError("cost constant must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sweep == "distribution":
            self.values = [str(v) for v in self.values]
            for v in self.values:
                if v not in FAMILIES:
                    raise ConfigError(f"unknown family {v!r}")
        else:
            try:
                self.values = [_number(v) for v in self.values]
            except ValueError as exc:
                raise ConfigError(f"sweep values must be numeric: {exc}") from exc
            if self.sweep in ("size", "single") and any(
                v != int(v) or v < 2 for v in self.values
            ):
                raise ConfigError("size values must be integers >= 2")
            if self.sweep == "gap" and any(v <= 1 for v in self.values):
                raise ConfigError("inverse-gap values must exceed 1")

    def instance_for(self, value) -> ProblemInstance:
        kw = dict(delta=self.delta, k=self.k, gaussian_sd=self.gaussian_sd, exp_rate=self.exp_rate)
        if self.sweep in ("size", "single"):
            return generate_instance(self.family, int(value), self.seed, eps=self.eps, **kw)
        if self.sweep == "gap":
            return generate_instance(self.family, self.size, self.seed, eps=1.0 / value, **kw)
        return generate_instance(value, self.dist_size, self.seed, eps=self.eps, **kw)


def _number(v):
    x = float(v)
    return int(x) if x == int(x) else x


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    return str(int(v)) if float(v) == int(v) else repr(float(v))


# -- replications ------------------------------------------------------------------


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def replication_seed(seed: int, method: str, value, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [seed, _stable_hash(method), _stable_hash(format_value(value)), rep]
    )


@dataclass
class Replication:
    method: str
    value: object
    index: int
    total: int
    phases: dict[str, int]
    correct: bool
    selected: str
    trace: list[TraceRow]
    error: str | None = None


def run_replication(instance: ProblemInstance, method: str, cfg: ExperimentConfig, value, rep: int) -> Replication:
    rng = np.random.default_rng(replication_seed(cfg.seed, method, value, rep))
    if method == "SOGAS":
        backend = SubroutineBackend(BACKENDS[cfg.backend], cfg.cost_constant, cfg.shots)
        res: RunResult = sogas_run(instance, backend, rng)
    else:
        res = csogas_run(instance, cfg.classical, rng)
    return Replication(
        method=method,
        value=value,
        index=rep,
        total=res.ledger.total,
        phases=dict(res.ledger.counts),
        correct=res.correct,
        selected=res.selected,
        trace=res.region_trace,
        error=res.error,
    )


def _task(args):
    instance, method, cfg, value, rep = args
    try:
        return run_replication(instance, method, cfg, value, rep)
    except (InternalError, ArithmeticError, RuntimeError) as exc:
        raise InternalError(
            f"replication {rep} of {method} at sweep value {format_value(value)} "
            f"(seed {cfg.seed}) failed: {exc}"
        ) from exc


@dataclass
class ExperimentRow:
    method: str
    sweep_value: str
    mean_queries: float
    ci95: float
    pcs: float
    queries_region: float
    queries_flag: float
    queries_estimate: float
    queries_amplify: float
    queries_classical: float


def aggregate(method: str, value, reps: Sequence[Replication]) -> ExperimentRow:
    totals = np.array([r.total for r in reps], dtype=float)
    n = len(reps)
    ci = Z95 * float(np.std(totals, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    phase_means = {
        col: float(np.mean([r.phases.get(phase, 0) for r in reps]))
        for col, phase in PHASE_COLUMNS.items()
    }
    return ExperimentRow(
        method=method,
        sweep_value=format_value(value),
        mean_queries=float(totals.mean()),
        ci95=ci,
        pcs=sum(r.correct for r in reps) / n,
        **phase_means,
    )


@dataclass
class SweepResult:
    rows: list[ExperimentRow]
    replications: list[Replication]

    def traces(self):
        for rep in self.replications:
            yield rep, rep.trace


def run_cells(cfg: ExperimentConfig) -> SweepResult:
    tasks = []
    for value in cfg.values:
        instance = cfg.instance_for(value)
        for method in METHODS:
            tasks += [(instance, method, cfg, value, i) for i in range(cfg.replications)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        results = [_task(t) for t in tasks]
    rows = []
    for value in cfg.values:
        for method in METHODS:
            cell = [r for r in results if r.method == method and r.value == value]
            rows.append(aggregate(method, value, cell))
    return SweepResult(rows, results)


def run_sweep(cfg: ExperimentConfig) -> list[ExperimentRow]:
    return run_cells(cfg).rows


# -- output ---------------------------------------------------------------------


def rows_csv(rows: Sequence[ExperimentRow]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        vals = [getattr(row, f.name) for f in fields(row)]
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def emit_csv(rows: Sequence[ExperimentRow], path: str | os.PathLike) -> Path:
    if not rows:
        raise ConfigError("no rows to write")
    path = Path(path)
    path.write_text(rows_csv(rows))
    return path


def read_csv(path: str | os.PathLike) -> list[ExperimentRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if ",".join(reader.fieldnames or []) != CSV_HEADER:
            raise ConfigError("unexpected CSV header")
        return [
            ExperimentRow(
                **{
                    k: (v if k in ("method", "sweep_value") else float(v))
                    for k, v in rec.items()
                }
            )
            for rec in reader
        ]


def trace_rows_csv(replications: Sequence[Replication]) -> str:
    lines = ["method,sweep_value,replication,t,a,b,r_t,branch"]
    for rep in replications:
        for row in rep.trace:
            lines.append(
                f"{rep.method},{format_value(rep.value)},{rep.index},"
                f"{row.t},{float(row.a)!r},{float(row.b)!r},{float(row.r)!r},{row.branch}"
            )
    return "\n".join(lines) + "\n"


def series(rows: Sequence[ExperimentRow]) -> tuple[list[str], dict[str, list[tuple[float, float]]]]:
    """Sweep values in first-seen order and per-method (mean, ci95) pairs."""
    xs: list[str] = []
    for r in rows:
        if r.sweep_value not in xs:
            xs.append(r.sweep_value)
    out = {}
    for method in METHODS:
        by_x = {r.sweep_value: (r.mean_queries, r.ci95) for r in rows if r.method == method}
        if by_x:
            out[method] = [by_x[x] for x in xs]
    return xs, out


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def advantage_ratios(rows: Sequence[ExperimentRow]) -> dict[str, float]:
    """CSOGAS / SOGAS mean-query ratio per sweep value."""
    xs, s = series(rows)
    if set(METHODS) - set(s):
        return {}
    return {x: c[0] / q[0] for x, q, c in zip(xs, s["SOGAS"], s["CSOGAS"])}


def emit_plot(
    rows: Sequence[ExperimentRow],
    path: str | os.PathLike,
    *,
    log_axes: bool = False,
    title: str = "",
) -> tuple[Path, Path]:
    """SVG chart plus a whitespace-separated ``.dat`` companion."""
    from .plot import bar_chart, line_chart

    if not rows:
        raise ConfigError("no rows to plot")
    path = Path(path)
    xs, s = series(rows)
    numeric = all(_is_number(x) for x in xs)
    if numeric:
        svg = line_chart([float(x) for x in xs], s, log_axes=log_axes, title=title)
    else:
        svg = bar_chart(xs, s, title=title)
    path.write_text(svg)
    dat = path.with_suffix(".dat")
    header = "# sweep_value " + " ".join(f"{m} {m}_ci95" for m in s)
    lines = [header]
    for i, x in enumerate(xs):
        lines.append(" ".join([x] + [f"{s[m][i][0]!r} {s[m][i][1]!r}" for m in s]))
    dat.write_text("\n".join(lines) + "\n")
    return path, dat


def _is_number(x: str) -> bool:
    try:
        float(x)
    except ValueError:
        return False
    return True
