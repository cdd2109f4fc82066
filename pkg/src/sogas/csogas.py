"""Classical benchmark: the same search with sample-average estimation.

Each mean is estimated from i.i.d. draws of the solution's discretized
table. The sample size starts at a fixed fraction of the Hoeffding bound
and grows in batches until an empirical-Bernstein half-width falls below
the target precision, never exceeding the Hoeffding bound itself.

Sampling is simulated exactly on the count vector of the table: block
increments are multinomial, and a block is only refined (via multivariate
hypergeometric bridges) when a lower bound on the half-width over the
block does not rule out stopping inside it. The stopping time and the
returned mean have the same law as drawing samples one at a time, at a
cost that does not grow with the number of samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dists import DiscretizedDistribution, sample_many
from .qsub import QueryLedger
from .search import (
    FlagParams,
    InternalError,
    ProblemInstance,
    RunResult,
    Solution,
    augmented,
    classify,
    final_flag_params,
    region_search,
)


@dataclass(frozen=True)
class ClassicalEstimatorConfig:
    min_fraction: float = 0.1
    batch_size: int = 16
    variance_slack: float = 1.0
    charge_proportion: bool = False

    def __post_init__(self):
        if not 0.0 < self.min_fraction <= 1.0:
            raise ValueError("min_fraction must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.variance_slack > 0:
            raise ValueError("variance_slack must be positive")


def hoeffding_bound(eps: float, delta: float) -> int:
    return math.ceil(math.log(2.0 / delta) / (2.0 * eps * eps))


def bernstein_halfwidth(var: float, n: int, delta: float, slack: float = 1.0) -> float:
    log_term = math.log(3.0 / delta)
    return math.sqrt(2.0 * slack * max(var, 0.0) * log_term / n) + 3.0 * log_term / n


@dataclass
class _Path:
    """Checkpoint grid n0, n0 + b, n0 + 2b, ..., capped at the Hoeffding bound."""

    n0: int
    batch: int
    cap: int
    eps: float
    log_term: float
    slack: float
    y: np.ndarray
    y2: np.ndarray

    @property
    def last(self) -> int:
        return math.ceil((self.cap - self.n0) / self.batch) if self.cap > self.n0 else 0

    def n(self, j: int) -> int:
        return min(self.n0 + j * self.batch, self.cap)

    def halfwidth(self, n: int, counts: np.ndarray) -> float:
        s, q = counts @ self.y, counts @ self.y2
        var = max(0.0, q / n - (s / n) ** 2)
        return math.sqrt(2.0 * self.slack * var * self.log_term / n) + 3.0 * self.log_term / n

    def stops(self, n: int, counts: np.ndarray) -> bool:
        return n >= self.cap or self.halfwidth(n, counts) <= self.eps

    def may_stop_within(self, n_lo, c_lo, n_hi, c_hi) -> bool:
        # For n in (n_lo, n_hi] the running mean lies in [mu_lo, mu_hi] because
        # partial sums of nonnegative points are monotone. Writing the variance
        # about the centre c of that range, var_n = Q_n(c)/n - (mean_n - c)^2,
        # where Q_n(c) = sum (y_i - c)^2 only grows with n.
        mu_lo, mu_hi = (c_lo @ self.y) / n_hi, (c_hi @ self.y) / (n_lo + 1)
        c = 0.5 * (mu_lo + mu_hi)
        var_lb = (c_lo @ (self.y - c) ** 2) / n_hi - (0.5 * (mu_hi - mu_lo)) ** 2
        lb = math.sqrt(2.0 * self.slack * max(var_lb, 0.0) * self.log_term / n_hi)
        return lb + 3.0 * self.log_term / n_hi <= self.eps


def _first_stop(path: _Path, j_lo, c_lo, j_hi, c_hi, rng):
    n_lo, n_hi = path.n(j_lo), path.n(j_hi)
    if j_hi == j_lo + 1:
        return (n_hi, c_hi) if path.stops(n_hi, c_hi) else None
    if not path.may_stop_within(n_lo, c_lo, n_hi, c_hi):
        return (n_hi, c_hi) if n_hi >= path.cap else None
    j_mid = (j_lo + j_hi) // 2
    draw = rng.multivariate_hypergeometric(c_hi - c_lo, path.n(j_mid) - n_lo)
    c_mid = c_lo + draw
    return _first_stop(path, j_lo, c_lo, j_mid, c_mid, rng) or _first_stop(
        path, j_mid, c_mid, j_hi, c_hi, rng
    )


def sample_path_stop(
    d: DiscretizedDistribution,
    eps: float,
    delta: float,
    cfg: ClassicalEstimatorConfig,
    rng: np.random.Generator,
    *,
    block_growth: float = 1.0 / 16.0,
) -> tuple[int, float]:
    """(samples drawn, sample mean) of one adaptive estimation call."""
    cap = hoeffding_bound(eps, delta)
    n0 = min(cap, math.ceil(cfg.min_fraction * cap))
    support = d.probs > 0
    y = d.points[support]
    probs = d.probs[support] / d.probs[support].sum()
    path = _Path(n0, cfg.batch_size, cap, eps, math.log(3.0 / delta), cfg.variance_slack, y, y * y)

    counts = rng.multinomial(n0, probs)
    if path.stops(n0, counts):
        return n0, float(counts @ y) / n0
    j = 0
    while j < path.last:
        n = path.n(j)
        target = max(n + cfg.batch_size, math.ceil(n * (1.0 + block_growth)))
        j_next = min(path.last, math.ceil((target - n0) / cfg.batch_size))
        nxt = counts + rng.multinomial(path.n(j_next) - n, probs)
        hit = _first_stop(path, j, counts, j_next, nxt, rng)
        if hit is not None:
            n_stop, c_stop = hit
            return n_stop, float(c_stop @ y) / n_stop
        j, counts = j_next, nxt
    raise InternalError("adaptive sampling passed the Hoeffding cap")


def sequential_reference(
    d: DiscretizedDistribution,
    eps: float,
    delta: float,
    cfg: ClassicalEstimatorConfig,
    rng: np.random.Generator,
) -> tuple[int, float]:
    """The same rule evaluated on explicitly drawn samples (slow; for testing)."""
    cap = hoeffding_bound(eps, delta)
    n = min(cap, math.ceil(cfg.min_fraction * cap))
    draws = sample_many(d, n, rng)
    s, q = float(draws.sum()), float((draws**2).sum())
    while True:
        var = q / n - (s / n) ** 2
        if n >= cap or bernstein_halfwidth(var, n, delta, cfg.variance_slack) <= eps:
            return n, s / n
        step = min(cfg.batch_size, cap - n)
        draws = sample_many(d, step, rng)
        s, q = s + float(draws.sum()), q + float((draws**2).sum())
        n += step


def classical_mean(
    d: DiscretizedDistribution,
    eps: float,
    delta: float,
    cfg: ClassicalEstimatorConfig,
    ledger: QueryLedger,
    rng: np.random.Generator,
    *,
    phase: str = "classical_sampling",
) -> float:
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("eps and delta must lie in (0, 1)")
    n, mean = sample_path_stop(d, eps, delta, cfg, rng)
    ledger.charge(phase, n)
    return mean


@dataclass
class ClassicalFlags:
    flags: np.ndarray
    estimates: np.ndarray
    classes: np.ndarray
    samples: int


def classical_flags(
    solutions: list[Solution],
    params: FlagParams,
    cfg: ClassicalEstimatorConfig,
    ledger: QueryLedger,
    rng: np.random.Generator,
) -> ClassicalFlags:
    before = ledger.total
    est = np.array(
        [classical_mean(s.dist, params.qae_precision, params.alpha, cfg, ledger, rng) for s in solutions]
    )
    flags = (np.clip(est, 0.0, 1.0) >= params.midpoint).astype(int)
    means = np.array([s.mean for s in solutions])
    return ClassicalFlags(flags, est, classify(means, params), ledger.total - before)


def _proportion_charge(p: float, delta: float, per_draw: float, rel_eps: float = 0.1) -> int:
    # Multiplicative Chernoff sample count for a relative estimate of p by
    # sampling solutions, each draw costing one average flag evaluation.
    draws = math.ceil(3.0 * math.log(2.0 / delta) / (rel_eps * rel_eps * max(p, 1e-12)))
    return math.ceil(draws * per_draw)


def csogas_run(
    instance: ProblemInstance,
    cfg: ClassicalEstimatorConfig,
    rng: np.random.Generator,
) -> RunResult:
    eps, delta = instance.eps, instance.delta
    ledger = QueryLedger()
    solutions = augmented(instance.solutions)

    def proportion(t, params, delta_t):
        cf = classical_flags(solutions, params, cfg, ledger, rng)
        r = float(cf.flags.mean())
        if cfg.charge_proportion:
            ledger.charge("classical_sampling", _proportion_charge(r, delta_t, cf.samples / len(solutions)))
        return r

    search = region_search(eps, delta / 2.0, instance.size, proportion)
    params = final_flag_params(search.region, eps, 0.01 * delta, instance.size)
    cf = classical_flags(instance.solutions, params, cfg, ledger, rng)
    error = None
    if not cf.flags.any():
        wider = FlagParams(params.ell, 2.0 * params.eta, params.kappa, params.n_solutions)
        cf = classical_flags(instance.solutions, wider, cfg, ledger, rng)
    if cf.flags.any():
        chosen = int(rng.choice(np.flatnonzero(cf.flags)))
        sid = instance.solutions[chosen].id
        correct = instance.is_eps_optimal(sid)
    else:
        sid, correct, error = "", False, "no solution flagged after widening the window"
    return RunResult(
        selected=sid,
        ledger=ledger,
        final_region=search.region,
        region_trace=search.trace,
        correct=correct,
        method="CSOGAS",
        error=error,
    )
