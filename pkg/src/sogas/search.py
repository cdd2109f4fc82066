"""Grover adaptive search for fixed-confidence simulation optimization.

``sogas_run`` first narrows an interval containing the optimal mean with
``optimal_region`` (a binary search driven by flagged-proportion
estimates), then flags every solution whose estimated mean clears a
threshold just below that interval and amplifies the flagged set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dists import DiscretizedDistribution, SolutionOracle, build_oracle
from .qsub import (
    FlagProcedure,
    Mode,
    QueryLedger,
    SubroutineBackend,
    amplify,
    contract_draw,
    contract_exceed_probability,
    estimate_proportion,
    qae_charge,
    qae_mean,
)

AUX_ID = "x_a"
SHRINK = 11.0 / 16.0
_LOG2_SNAP = 1e-12


class InternalError(RuntimeError):
    """Raised when a loop invariant that the analysis guarantees is broken."""


def ceil_log2(x: float) -> int:
    """``ceil(log2(x))`` with values within 1e-12 of an integer snapped to it."""
    v = math.log2(x)
    r = round(v)
    if abs(v - r) <= _LOG2_SNAP:
        return int(r)
    return math.ceil(v)


def precision_exponent(eta: float) -> int:
    """``m = ceil(log2(1 / (2 eta))) + 2``."""
    return ceil_log2(1.0 / (2.0 * eta)) + 2


def iteration_bound(eps: float) -> int:
    """Upper bound on the number of region-search iterations for gap ``eps``."""
    return math.ceil(math.log(2.0 / eps) / math.log(16.0 / 11.0))


@dataclass
class Solution:
    id: str
    dist: DiscretizedDistribution
    _oracle: SolutionOracle | None = field(default=None, repr=False, compare=False)

    @property
    def mean(self) -> float:
        return self.dist.exact_mean

    @property
    def oracle(self) -> SolutionOracle:
        if self._oracle is None:
            self._oracle = build_oracle(self.dist)
        return self._oracle


@dataclass
class ProblemInstance:
    solutions: list[Solution]
    eps: float
    delta: float

    def __post_init__(self):
        self.solutions = [
            s if isinstance(s, Solution) else Solution(str(s[0]), s[1]) for s in self.solutions
        ]
        if len(self.solutions) < 2:
            raise ValueError("a problem instance needs at least two solutions")
        ids = [s.id for s in self.solutions]
        if len(set(ids)) != len(ids):
            raise ValueError("solution ids must be unique")
        if AUX_ID in ids:
            raise ValueError(f"solution id {AUX_ID!r} is reserved")
        for name in ("eps", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    @property
    def size(self) -> int:
        return len(self.solutions)

    @property
    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.solutions])

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    def index(self, sid: str) -> int:
        for i, s in enumerate(self.solutions):
            if s.id == sid:
                return i
        raise KeyError(sid)

    def is_eps_optimal(self, sid: str, eps: float | None = None) -> bool:
        eps = self.eps if eps is None else eps
        return self.best_mean - self.solutions[self.index(sid)].mean <= eps


_AUX_DIST = DiscretizedDistribution.point_mass(1.0)


def augmented(solutions: Sequence[Solution]) -> list[Solution]:
    """Solutions plus the auxiliary point mass at 1, appended as the last index."""
    return list(solutions) + [Solution(AUX_ID, _AUX_DIST)]


@dataclass(frozen=True)
class Region:
    a: float
    b: float

    def __post_init__(self):
        if not 0.0 <= self.a <= self.b <= 1.0:
            raise ValueError(f"invalid region [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def __contains__(self, y: float) -> bool:
        return self.a <= y <= self.b


@dataclass(frozen=True)
class FlagParams:
    ell: float
    eta: float
    kappa: float
    n_solutions: int

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.n_solutions < 1:
            raise ValueError("need at least one solution")

    @property
    def gap(self) -> float:
        return 2.0 * self.eta

    @property
    def m(self) -> int:
        return ceil_log2(1.0 / self.gap) + 2

    @property
    def step(self) -> float:
        """``2**-m``."""
        return 2.0 ** -self.m

    @property
    def alpha(self) -> float:
        return self.kappa**2 / (4.0 * self.n_solutions**3)

    @property
    def lower(self) -> float:
        return self.ell + self.eta - 2.0 * self.step

    @property
    def upper(self) -> float:
        return self.ell + self.eta - self.step

    @property
    def midpoint(self) -> float:
        return self.ell + self.eta - 1.5 * self.step

    @property
    def qae_precision(self) -> float:
        return self.step / 3.0


@dataclass
class FlagAssignment:
    ids: list[str]
    flags: np.ndarray  # realised 0/1 labels
    label_probs: np.ndarray  # per-solution probability of carrying the label
    estimates: np.ndarray
    classes: np.ndarray  # ground truth 1 / 2 / 3 from exact means
    cost: int  # oracle queries per invocation of the flag procedure

    @property
    def p_label(self) -> float:
        return float(self.label_probs.mean())

    @property
    def q_label(self) -> float:
        """Labelled mass of the ideal state: S1 fully, S3 at its realised label mass."""
        ideal = np.where(self.classes == 1, 1.0, np.where(self.classes == 2, 0.0, self.label_probs))
        return float(ideal.mean())

    def procedure(self) -> FlagProcedure:
        return FlagProcedure(self.label_probs, self.cost)


def classify(means: np.ndarray, params: FlagParams) -> np.ndarray:
    means = np.asarray(means)
    return np.where(means >= params.upper, 1, np.where(means < params.lower, 2, 3))


def flag_oracle(
    solutions: Sequence[Solution],
    params: FlagParams,
    backend: SubroutineBackend,
    ledger: QueryLedger,
    rng: np.random.Generator,
    *,
    phase: str = "flag_qae",
) -> FlagAssignment:
    """Label solutions whose estimated mean clears the threshold midpoint.

    Every solution's mean is estimated to ``2**-m / 3`` with risk ``alpha``
    and clipped to [0, 1]; the label is ``estimate >= midpoint``.

    Under ``CONTRACT`` the procedure is the coherent one: a single mean
    estimation acts on the whole superposition, so one invocation costs one
    estimation charge and each solution's label mass is the exact
    probability that its estimate clears the midpoint. Under
    ``STATEVECTOR`` each solution is estimated and measured separately
    (hybrid mode); the labels are then classical and the flag procedure
    costs one lookup query per invocation.
    """
    if params.n_solutions != len(solutions):
        raise ValueError("flag parameters were built for a different solution count")
    eps, alpha, mid = params.qae_precision, params.alpha, params.midpoint
    means = np.array([s.mean for s in solutions])
    if backend.mode is Mode.CONTRACT:
        cost = qae_charge(eps, alpha, backend.cost_constant)
        ledger.charge(phase, cost)
        estimates = np.array([contract_draw(mu, eps, alpha, rng) for mu in means])
        label_probs = np.array(
            [contract_exceed_probability(mu, eps, alpha, mid) for mu in means]
        )
        flags = (estimates >= mid).astype(int)
    else:
        estimates = np.array(
            [qae_mean(s.oracle, eps, alpha, backend, ledger, rng, phase=phase) for s in solutions]
        )
        flags = (np.clip(estimates, 0.0, 1.0) >= mid).astype(int)
        label_probs = flags.astype(float)
        cost = 1
    return FlagAssignment(
        ids=[s.id for s in solutions],
        flags=flags,
        label_probs=label_probs,
        estimates=estimates,
        classes=classify(means, params),
        cost=cost,
    )


@dataclass(frozen=True)
class TraceRow:
    t: int
    a: float
    b: float
    r: float
    branch: int

    @property
    def width(self) -> float:
        return self.b - self.a


@dataclass
class RegionSearch:
    region: Region
    trace: list[TraceRow]
    next_regions: list[Region]


def region_search(
    eps: float,
    delta: float,
    n_solutions: int,
    proportion: Callable[[int, FlagParams, float], float],
) -> RegionSearch:
    """Binary search for an interval of width < eps/2 holding the optimal mean.

    ``proportion(t, params, delta_t)`` returns the estimated labelled
    proportion of the augmented solution set at iteration ``t``.
    """
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise ValueError("eps and delta must lie in (0, 1)")
    guard = 2 * iteration_bound(eps)
    threshold = 3.0 / (2.0 * (n_solutions + 1))
    a, b = 0.0, 1.0
    trace: list[TraceRow] = []
    regions: list[Region] = []
    t = 0
    while b - a >= eps / 2.0:
        if t >= guard:
            raise InternalError(f"region search exceeded {guard} iterations")
        eta = (b - a) / 4.0
        ell = (a + b) / 2.0
        delta_t = delta / 2.0 ** (t + 1)
        params = FlagParams(ell, eta, 0.1 * delta_t, n_solutions + 1)
        r = proportion(t, params, delta_t)
        m = precision_exponent(eta)
        if r > threshold:
            branch = 1
            new = (ell + eta - 2.0 ** (1 - m), b)
        else:
            branch = 2
            new = (a, ell + eta - 2.0**-m)
        trace.append(TraceRow(t, a, b, r, branch))
        a, b = max(0.0, new[0]), min(1.0, new[1])
        regions.append(Region(a, b))
        t += 1
    return RegionSearch(Region(a, b), trace, regions)


def optimal_region(
    instance: ProblemInstance,
    eps: float,
    delta_param: float,
    backend: SubroutineBackend,
    ledger: QueryLedger,
    rng: np.random.Generator,
) -> RegionSearch:
    solutions = augmented(instance.solutions)

    def proportion(t, params, delta_t):
        flags = flag_oracle(solutions, params, backend, ledger, rng, phase="optimal_region")
        return estimate_proportion(flags.procedure(), 0.1, delta_t, backend, ledger, rng)

    return region_search(eps, delta_param, instance.size, proportion)


def final_flag_params(region: Region, eps: float, kappa: float, n_solutions: int) -> FlagParams:
    """Flag parameters for the selection step; a collapsed region uses eta = eps/8."""
    eta = region.width / 4.0
    if eta <= 0.0:
        eta = eps / 8.0
    ell = region.a - 0.75 * eta
    return FlagParams(ell, eta, kappa, n_solutions)


@dataclass
class RunResult:
    selected: str
    ledger: QueryLedger
    final_region: Region
    region_trace: list[TraceRow]
    correct: bool
    method: str = "SOGAS"
    flags: FlagAssignment | None = None
    error: str | None = None

    @property
    def iterations(self) -> int:
        return len(self.region_trace)


def sogas_run(
    instance: ProblemInstance,
    backend: SubroutineBackend,
    rng: np.random.Generator,
) -> RunResult:
    eps, delta = instance.eps, instance.delta
    ledger = QueryLedger()
    search = optimal_region(instance, eps, delta / 2.0, backend, ledger, rng)
    params = final_flag_params(search.region, eps, 0.01 * delta, instance.size)
    flags = flag_oracle(instance.solutions, params, backend, ledger, rng)
    chosen = amplify(flags.procedure(), delta / 2.0, backend, ledger, rng)
    sid = instance.solutions[chosen].id
    return RunResult(
        selected=sid,
        ledger=ledger,
        final_region=search.region,
        region_trace=search.trace,
        correct=instance.is_eps_optimal(sid),
        flags=flags,
    )


def trace_csv(trace: Sequence[TraceRow]) -> str:
    lines = ["t,a,b,r_t,branch"]
    lines += [
        f"{row.t},{float(row.a)!r},{float(row.b)!r},{float(row.r)!r},{row.branch}" for row in trace
    ]
    return "\n".join(lines) + "\n"
