"""Bounded performance distributions and their quantum/classical oracles.

Every family is supported on [0, 1]. ``discretize`` maps a family onto the
midpoints of ``2**k`` equal cells; the resulting table is shared by the
quantum state preparation and the classical sampler, so both methods see
the same law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .qcore import RY, Gate, QubitLayout, StateVector, apply_circuit, controlled_on_value

MAX_UNCERTAINTY_QUBITS = 6


class InvalidDistributionError(ValueError):
    pass


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise InvalidDistributionError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    def mean(self) -> float:
        return self.p


@dataclass(frozen=True)
class TruncatedGaussian:
    """Normal(center, sd) restricted to [0, 1] and renormalised."""

    center: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise InvalidDistributionError(f"Gaussian sd must be positive, got {self.sd}")
        if self._raw_cdf(1.0) - self._raw_cdf(0.0) <= 1e-300:
            raise InvalidDistributionError("Gaussian places no mass on [0, 1]")

    def _raw_cdf(self, y: float) -> float:
        return _phi((y - self.center) / self.sd)

    def cdf(self, y: float) -> float:
        lo, hi = self._raw_cdf(0.0), self._raw_cdf(1.0)
        y = min(max(y, 0.0), 1.0)
        return (self._raw_cdf(y) - lo) / (hi - lo)

    def mean(self) -> float:
        a, b = (0.0 - self.center) / self.sd, (1.0 - self.center) / self.sd
        pdf = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)  # noqa: E731
        z = _phi(b) - _phi(a)
        return self.center + self.sd * (pdf(a) - pdf(b)) / z


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise InvalidDistributionError(
                f"Uniform needs 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})"
            )

    def cdf(self, y: float) -> float:
        return min(max((y - self.lo) / (self.hi - self.lo), 0.0), 1.0)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class TruncatedExponential:
    """Exponential(rate) shifted to start at ``loc`` and truncated at 1."""

    rate: float
    loc: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise InvalidDistributionError(f"exponential rate must be positive, got {self.rate}")
        if not 0.0 <= self.loc < 1.0:
            raise InvalidDistributionError(f"exponential loc must lie in [0, 1), got {self.loc}")

    def cdf(self, y: float) -> float:
        if y <= self.loc:
            return 0.0
        y = min(y, 1.0)
        total = -math.expm1(-self.rate * (1.0 - self.loc))
        return -math.expm1(-self.rate * (y - self.loc)) / total

    def mean(self) -> float:
        w = 1.0 - self.loc
        lam = self.rate
        return self.loc + 1.0 / lam - w * math.exp(-lam * w) / -math.expm1(-lam * w)


PerformanceDistribution = Bernoulli | TruncatedGaussian | Uniform | TruncatedExponential


@dataclass(frozen=True, eq=False)
class DiscretizedDistribution:
    points: np.ndarray
    probs: np.ndarray
    k: int

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if points.shape != (1 << self.k,) or probs.shape != points.shape:
            raise InvalidDistributionError("table must have 2**k points and probabilities")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidDistributionError("probabilities must be non-negative and sum to 1")
        if np.any(points < 0) or np.any(points > 1):
            raise InvalidDistributionError("support points must lie in [0, 1]")
        points.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probs", probs)

    @cached_property
    def exact_mean(self) -> float:
        return float(np.dot(self.points, self.probs))

    @cached_property
    def variance(self) -> float:
        return float(np.dot(self.probs, (self.points - self.exact_mean) ** 2))

    @cached_property
    def cdf_table(self) -> np.ndarray:
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    @classmethod
    def point_mass(cls, value: float, k: int = 1) -> DiscretizedDistribution:
        """All mass on ``value``, stored in the cell that contains it."""
        n = 1 << k
        cell = min(int(value * n), n - 1)
        points = (np.arange(n) + 0.5) / n
        points[cell] = value
        probs = np.zeros(n)
        probs[cell] = 1.0
        return cls(points, probs, k)


def discretize(dist: PerformanceDistribution, k: int = 3) -> DiscretizedDistribution:
    """Table of ``2**k`` cell midpoints with the cell masses of ``dist``.

    Bernoulli laws are already discrete: their two atoms are stored exactly
    at 0 and 1 in the first and last cells, whatever ``k`` is.
    """
    if not 1 <= k <= MAX_UNCERTAINTY_QUBITS:
        raise InvalidDistributionError(f"k must lie in [1, {MAX_UNCERTAINTY_QUBITS}], got {k}")
    n = 1 << k
    points = (np.arange(n) + 0.5) / n
    if isinstance(dist, Bernoulli):
        points[0], points[-1] = 0.0, 1.0
        probs = np.zeros(n)
        probs[0], probs[-1] = 1.0 - dist.p, dist.p
        return DiscretizedDistribution(points, probs, k)
    edges = np.linspace(0.0, 1.0, n + 1)
    cdf = np.array([dist.cdf(e) for e in edges])
    cdf[0], cdf[-1] = 0.0, 1.0
    probs = np.clip(np.diff(cdf), 0.0, None)
    total = probs.sum()
    if total <= 0:
        raise InvalidDistributionError(f"{dist} has no mass on [0, 1]")
    return DiscretizedDistribution(points, probs / total, k)


def sample_classical(d: DiscretizedDistribution, rng: np.random.Generator) -> float:
    """One draw from the table by inverse CDF."""
    j = int(np.searchsorted(d.cdf_table, rng.random(), side="right"))
    return float(d.points[min(j, d.points.size - 1)])


def sample_many(d: DiscretizedDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    j = np.searchsorted(d.cdf_table, rng.random(n), side="right")
    return d.points[np.minimum(j, d.points.size - 1)]


# -- quantum oracle -------------------------------------------------------------


def _loading_gates(probs: np.ndarray, qubits: list[int]) -> list[Gate]:
    """Binary tree of controlled RY rotations loading sqrt(probs) onto ``qubits``.

    ``qubits`` is LSB first; the tree branches on the most significant qubit.
    """
    k = len(qubits)
    gates: list[Gate] = []
    for level in range(k):
        q = qubits[k - 1 - level]
        parents = qubits[k - level :]
        block = 1 << (k - level)
        for prefix in range(1 << level):
            chunk = probs[prefix * block : (prefix + 1) * block]
            total = chunk.sum()
            if total <= 0:
                continue
            upper = chunk[block // 2 :].sum()
            theta = 2.0 * math.asin(math.sqrt(min(1.0, upper / total)))
            if theta == 0.0:
                continue
            gates += controlled_on_value(RY(q, theta), parents, prefix)
    return gates


@dataclass(frozen=True, eq=False)
class SolutionOracle:
    """State preparation ``|0>_XI |0>_Y -> sum_j sqrt(p_j) |j>_XI |y_j>_Y``.

    The objective qubit Y carries ``y_j`` as its |1>-probability conditioned
    on the noise value ``j``, so its total |1>-probability is the mean.
    """

    discretized: DiscretizedDistribution

    @property
    def k(self) -> int:
        return self.discretized.k

    @property
    def layout(self) -> QubitLayout:
        return QubitLayout([("XI", self.k), ("Y", 1)])

    def gates(self, xi_qubits: list[int], y_qubit: int) -> list[Gate]:
        d = self.discretized
        out = _loading_gates(d.probs, xi_qubits)
        for j, (p, y) in enumerate(zip(d.probs, d.points)):
            if p <= 0 or y <= 0:
                continue
            theta = 2.0 * math.asin(math.sqrt(min(1.0, y)))
            out += controlled_on_value(RY(y_qubit, theta), xi_qubits, j)
        return out

    @cached_property
    def prep(self) -> list[Gate]:
        return self.gates(list(range(self.k)), self.k)

    def prepared_state(self) -> StateVector:
        return apply_circuit(StateVector(self.layout), self.prep)


def build_oracle(d: DiscretizedDistribution) -> SolutionOracle:
    return SolutionOracle(d)
