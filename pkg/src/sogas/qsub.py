"""Quantum subroutines with query accounting.

Three subroutines back the search: mean estimation of one solution's
oracle, amplitude amplification of a flag procedure, and estimation of the
flagged proportion. Each runs under one of two backends:

* ``STATEVECTOR`` simulates the circuits and charges one query per
  application of the underlying procedure or its inverse.
* ``CONTRACT`` draws the output from the subroutine's (eps, delta)
  guarantee and charges the closed-form query count.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from .dists import SolutionOracle, _loading_gates
from .qcore import (
    RY,
    H,
    QubitLayout,
    StateVector,
    apply_circuit,
    controlled_on_value,
    measure_register,
    phase_flip,
)

PHASES = ("optimal_region", "flag_qae", "proportion_estimate", "amplify", "classical_sampling")


class PreconditionError(RuntimeError):
    """A subroutine was called outside its guarantee (signals an upstream bug)."""


@dataclass
class QueryLedger:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(PHASES, 0))

    def charge(self, phase: str, n: int) -> None:
        if phase not in self.counts:
            raise KeyError(f"unknown ledger phase {phase!r}")
        if n < 0:
            raise ValueError("query charges are non-negative")
        self.counts[phase] += int(n)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, phase: str) -> int:
        return self.counts[phase]


class Mode(str, Enum):
    STATEVECTOR = "statevector"
    CONTRACT = "contract"


@dataclass(frozen=True)
class SubroutineBackend:
    mode: Mode = Mode.CONTRACT
    cost_constant: float = 1.0
    shots: int = 100  # per iterative-estimation round, statevector only

    def __post_init__(self):
        if not self.cost_constant > 0:
            raise ValueError("cost constant must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))


CONTRACT = SubroutineBackend(Mode.CONTRACT)
STATEVECTOR = SubroutineBackend(Mode.STATEVECTOR)


def _check_unit(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")


# -- closed-form charges --------------------------------------------------------


def qae_charge(eps: float, delta: float, c: float = 1.0) -> int:
    return math.ceil(c * (1.0 / eps) * math.log(1.0 / delta))


def amplify_charge(cost: int, p_label: float, delta: float, c: float = 1.0) -> int:
    return math.ceil(c * (cost / math.sqrt(p_label)) * math.log(1.0 / delta))


def estimate_charge(cost: int, p_label: float, rel_eps: float, delta: float, c: float = 1.0) -> int:
    return math.ceil(c * (cost / (rel_eps * math.sqrt(p_label))) * math.log(1.0 / delta))


def contract_draw(value: float, halfwidth: float, delta: float, rng: np.random.Generator) -> float:
    """Output of an (additive halfwidth, delta) estimator of ``value`` in [0, 1].

    With probability 1 - delta the draw is uniform on the guarantee window,
    otherwise uniform on [0, 1].
    """
    if rng.random() < delta:
        return float(rng.random())
    lo, hi = max(0.0, value - halfwidth), min(1.0, value + halfwidth)
    return float(rng.uniform(lo, hi))


def contract_exceed_probability(value: float, halfwidth: float, delta: float, t: float) -> float:
    """P(contract_draw(value, halfwidth, delta) >= t)."""
    t = min(max(t, 0.0), 1.0)
    lo, hi = max(0.0, value - halfwidth), min(1.0, value + halfwidth)
    if hi > lo:
        inside = min(max((hi - t) / (hi - lo), 0.0), 1.0)
    else:
        inside = 1.0 if lo >= t else 0.0
    return (1.0 - delta) * inside + delta * (1.0 - t)


# -- statevector amplitude dynamics --------------------------------------------------


class GroverEvolution:
    """Powers of ``Q = (2|psi><psi| - I) S_good`` on a prepared state.

    ``2|psi><psi| - I`` is the reflection ``-A S_0 A^dagger`` for the
    preparation ``A|0> = |psi>``; each power therefore costs two
    applications of ``A`` (or its inverse), plus one for the initial state.
    """

    def __init__(self, psi0: np.ndarray, good: np.ndarray):
        self.psi0 = np.asarray(psi0, dtype=complex)
        self.good = np.asarray(good, dtype=bool)
        self.a = float(np.sum(np.abs(self.psi0[self.good]) ** 2))

    def step(self, v: np.ndarray) -> np.ndarray:
        w = v.copy()
        w[self.good] *= -1
        return 2.0 * self.psi0 * np.vdot(self.psi0, w) - w

    def state(self, k: int) -> np.ndarray:
        v = self.psi0.copy()
        for _ in range(k):
            v = self.step(v)
        return v

    def walk(self):
        """Yield (k, state) for k = 0, 1, 2, ... without recomputation."""
        v, k = self.psi0.copy(), 0
        while True:
            yield k, v
            v, k = self.step(v), k + 1

    def good_probability(self, v: np.ndarray) -> float:
        return float(min(1.0, np.sum(np.abs(v[self.good]) ** 2)))


class _Walker:
    def __init__(self, evo: GroverEvolution):
        self.evo = evo
        self.k = 0
        self.v = evo.psi0.copy()

    def probability(self, k: int) -> float:
        if k < self.k:
            self.k, self.v = 0, self.evo.psi0.copy()
        while self.k < k:
            self.v = self.evo.step(self.v)
            self.k += 1
        return self.evo.good_probability(self.v)


_ORACLE_EVOLUTIONS: "weakref.WeakKeyDictionary[SolutionOracle, GroverEvolution]" = (
    weakref.WeakKeyDictionary()
)


def oracle_evolution(oracle: SolutionOracle) -> GroverEvolution:
    evo = _ORACLE_EVOLUTIONS.get(oracle)
    if evo is None:
        state = oracle.prepared_state()
        good = state.layout.values("Y", np.arange(state.layout.dim)) == 1
        evo = GroverEvolution(state.amps, good)
        _ORACLE_EVOLUTIONS[oracle] = evo
    return evo


@dataclass
class IAEResult:
    estimate: float
    a_low: float
    a_high: float
    queries: int
    rounds: int


def _find_next_k(k: int, upper: bool, theta_l: float, theta_u: float, min_ratio: float = 2.0):
    old_scaling = 4 * k + 2
    max_scaling = int(1.0 / (2.0 * (theta_u - theta_l)))
    scaling = max_scaling - (max_scaling - 2) % 4
    while scaling >= min_ratio * old_scaling:
        theta_min = scaling * theta_l - int(scaling * theta_l)
        theta_max = scaling * theta_u - int(scaling * theta_u)
        if theta_min <= theta_max <= 0.5 and theta_min <= 0.5:
            return (scaling - 2) // 4, True
        if theta_max >= 0.5 and theta_max >= theta_min >= 0.5:
            return (scaling - 2) // 4, False
        scaling -= 4
    return k, upper


def iterative_amplitude_estimation(
    evo: GroverEvolution,
    precision: float,
    alpha: float,
    rng: np.random.Generator,
    *,
    shots: int = 100,
    done: Callable[[float, float], bool] | None = None,
    min_ratio: float = 2.0,
    max_rounds_guard: int = 100_000,
) -> IAEResult:
    """Iterative amplitude estimation with Chernoff confidence intervals.

    Angles are in units where ``a = sin^2(2 pi theta)``, ``theta`` in [0, 1/4].
    Stops when ``done(a_low, a_high)`` holds; the default stop is
    ``(a_high - a_low) / 2 <= precision``. ``precision`` also sets the
    round budget over which ``alpha`` is split.
    """
    if done is None:
        done = lambda lo, hi: (hi - lo) / 2.0 <= precision  # noqa: E731
    max_rounds = int(math.log(min_ratio * math.pi / 8.0 / precision, min_ratio)) + 1
    max_rounds = max(max_rounds, 1)
    log_term = math.log(2.0 * max_rounds / alpha)
    walker = _Walker(evo)

    theta_l, theta_u = 0.0, 0.25
    a_l, a_u = 0.0, 1.0
    k, upper = 0, True
    n_k = ones_k = 0
    queries = rounds = 0
    while not done(a_l, a_u):
        rounds += 1
        if rounds > max_rounds_guard:
            raise RuntimeError("iterative amplitude estimation failed to converge")
        new_k, upper = _find_next_k(k, upper, theta_l, theta_u, min_ratio)
        if new_k != k:
            n_k = ones_k = 0
        k = new_k
        p = walker.probability(k)
        ones_k += int(rng.binomial(shots, p))
        n_k += shots
        queries += shots * (2 * k + 1)

        prob = ones_k / n_k
        half = math.sqrt(3.0 * log_term / n_k)
        lo, hi = max(0.0, prob - half), min(1.0, prob + half)
        if upper:
            th_min = math.acos(1 - 2 * lo) / (2 * math.pi)
            th_max = math.acos(1 - 2 * hi) / (2 * math.pi)
        else:
            th_min = 1 - math.acos(1 - 2 * hi) / (2 * math.pi)
            th_max = 1 - math.acos(1 - 2 * lo) / (2 * math.pi)
        scaling = 4 * k + 2
        new_u = (int(scaling * theta_u) + th_max) / scaling
        new_l = (int(scaling * theta_l) + th_min) / scaling
        theta_l, theta_u = max(theta_l, new_l), min(theta_u, new_u)
        if theta_u < theta_l:
            theta_l, theta_u = new_l, new_u
        a_l = math.sin(2 * math.pi * theta_l) ** 2
        a_u = math.sin(2 * math.pi * theta_u) ** 2
    return IAEResult((a_l + a_u) / 2.0, a_l, a_u, queries, rounds)


# -- mean estimation -------------------------------------------------------------------


def qae_mean(
    oracle: SolutionOracle,
    eps: float,
    delta: float,
    backend: SubroutineBackend,
    ledger: QueryLedger,
    rng: np.random.Generator,
    *,
    phase: str = "flag_qae",
) -> float:
    """Estimate the oracle's mean to within ``eps`` with probability ``1 - delta``."""
    _check_unit("eps", eps)
    _check_unit("delta", delta)
    if backend.mode is Mode.CONTRACT:
        ledger.charge(phase, qae_charge(eps, delta, backend.cost_constant))
        return contract_draw(oracle.discretized.exact_mean, eps, delta, rng)
    res = iterative_amplitude_estimation(
        oracle_evolution(oracle), eps, delta, rng, shots=backend.shots
    )
    ledger.charge(phase, res.queries)
    return min(1.0, max(0.0, res.estimate))


# -- flag procedures ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FlagProcedure:
    """A procedure preparing ``sum_x N^-1/2 |x>(sqrt(1-q_x)|0> + sqrt(q_x)|1>)_F``.

    ``label_probs`` holds ``q_x``; ``cost`` is the number of oracle queries
    one invocation of the procedure (or its inverse) spends.
    """

    label_probs: np.ndarray
    cost: int

    def __post_init__(self):
        q = np.asarray(self.label_probs, dtype=float)
        if q.ndim != 1 or q.size < 1 or np.any(q < 0) or np.any(q > 1):
            raise ValueError("label probabilities must be a non-empty vector in [0, 1]")
        object.__setattr__(self, "label_probs", q)

    @property
    def size(self) -> int:
        return self.label_probs.size

    @property
    def p_label(self) -> float:
        return float(self.label_probs.mean())

    @cached_property
    def layout(self) -> QubitLayout:
        n = max(1, math.ceil(math.log2(self.size)))
        return QubitLayout([("X", n), ("F", 1)])

    def gates(self):
        layout = self.layout
        xq, fq = layout.qubits("X"), layout.qubits("F")[0]
        uniform = np.zeros(1 << len(xq))
        uniform[: self.size] = 1.0 / self.size
        gates = _loading_gates(uniform, xq)
        q = self.label_probs
        if np.all((q == 0) | (q == 1)):
            hits = np.flatnonzero(q == 1)

            def flagged_and_set(idx, _hits=hits, _layout=layout):
                return np.isin(_layout.values("X", idx), _hits) & (_layout.values("F", idx) == 1)

            gates += [H(fq), phase_flip(flagged_and_set), H(fq)]
        else:
            for x, qx in enumerate(q):
                if qx > 0:
                    theta = 2.0 * math.asin(math.sqrt(qx))
                    gates += controlled_on_value(RY(fq, theta), xq, x)
        return gates

    def prepared_state(self) -> StateVector:
        return apply_circuit(StateVector(self.layout), self.gates())

    @cached_property
    def evolution(self) -> GroverEvolution:
        state = self.prepared_state()
        good = self.layout.values("F", np.arange(self.layout.dim)) == 1
        return GroverEvolution(state.amps, good)


def amplify(
    flag_alg: FlagProcedure,
    delta: float,
    backend: SubroutineBackend,
    ledger: QueryLedger,
    rng: np.random.Generator,
    *,
    phase: str = "amplify",
) -> int:
    """Return an element carrying flag 1, with probability at least ``1 - delta``."""
    _check_unit("delta", delta)
    p = flag_alg.p_label
    if backend.mode is Mode.CONTRACT:
        if p <= 0:
            raise PreconditionError("amplify called on a procedure with no flagged mass")
        # Below 1/N the unknown-p schedule exhausts its O(sqrt(N)) budget
        # and gives up, so the charge never exceeds the 1/N level.
        p_eff = max(p, 1.0 / flag_alg.size)
        ledger.charge(phase, amplify_charge(flag_alg.cost, p_eff, delta, backend.cost_constant))
        if rng.random() < delta:
            return int(rng.integers(flag_alg.size))
        q = flag_alg.label_probs
        return int(rng.choice(flag_alg.size, p=q / q.sum()))
    return _amplify_unknown_p(flag_alg, delta, ledger, rng, phase)


def _amplify_unknown_p(flag_alg, delta, ledger, rng, phase) -> int:
    # Exponentially growing random Grover powers; each restart has budget
    # 9 sqrt(N) iterations, twice the expected cost, so fails w.p. <= 1/2.
    evo = flag_alg.evolution
    layout = flag_alg.layout
    n_items = flag_alg.size
    budget = 9.0 * math.sqrt(n_items)
    restarts = max(1, math.ceil(math.log2(1.0 / delta)))
    last = 0
    for _ in range(restarts):
        m, spent = 1.0, 0
        while spent <= budget:
            j = int(rng.integers(0, math.ceil(m)))
            state = StateVector(layout, evo.state(j))
            ledger.charge(phase, (2 * j + 1) * flag_alg.cost)
            spent += j
            flag, collapsed = measure_register(state, "F", rng)
            last, _ = measure_register(collapsed, "X", rng)
            if flag == 1:
                return int(last)
            m = min(1.2 * m, math.sqrt(n_items))
    return int(min(last, n_items - 1))


def estimate_proportion(
    flag_alg: FlagProcedure,
    rel_eps: float,
    delta: float,
    backend: SubroutineBackend,
    ledger: QueryLedger,
    rng: np.random.Generator,
    *,
    phase: str = "proportion_estimate",
) -> float:
    """Estimate ``p_label`` to relative precision ``rel_eps`` with probability ``1 - delta``."""
    _check_unit("rel_eps", rel_eps)
    _check_unit("delta", delta)
    p = flag_alg.p_label
    if backend.mode is Mode.CONTRACT:
        if p <= 0:
            raise PreconditionError("proportion estimate needs positive flagged mass")
        c = backend.cost_constant
        p_eff = max(p, 1.0 / flag_alg.size)
        ledger.charge(phase, estimate_charge(flag_alg.cost, p_eff, rel_eps, delta, c))
        return contract_draw(p, rel_eps * p, delta, rng)

    # p is a multiple of 1/N whenever it is positive, which bounds the
    # precision needed for a relative guarantee.
    floor = 1.0 / flag_alg.size

    def done(lo, hi):
        return (hi - lo) / 2.0 <= rel_eps * max(lo, floor)

    res = iterative_amplitude_estimation(
        flag_alg.evolution, rel_eps * floor, delta, rng, shots=backend.shots, done=done
    )
    ledger.charge(phase, res.queries * flag_alg.cost)
    lo = max(res.a_low, floor)
    return min(1.0, (lo + max(res.a_high, lo)) / 2.0)
