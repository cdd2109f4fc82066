"""Fully coherent flag procedure on tiny instances.

Builds the joint state over registers X (solution), XI (noise), Y
(objective), P (estimate), A (comparison) and F (flag) and reads the
labelled proportion off the exact statevector.

The mean-estimation step is a purified estimator: conditioned on ``|x>``
it writes into P the superposition whose squared amplitudes are the
output law of an (eps, alpha) estimator of the mean carried by the data
registers, rounded to the nearest point of the P grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dists import _loading_gates
from .qcore import (
    H,
    X,
    QubitLayout,
    StateVector,
    apply_circuit,
    controlled,
    controlled_on_value,
    phase_flip,
    register_distribution,
    subspace_probability,
)
from .qsub import GroverEvolution
from .search import FlagParams, ProblemInstance, classify

MAX_DEMO_SOLUTIONS = 4
MAX_DEMO_NOISE_QUBITS = 2


def estimate_register_width(params: FlagParams) -> int:
    return math.ceil(math.log2(3.0 / params.step)) + 1


def _estimator_law(mu: float, halfwidth: float, alpha: float, width: int) -> np.ndarray:
    """Mass of each P-grid point when the estimate is rounded to the nearest point."""
    n = 1 << width
    # cell v collects estimates in [(v - 1/2)/n, (v + 1/2)/n), clipped to [0, 1]
    edges = np.clip((np.arange(n + 1) - 0.5) / n, 0.0, 1.0)
    edges[-1] = 1.0
    lo, hi = max(0.0, mu - halfwidth), min(1.0, mu + halfwidth)

    def window_cdf(t):
        if hi > lo:
            return np.clip((t - lo) / (hi - lo), 0.0, 1.0)
        return (t >= lo).astype(float)

    inside = np.diff(window_cdf(edges))
    if hi <= lo:
        inside = np.zeros(n)
        inside[min(int(round(lo * n)), n - 1)] = 1.0
    uniform = np.diff(edges)
    law = (1.0 - alpha) * inside + alpha * uniform
    return law / law.sum()


@dataclass
class CoherentFlagResult:
    state: StateVector
    p_label: float
    q_label: float
    label_mass: np.ndarray  # P(F = 1 | x)
    classes: np.ndarray
    means: np.ndarray  # read from the data registers
    params: FlagParams

    @property
    def bound(self) -> float:
        return 2.0 * self.params.kappa / self.params.n_solutions

    def amplified_probability(self, iterations: int) -> float:
        """Flag probability after ``iterations`` rounds of amplitude amplification."""
        layout = self.state.layout
        good = layout.values("F", np.arange(layout.dim)) == 1
        evo = GroverEvolution(self.state.amps, good)
        return evo.good_probability(evo.state(iterations))


def coherent_flag_demo(instance: ProblemInstance, params: FlagParams) -> CoherentFlagResult:
    n_sol = instance.size
    if n_sol > MAX_DEMO_SOLUTIONS:
        raise ValueError(f"coherent demo supports at most {MAX_DEMO_SOLUTIONS} solutions")
    if params.n_solutions != n_sol:
        raise ValueError("flag parameters were built for a different solution count")
    k = max(s.dist.k for s in instance.solutions)
    if k > MAX_DEMO_NOISE_QUBITS or any(s.dist.k != k for s in instance.solutions):
        raise ValueError(f"all solutions need the same k <= {MAX_DEMO_NOISE_QUBITS}")
    width = estimate_register_width(params)
    nx = max(1, math.ceil(math.log2(n_sol)))
    layout = QubitLayout([("X", nx), ("XI", k), ("Y", 1), ("P", width), ("A", 1), ("F", 1)])
    xq, xiq, yq = layout.qubits("X"), layout.qubits("XI"), layout.qubits("Y")[0]
    pq, aq, fq = layout.qubits("P"), layout.qubits("A")[0], layout.qubits("F")[0]

    state = StateVector(layout)
    uniform = np.zeros(1 << nx)
    uniform[:n_sol] = 1.0 / n_sol
    apply_circuit(state, _loading_gates(uniform, xq))

    for x, sol in enumerate(instance.solutions):
        for g in sol.oracle.gates(xiq, yq):
            apply_circuit(state, controlled_on_value(g, xq, x))

    # the estimator reads the objective-qubit mass of each branch
    idx = np.arange(layout.dim)
    probs = state.probabilities()
    xs, ys = layout.values("X", idx), layout.values("Y", idx)
    means = np.array([probs[(xs == x) & (ys == 1)].sum() * n_sol for x in range(n_sol)])

    for x, mu in enumerate(means):
        law = _estimator_law(mu, params.qae_precision, params.alpha, width)
        for g in _loading_gates(law, pq):
            apply_circuit(state, controlled_on_value(g, xq, x))

    cutoff = math.ceil(params.midpoint * (1 << width) - 1e-12)

    def clears_and_set(i, _layout=layout, _cut=cutoff):
        return (_layout.values("P", i) >= _cut) & (_layout.values("A", i) == 1)

    apply_circuit(state, [H(aq), phase_flip(clears_and_set), H(aq)])
    apply_circuit(state, [controlled(X(fq), [aq])])

    p_label = subspace_probability(state, "F", lambda v: v == 1)
    joint = np.abs(state.amps) ** 2
    fs = layout.values("F", idx)
    label_mass = np.array([joint[(xs == x) & (fs == 1)].sum() * n_sol for x in range(n_sol)])
    classes = classify(instance.means, params)
    ideal = np.where(classes == 1, 1.0, np.where(classes == 2, 0.0, label_mass))
    return CoherentFlagResult(
        state=state,
        p_label=p_label,
        q_label=float(ideal.mean()),
        label_mass=label_mass,
        classes=classes,
        means=means,
        params=params,
    )


def register_marginal(result: CoherentFlagResult, register: str) -> np.ndarray:
    return register_distribution(result.state, register)
