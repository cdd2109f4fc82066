"""Dense statevector kernel: registers, gates, measurement and Grover reflections.

Qubit ordering is little-endian: qubit 0 is the least significant bit of a
basis index. Registers occupy contiguous qubit ranges in declaration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

REGISTER_NAMES = ("X", "XI", "Y", "A", "P", "F", "ANC")
MAX_QUBITS = 26
NORM_ATOL = 1e-10

_SQRT2_INV = 1.0 / math.sqrt(2.0)


class LayoutError(ValueError):
    """Register or qubit reference outside the layout."""


class GateError(ValueError):
    """Gate could not be constructed (bad parameters, non-unitary matrix)."""


@dataclass(frozen=True)
class QubitLayout:
    registers: tuple[tuple[str, int], ...]

    def __init__(self, registers: Iterable[tuple[str, int]]):
        regs = tuple((str(name), int(width)) for name, width in registers)
        seen = set()
        for name, width in regs:
            if name not in REGISTER_NAMES:
                raise LayoutError(f"unknown register name {name!r}")
            if name in seen:
                raise LayoutError(f"register {name!r} declared twice")
            if width < 1:
                raise LayoutError(f"register {name!r} must have width >= 1, got {width}")
            seen.add(name)
        total = sum(w for _, w in regs)
        if total == 0:
            raise LayoutError("layout has no qubits")
        if total > MAX_QUBITS:
            raise LayoutError(f"{total} qubits exceeds the statevector cap of {MAX_QUBITS}")
        object.__setattr__(self, "registers", regs)

    @property
    def total_qubits(self) -> int:
        return sum(w for _, w in self.registers)

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    def offset(self, name: str) -> int:
        off = 0
        for reg, width in self.registers:
            if reg == name:
                return off
            off += width
        raise LayoutError(f"no register named {name!r} in layout")

    def width(self, name: str) -> int:
        for reg, width in self.registers:
            if reg == name:
                return width
        raise LayoutError(f"no register named {name!r} in layout")

    def qubits(self, name: str) -> list[int]:
        off = self.offset(name)
        return list(range(off, off + self.width(name)))

    def values(self, name: str, indices: np.ndarray) -> np.ndarray:
        """Value held by register ``name`` in each basis index."""
        off, width = self.offset(name), self.width(name)
        return (np.asarray(indices) >> off) & ((1 << width) - 1)

    def __contains__(self, name: str) -> bool:
        return any(reg == name for reg, _ in self.registers)


# -- gates --------------------------------------------------------------------

_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_PARAM = {
    "RY": lambda t: np.array(
        [[math.cos(t / 2), -math.sin(t / 2)], [math.sin(t / 2), math.cos(t / 2)]], dtype=complex
    ),
    "PHASE": lambda t: np.array([[1, 0], [0, complex(math.cos(t), math.sin(t))]], dtype=complex),
}
SINGLE_KINDS = ("H", "X", "Z", "RY", "PHASE", "U")
KINDS = SINGLE_KINDS + ("CONTROLLED", "ORACLE_PHASE_FLIP")


@dataclass(frozen=True, eq=False)
class Gate:
    """One circuit element.

    Single-qubit kinds act on ``targets[0]``. ``CONTROLLED`` wraps a
    single-qubit ``base`` gate and fires when every qubit in ``controls`` is 1.
    ``ORACLE_PHASE_FLIP`` multiplies by -1 every basis index for which
    ``predicate(indices)`` is true; it has no targets.
    """

    kind: str
    targets: tuple[int, ...] = ()
    theta: float | None = None
    base: Gate | None = None
    controls: tuple[int, ...] = ()
    predicate: Callable[[np.ndarray], np.ndarray] | None = None
    custom: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GateError(f"unknown gate kind {self.kind!r}")
        if self.kind in SINGLE_KINDS and len(self.targets) != 1:
            raise GateError(f"{self.kind} takes exactly one target")
        if self.kind in ("RY", "PHASE") and (self.theta is None or not math.isfinite(self.theta)):
            raise GateError(f"{self.kind} needs a finite angle")
        if self.kind == "U":
            m = np.asarray(self.custom, dtype=complex)
            if m.shape != (2, 2) or not _is_unitary(m):
                raise GateError("custom matrix must be a 2x2 unitary")
        if self.kind == "CONTROLLED":
            if self.base is None or self.base.kind not in SINGLE_KINDS:
                raise GateError("CONTROLLED needs a single-qubit base gate")
            if not self.controls:
                raise GateError("CONTROLLED needs at least one control qubit")
            if set(self.controls) & set(self.base.targets):
                raise GateError("control and target qubits must be disjoint")
            if len(set(self.controls)) != len(self.controls):
                raise GateError("duplicate control qubits")
        if self.kind == "ORACLE_PHASE_FLIP" and self.predicate is None:
            raise GateError("ORACLE_PHASE_FLIP needs a predicate")

    @property
    def target(self) -> int:
        return self.base.targets[0] if self.kind == "CONTROLLED" else self.targets[0]

    def qubits(self) -> tuple[int, ...]:
        if self.kind == "CONTROLLED":
            return self.controls + self.base.targets
        return self.targets

    def matrix(self, num_qubits: int | None = None) -> np.ndarray:
        """Unitary of the gate on its own qubits.

        Controlled gates are returned on ``controls + target`` with the
        target as the least significant qubit of that local ordering.
        Oracles need ``num_qubits`` and are returned as a full diagonal matrix.
        """
        if self.kind in _FIXED:
            return _FIXED[self.kind].copy()
        if self.kind in _PARAM:
            return _PARAM[self.kind](self.theta)
        if self.kind == "U":
            return np.asarray(self.custom, dtype=complex).copy()
        if self.kind == "CONTROLLED":
            k = len(self.controls)
            m = np.eye(1 << (k + 1), dtype=complex)
            m[-2:, -2:] = self.base.matrix()
            return m
        if num_qubits is None:
            raise GateError("oracle matrix needs the qubit count")
        diag = np.where(self.predicate(np.arange(1 << num_qubits)), -1.0, 1.0)
        return np.diag(diag.astype(complex))

    def inverse(self) -> Gate:
        if self.kind in ("RY", "PHASE"):
            return Gate(self.kind, self.targets, theta=-self.theta)
        if self.kind == "U":
            return Gate("U", self.targets, custom=np.conj(self.custom).T)
        if self.kind == "CONTROLLED":
            return Gate("CONTROLLED", base=self.base.inverse(), controls=self.controls)
        return self


def _is_unitary(m: np.ndarray, atol: float = 1e-12) -> bool:
    return np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=atol, rtol=0)


def H(q: int) -> Gate:
    return Gate("H", (q,))


def X(q: int) -> Gate:
    return Gate("X", (q,))


def Z(q: int) -> Gate:
    return Gate("Z", (q,))


def RY(q: int, theta: float) -> Gate:
    return Gate("RY", (q,), theta=float(theta))


def PHASE(q: int, theta: float) -> Gate:
    return Gate("PHASE", (q,), theta=float(theta))


def unitary(q: int, matrix) -> Gate:
    return Gate("U", (q,), custom=np.asarray(matrix, dtype=complex))


def controlled(gate: Gate, controls: Sequence[int]) -> Gate:
    controls = tuple(int(c) for c in controls)
    if gate.kind == "CONTROLLED":
        return Gate("CONTROLLED", base=gate.base, controls=gate.controls + controls)
    if not controls:
        return gate
    return Gate("CONTROLLED", base=gate, controls=controls)


def phase_flip(predicate: Callable[[np.ndarray], np.ndarray]) -> Gate:
    return Gate("ORACLE_PHASE_FLIP", predicate=predicate)


def controlled_on_value(gate: Gate, qubits: Sequence[int], value: int) -> list[Gate]:
    """``gate`` fired when ``qubits`` (LSB first) hold ``value``.

    Zero-valued control bits are handled by X conjugation.
    """
    flips = [X(q) for i, q in enumerate(qubits) if not (value >> i) & 1]
    return flips + [controlled(gate, qubits)] + flips


def inverse_circuit(gates: Sequence[Gate]) -> list[Gate]:
    return [g.inverse() for g in reversed(gates)]


# -- kernel -------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _pair_indices(num_qubits: int, target: int, controls: tuple[int, ...]):
    idx = np.arange(1 << num_qubits)
    mask = ((idx >> target) & 1) == 0
    for c in controls:
        mask &= ((idx >> c) & 1) == 1
    i0 = idx[mask]
    return i0, i0 | (1 << target)


def apply_gate_array(amps: np.ndarray, gate: Gate, num_qubits: int) -> np.ndarray:
    """Apply ``gate`` in place to ``amps`` (basis index on axis 0)."""
    if gate.kind == "ORACLE_PHASE_FLIP":
        hit = np.asarray(gate.predicate(np.arange(1 << num_qubits)), dtype=bool)
        amps[hit] *= -1
        return amps
    for q in gate.qubits():
        if not 0 <= q < num_qubits:
            raise LayoutError(f"qubit {q} outside a {num_qubits}-qubit layout")
    if gate.kind == "CONTROLLED":
        u = gate.base.matrix()
        controls = tuple(sorted(gate.controls))
    else:
        u = gate.matrix()
        controls = ()
    i0, i1 = _pair_indices(num_qubits, gate.target, controls)
    a0 = amps[i0]
    a1 = amps[i1]
    amps[i0] = u[0, 0] * a0 + u[0, 1] * a1
    amps[i1] = u[1, 0] * a0 + u[1, 1] * a1
    return amps


class StateVector:
    """Amplitudes over a :class:`QubitLayout`, initialised to ``|0...0>``."""

    def __init__(self, layout: QubitLayout, amps: np.ndarray | None = None):
        self.layout = layout
        if amps is None:
            amps = np.zeros(layout.dim, dtype=complex)
            amps[0] = 1.0
        else:
            amps = np.asarray(amps, dtype=complex)
            if amps.shape != (layout.dim,):
                raise LayoutError(f"expected {layout.dim} amplitudes, got {amps.shape}")
        self.amps = amps

    @property
    def num_qubits(self) -> int:
        return self.layout.total_qubits

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def copy(self) -> StateVector:
        return StateVector(self.layout, self.amps.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def dump(self) -> str:
        lines = [f"{i}\t{float(a.real)!r}\t{float(a.imag)!r}" for i, a in enumerate(self.amps)]
        return "\n".join(lines) + "\n"


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    apply_gate_array(state.amps, gate, state.num_qubits)
    return state


def apply_circuit(state: StateVector, gates: Iterable[Gate]) -> StateVector:
    for g in gates:
        apply_gate_array(state.amps, g, state.num_qubits)
    return state


def circuit_matrix(gates: Sequence[Gate], num_qubits: int) -> np.ndarray:
    """Full unitary of a gate sequence, built column-wise by the kernel."""
    m = np.eye(1 << num_qubits, dtype=complex)
    for g in gates:
        apply_gate_array(m, g, num_qubits)
    return m


def uniform_superposition(layout: QubitLayout, register: str) -> StateVector:
    state = StateVector(layout)
    return apply_circuit(state, [H(q) for q in layout.qubits(register)])


def _register_view(state: StateVector, register: str) -> np.ndarray:
    off, width = state.layout.offset(register), state.layout.width(register)
    n = state.num_qubits
    return state.amps.reshape(1 << (n - off - width), 1 << width, 1 << off)


def grover_diffusion(state: StateVector, register: str) -> StateVector:
    """Inversion about the mean of the register's amplitudes.

    Equals ``H^n (2|0><0| - I) H^n`` on the register, applied independently
    for every basis configuration of the remaining qubits.
    """
    view = _register_view(state, register)
    mean = view.mean(axis=1, keepdims=True)
    view *= -1
    view += 2 * mean
    return state


def diffusion_gates(layout: QubitLayout, register: str) -> list[Gate]:
    """Gate-level ``H^n (2|0><0| - I) H^n`` restricted to ``register``."""
    qs = layout.qubits(register)
    hs = [H(q) for q in qs]

    def nonzero(idx, _layout=layout, _reg=register):
        return _layout.values(_reg, idx) != 0

    return hs + [phase_flip(nonzero)] + hs


def register_distribution(state: StateVector, register: str) -> np.ndarray:
    probs = np.abs(_register_view(state, register)) ** 2
    return probs.sum(axis=(0, 2))


def subspace_probability(
    state: StateVector, register: str, predicate: Callable[[np.ndarray], np.ndarray]
) -> float:
    """Exact squared norm of the projection onto register values matching ``predicate``."""
    dist = register_distribution(state, register)
    hit = np.asarray(predicate(np.arange(dist.size)), dtype=bool)
    return float(min(1.0, max(0.0, dist[hit].sum())))


def measure_register(
    state: StateVector, register: str, rng: np.random.Generator
) -> tuple[int, StateVector]:
    raw = register_distribution(state, register)
    value = int(rng.choice(raw.size, p=raw / raw.sum()))
    out = state.copy()
    keep = out.layout.values(register, np.arange(out.layout.dim)) == value
    out.amps[~keep] = 0.0
    out.amps /= math.sqrt(raw[value])
    return value, out


def grover_success_curve(n_items: int, marked: int, iterations: int) -> list[tuple[float, float]]:
    """(simulated, closed-form) success probability after 0..iterations Grover steps.

    The simulation is gate level: a phase-flip oracle on ``marked`` followed
    by the H-flip-H diffusion, on a register of ``log2(n_items)`` qubits.
    """
    if n_items < 2 or n_items & (n_items - 1):
        raise LayoutError(f"n_items must be a power of two >= 2, got {n_items}")
    if not 0 <= marked < n_items:
        raise LayoutError(f"marked item {marked} outside [0, {n_items})")
    layout = QubitLayout([("X", n_items.bit_length() - 1)])
    state = uniform_superposition(layout, "X")

    def is_marked(idx, _m=marked):
        return idx == _m

    step = [phase_flip(is_marked)] + diffusion_gates(layout, "X")
    theta = math.asin(1.0 / math.sqrt(n_items))
    out = []
    for k in range(iterations + 1):
        if k:
            apply_circuit(state, step)
        sim = float(np.abs(state.amps[marked]) ** 2)
        out.append((sim, math.sin((2 * k + 1) * theta) ** 2))
    return out
