import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from sogas.dists import Bernoulli, build_oracle, discretize
from sogas.qcore import (
    H,
    MAX_QUBITS,
    PHASE,
    RY,
    X,
    Z,
    Gate,
    GateError,
    LayoutError,
    QubitLayout,
    StateVector,
    apply_circuit,
    apply_gate,
    circuit_matrix,
    controlled,
    controlled_on_value,
    diffusion_gates,
    grover_diffusion,
    grover_success_curve,
    inverse_circuit,
    measure_register,
    phase_flip,
    register_distribution,
    subspace_probability,
    uniform_superposition,
    unitary,
)


def one_register(width, name="X"):
    return QubitLayout([(name, width)])


# -- layout ---------------------------------------------------------------------


def test_layout_ranges_are_contiguous_and_cover_all_qubits():
    layout = QubitLayout([("X", 2), ("XI", 3), ("Y", 1), ("F", 1)])
    covered = []
    for name, _ in layout.registers:
        qs = layout.qubits(name)
        assert qs == list(range(qs[0], qs[0] + len(qs)))
        covered += qs
    assert covered == list(range(layout.total_qubits))
    assert layout.dim == 2**7


def test_layout_values_extracts_register_bits():
    layout = QubitLayout([("X", 2), ("Y", 3)])
    idx = np.array([0b10111, 0b00001])
    assert layout.values("X", idx).tolist() == [0b11, 0b01]
    assert layout.values("Y", idx).tolist() == [0b101, 0]


@pytest.mark.parametrize(
    "regs",
    [[("Q", 1)], [("X", 0)], [("X", 1), ("X", 2)], [("X", MAX_QUBITS + 1)]],
)
def test_layout_rejects_bad_registers(regs):
    with pytest.raises(LayoutError):
        QubitLayout(regs)


def test_unknown_register_lookup_raises():
    with pytest.raises(LayoutError):
        one_register(1).offset("Y")


# -- gates ----------------------------------------------------------------------


ALL_KINDS = [
    H(0),
    X(0),
    Z(0),
    RY(0, 0.7),
    PHASE(0, 1.3),
    unitary(0, np.array([[0, 1j], [1j, 0]])),
    controlled(RY(0, 0.4), [1, 2]),
]


@pytest.mark.parametrize("gate", ALL_KINDS, ids=lambda g: g.kind)
def test_every_gate_kind_is_unitary(gate):
    m = gate.matrix()
    assert np.abs(m @ m.conj().T - np.eye(m.shape[0])).max() <= 1e-12


def test_phase_flip_matrix_is_unitary():
    m = phase_flip(lambda i: i % 3 == 0).matrix(3)
    assert np.abs(m @ m.conj().T - np.eye(8)).max() <= 1e-12


def test_gate_construction_errors():
    with pytest.raises(GateError):
        unitary(0, [[1, 1], [0, 1]])
    with pytest.raises(GateError):
        Gate("CONTROLLED", base=X(1), controls=(1,))
    with pytest.raises(GateError):
        Gate("RY", (0,), theta=float("nan"))
    with pytest.raises(GateError):
        Gate("SWAP", (0,))


def test_gate_outside_layout_raises():
    with pytest.raises(LayoutError):
        apply_gate(StateVector(one_register(1)), X(3))


def test_h_on_zero():
    s = apply_gate(StateVector(one_register(1)), H(0))
    assert np.allclose(s.amps, [1 / math.sqrt(2)] * 2, atol=1e-15)


def test_x_on_zero():
    s = apply_gate(StateVector(one_register(1)), X(0))
    assert np.allclose(s.amps, [0, 1])


def test_h_tensor_h():
    s = apply_circuit(StateVector(one_register(2)), [H(0), H(1)])
    assert np.allclose(s.amps, [0.5] * 4, atol=1e-15)


def test_little_endian_order():
    layout = QubitLayout([("X", 1), ("Y", 2)])
    s = apply_gate(StateVector(layout), X(1))
    assert np.argmax(np.abs(s.amps)) == 0b010


def test_controlled_gate_against_kron_oracle():
    # CNOT with control 0, target 1, in little-endian: |c t> index = t*2 + c
    m = circuit_matrix([controlled(X(1), [0])], 2)
    expected = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]])
    assert np.allclose(m, expected)


def test_single_qubit_gate_against_kron_oracle():
    theta = 0.9
    m = circuit_matrix([RY(1, theta)], 3)
    expected = np.kron(np.eye(2), np.kron(RY(0, theta).matrix(), np.eye(2)))
    assert np.allclose(m, expected, atol=1e-14)


def test_controlled_on_value_fires_only_on_value():
    layout = one_register(3)
    for value in range(4):
        for start in range(4):
            s = StateVector(layout)
            s.amps[:] = 0
            s.amps[start] = 1
            apply_circuit(s, controlled_on_value(X(2), [0, 1], value))
            expected = start | 4 if start == value else start
            assert abs(s.amps[expected]) == pytest.approx(1.0)


def test_inverse_circuit_undoes_circuit():
    gates = [H(0), RY(1, 0.3), controlled(PHASE(2, 0.8), [0, 1]), unitary(1, [[0, 1j], [1j, 0]])]
    m = circuit_matrix(gates + inverse_circuit(gates), 3)
    assert np.allclose(m, np.eye(8), atol=1e-12)


def _random_gate(draw_kind, q, other, theta):
    return [
        H(q),
        X(q),
        Z(q),
        RY(q, theta),
        PHASE(q, theta),
        controlled(RY(q, theta), [other]),
        phase_flip(lambda i, _t=q: (i >> _t) & 1 == 1),
    ][draw_kind]


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(2, 10),
    ops=st.lists(
        st.tuples(st.integers(0, 6), st.integers(0, 9), st.integers(0, 9), st.floats(-6.3, 6.3)),
        max_size=100,
    ),
)
def test_norm_preserved_by_random_circuits(n, ops):
    s = uniform_superposition(one_register(n), "X")
    for kind, q, other, theta in ops:
        q, other = q % n, other % n
        if other == q:
            other = (q + 1) % n
        apply_gate(s, _random_gate(kind, q, other, theta))
    assert abs(s.norm() - 1.0) <= 1e-9


# -- superposition and diffusion ----------------------------------------------------------


@pytest.mark.parametrize("width", [1, 2, 3])
def test_uniform_superposition(width):
    s = uniform_superposition(one_register(width), "X")
    assert np.allclose(s.amps, 1 / math.sqrt(2**width), atol=1e-15)


def test_uniform_superposition_leaves_other_registers_at_zero():
    layout = QubitLayout([("X", 2), ("Y", 1)])
    s = uniform_superposition(layout, "X")
    assert register_distribution(s, "Y").tolist() == pytest.approx([1.0, 0.0])


def test_diffusion_fixed_point():
    s = StateVector(one_register(2), np.full(4, 0.5, dtype=complex))
    grover_diffusion(s, "X")
    assert np.allclose(s.amps, 0.5)


def test_diffusion_inverts_about_mean():
    s = StateVector(one_register(2), np.array([-0.5, 0.5, 0.5, 0.5], dtype=complex))
    grover_diffusion(s, "X")
    assert np.allclose(s.amps, [1, 0, 0, 0], atol=1e-15)


def test_diffusion_matches_gate_level_definition():
    layout = QubitLayout([("XI", 1), ("X", 3)])
    rng = np.random.default_rng(3)
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    v /= np.linalg.norm(v)
    fast = grover_diffusion(StateVector(layout, v.copy()), "X")
    slow = apply_circuit(StateVector(layout, v.copy()), diffusion_gates(layout, "X"))
    assert np.allclose(fast.amps, slow.amps, atol=1e-12)


def test_n4_single_marked_grover_identity_by_matrix():
    layout = one_register(2)
    oracle = circuit_matrix([phase_flip(lambda i: i == 2)], 2)
    diffusion = circuit_matrix(diffusion_gates(layout, "X"), 2)
    psi = np.full(4, 0.5)
    out = diffusion @ oracle @ psi
    assert abs(out[2]) ** 2 == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("qubits", [2, 3, 4])
def test_grover_success_matches_closed_form(qubits):
    n = 2**qubits
    k_opt = math.floor(math.pi / 4 * math.sqrt(n))
    curve = grover_success_curve(n, n // 3, k_opt)
    for sim, exact in curve:
        assert sim == pytest.approx(exact, abs=1e-9)
    theta = math.asin(1 / math.sqrt(n))
    assert curve[-1][0] >= math.sin((2 * k_opt + 1) * theta) ** 2 - 1e-9


def test_grover_curve_rejects_non_power_of_two():
    with pytest.raises(LayoutError):
        grover_success_curve(6, 0, 1)


# -- measurement and projections ------------------------------------------------------


def test_measure_basis_state():
    s = apply_gate(StateVector(one_register(1)), X(0))
    rng = np.random.default_rng(0)
    for _ in range(20):
        v, post = measure_register(s, "X", rng)
        assert v == 1
        assert abs(post.norm() - 1) < 1e-12


def test_measure_plus_state_frequency():
    s = uniform_superposition(one_register(1), "X")
    rng = np.random.default_rng(1)
    ones = sum(measure_register(s, "X", rng)[0] for _ in range(10_000))
    assert 0.48 <= ones / 10_000 <= 0.52


def test_measure_collapses_and_renormalises():
    layout = QubitLayout([("X", 1), ("Y", 1)])
    s = apply_circuit(StateVector(layout), [H(0), controlled(X(1), [0])])
    v, post = measure_register(s, "X", np.random.default_rng(2))
    assert abs(post.norm() - 1) < 1e-12
    assert abs(post.amps[v | (v << 1)]) == pytest.approx(1.0)


def _bernoulli_state(p):
    return build_oracle(discretize(Bernoulli(p), 1)).prepared_state()


def test_measure_objective_of_bernoulli_oracle():
    s = _bernoulli_state(0.8)
    rng = np.random.default_rng(4)
    ones = sum(measure_register(s, "Y", rng)[0] for _ in range(10_000))
    assert 0.78 <= ones / 10_000 <= 0.82


def test_measurement_law_chi_square():
    layout = one_register(3)
    s = apply_circuit(StateVector(layout), [RY(0, 0.4), RY(1, 1.9), H(2), controlled(RY(0, 1.1), [2])])
    probs = register_distribution(s, "X")
    rng = np.random.default_rng(5)
    draws = [measure_register(s, "X", rng)[0] for _ in range(10_000)]
    counts = np.bincount(draws, minlength=8)
    keep = probs > 0
    assert chisquare(counts[keep], probs[keep] * 10_000).pvalue > 0.001


def test_subspace_probability_examples():
    s = uniform_superposition(one_register(2), "X")
    assert subspace_probability(s, "X", lambda v: v == 3) == pytest.approx(0.25)
    assert subspace_probability(s, "X", lambda v: v >= 0) == pytest.approx(1.0, abs=1e-10)
    assert subspace_probability(_bernoulli_state(0.8), "Y", lambda v: v == 1) == pytest.approx(
        0.8, abs=1e-10
    )


def test_dump_format():
    s = apply_gate(StateVector(one_register(1)), X(0))
    lines = s.dump().splitlines()
    assert lines == ["0\t0.0\t0.0", "1\t1.0\t0.0"]
