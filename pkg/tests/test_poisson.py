"""Tests for the stiffness matrix, classical solver, and measured decompositions."""

import math

import numpy as np
import pytest

from vqls_poisson.poisson import (
    DECOMPOSITION_METHODS,
    MAX_PAULI_QUBITS,
    cnot_count,
    cnot_weight,
    decompose,
    pauli_terms,
    solve_poisson,
    stiffness_eigenvalues,
    stiffness_matrix,
)
from vqls_poisson.circuits import Circuit, Gate, cx, mcx, ry, rzz
from vqls_poisson.sim import apply_circuit

_I = np.eye(2)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_Z = np.diag([1.0, -1.0])
_PAULI = {"I": _I, "X": _X, "Y": _Y, "Z": _Z}


def _kron_label(label: str) -> np.ndarray:
    # leftmost character acts on the highest qubit, matching bitstring order
    m = np.array([[1.0]], dtype=complex)
    for ch in label:
        m = np.kron(m, _PAULI[ch])
    return m


def _random_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Stiffness matrix and classical solve
# ---------------------------------------------------------------------------


def test_stiffness_entries():
    a = stiffness_matrix(3, 1.0)
    assert a.shape == (8, 8)
    assert np.all(np.diag(a) == 2.0)
    assert np.all(np.diag(a, 1) == -1.0)
    assert np.all(np.diag(a, -1) == -1.0)
    assert np.abs(np.triu(a, 2)).max() == 0.0


def test_stiffness_h_scaling():
    assert np.allclose(stiffness_matrix(2, 0.25), stiffness_matrix(2, 1.0) / 0.25)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_stiffness_eigenvalues_match_dense(n):
    got = np.sort(stiffness_eigenvalues(n, 0.5))
    want = np.linalg.eigvalsh(stiffness_matrix(n, 0.5))
    assert np.allclose(got, want, atol=1e-12)


def test_solve_poisson_against_dense_solve():
    rng = np.random.default_rng(7)
    f = rng.normal(size=16)
    f /= np.linalg.norm(f)
    sol = solve_poisson(f, h_mesh=0.2)
    u = np.linalg.solve(stiffness_matrix(4, 0.2), f / 0.2)
    assert np.allclose(sol.u, u, atol=1e-12)
    assert math.isclose(sol.u_norm, float(np.linalg.norm(u)), rel_tol=1e-12)
    assert math.isclose(float(np.linalg.norm(sol.u_state)), 1.0, rel_tol=1e-12)


def test_solve_poisson_jump_forcing_norms():
    """Solution norms for the uniform-on-upper-half forcing grow quickly with n."""
    f2 = np.array([0.0, 0.0, 1.0, 1.0]) / math.sqrt(2.0)
    sol = solve_poisson(f2)
    assert math.isclose(sol.u_norm, math.sqrt(3.5), rel_tol=1e-12)
    assert math.isclose(float(f2 @ sol.u), 1.6, rel_tol=1e-12)
    f5 = np.zeros(32)
    f5[16:] = 1.0 / 4.0
    got = solve_poisson(f5).u_norm
    want = float(np.linalg.norm(np.linalg.solve(stiffness_matrix(5), f5)))
    assert math.isclose(got, want, rel_tol=1e-12)
    assert got > 50.0  # ill conditioning makes the solution norm grow fast


def test_solve_poisson_input_validation():
    with pytest.raises(ValueError):
        solve_poisson(np.ones(3) / math.sqrt(3.0))
    with pytest.raises(ValueError):
        solve_poisson(np.ones(4))  # not unit norm
    with pytest.raises(ValueError):
        solve_poisson(np.array([1.0j, 0, 0, 0]))


# ---------------------------------------------------------------------------
# Measured decompositions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("method", DECOMPOSITION_METHODS)
@pytest.mark.parametrize("n", [2, 3, 4])
def test_decomposition_reconstructs_matrix_on_states(method, n):
    """const*s + sum coeff * V^dag diag(eig) V s must equal A s exactly."""
    rng = np.random.default_rng(100 * n)
    d = decompose(n, method, h_mesh=0.5)
    a = stiffness_matrix(n, 0.5)
    for _ in range(5):
        s = _random_state(rng, n)
        acc = d.constant * s.copy()
        for t in d.terms:
            assert t.circuit.num_params == 0
            v = apply_circuit(s, t.circuit)
            acc = acc + t.coeff * apply_circuit(t.eigenvalues * v, t.circuit.inverse())
        assert np.abs(acc - a @ s).max() < 1e-12


@pytest.mark.parametrize("method", DECOMPOSITION_METHODS)
def test_decomposition_matrix_and_expectation(method):
    d = decompose(3, method, h_mesh=1.0)
    a = stiffness_matrix(3, 1.0)
    assert np.abs(d.matrix() - a).max() < 1e-12
    rng = np.random.default_rng(3)
    s = _random_state(rng, 3)
    assert math.isclose(d.expectation(s), float(np.real(s.conj() @ a @ s)), abs_tol=1e-12)


def test_pauli_coefficients_two_qubits():
    d = decompose(2, "pauli")
    assert dict(d.pauli_strings) == {"II": 2.0, "IX": -1.0, "XX": -0.5, "YY": -0.5}
    assert pauli_terms(2) == list(d.pauli_strings)


def test_pauli_strings_rebuild_matrix():
    for n in (2, 3):
        a = stiffness_matrix(n)
        acc = sum(c * _kron_label(lab) for lab, c in pauli_terms(n))
        assert np.abs(acc - a).max() < 1e-12


def test_pauli_coefficients_scale_with_h():
    base = dict(pauli_terms(3, 1.0))
    scaled = dict(pauli_terms(3, 0.1))
    for lab, c in base.items():
        assert math.isclose(scaled[lab], c / 0.1, rel_tol=1e-12)


def test_pauli_qubit_cap():
    with pytest.raises(ValueError):
        pauli_terms(MAX_PAULI_QUBITS + 1)


def test_decompose_validation():
    with pytest.raises(ValueError):
        decompose(1, "liu21")
    with pytest.raises(ValueError):
        decompose(3, "nope")


def test_term_counts():
    assert decompose(5, "liu21").num_circuits == 5
    assert decompose(5, "sato21").num_circuits == 2
    assert decompose(5, "liu21grouped").num_circuits == 2
    assert decompose(5, "pauli").num_circuits == 16


def test_constant_term_matches_h():
    for h in (1.0, 0.3):
        for method in DECOMPOSITION_METHODS:
            assert math.isclose(decompose(3, method, h).constant, 2.0 / h, rel_tol=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_entangling_cost_ordering(n):
    """Pauli bases are free of entanglers; the ladder stays cheaper than shifts."""
    totals = {
        m: sum(cnot_count(t.circuit) for t in decompose(n, m).terms)
        for m in DECOMPOSITION_METHODS
    }
    assert totals["pauli"] == 0
    assert 0 < totals["liu21"] < totals["liu21grouped"] < totals["sato21"]


def test_eigenvalue_lookup_uses_msb_first_bitstrings():
    d = decompose(2, "sato21")
    t = d.terms[0]
    assert t.eigenvalue("01") == float(t.eigenvalues[1])
    assert t.eigenvalue("10") == float(t.eigenvalues[2])


def test_cnot_weight_cases():
    assert cnot_weight(cx(0, 1)) == 1
    assert cnot_weight(rzz(0, 1, 0.3)) == 2
    assert cnot_weight(ry(0, 0.1)) == 0
    assert cnot_weight(Gate("ry", (1,), (0,), (0.1,))) == 2
    assert cnot_weight(mcx((0, 1, 2), 3)) == 12


def test_cnot_count_sums_gate_weights():
    c = Circuit(3, 0, (cx(0, 1), rzz(1, 2, 0.5), ry(0, 0.2)))
    assert cnot_count(c) == 3
