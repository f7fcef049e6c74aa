"""Stiffness operator of the 1-D finite-element Poisson problem.

The operator on ``N = 2**n`` interior nodes with mesh width ``h`` is

    A = (1/h) * tridiag(-1, 2, -1)

(Dirichlet boundaries).  This module provides the dense matrix, its analytic
spectrum, a banded classical solve, and four shot-measurable decompositions

    A = constant * I + sum_k coeff_k * V_k^dag diag(eig_k) V_k

where each ``V_k`` is a short measurement circuit and ``eig_k`` maps measured
bitstrings to real eigenvalues.  All four methods reproduce A exactly; they
differ in circuit count and entangling-gate depth:

* ``pauli``        O(2**n) weighted Pauli strings, grouped qubit-wise,
                   rotation-only circuits (n <= 10).
* ``sato21``       two circuits: X on qubit 0, and X conjugated by a cyclic
                   increment, with the wrap-around pair removed in the
                   eigenvalue map.
* ``liu21``        n circuits: X on qubit 0 plus one CX-ladder circuit per
                   odd-pair sector.
* ``liu21grouped`` two circuits: all odd-pair sectors folded into one
                   fan-out + controlled-H interference circuit (n >= 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solveh_banded

from .circuits import Circuit, Gate, cx, h, mcx, rz, x
from . import sim

__all__ = [
    "stiffness_matrix",
    "stiffness_eigenvalues",
    "solve_poisson",
    "PoissonSolution",
    "MeasuredTerm",
    "Decomposition",
    "decompose",
    "pauli_terms",
    "DECOMPOSITION_METHODS",
    "cnot_weight",
    "cnot_count",
]

MAX_PAULI_QUBITS = 10


def stiffness_matrix(num_qubits: int, h_mesh: float = 1.0) -> np.ndarray:
    """Dense stiffness matrix on ``2**num_qubits`` nodes."""
    n = 1 << num_qubits
    a = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    return a / h_mesh


def stiffness_eigenvalues(num_qubits: int, h_mesh: float = 1.0) -> np.ndarray:
    """Analytic spectrum: (2 - 2 cos(k pi / (N+1))) / h, k = 1..N (ascending)."""
    n = 1 << num_qubits
    k = np.arange(1, n + 1)
    return (2.0 - 2.0 * np.cos(k * np.pi / (n + 1))) / h_mesh


@dataclass(frozen=True)
class PoissonSolution:
    """Classical reference solution of ``A u = f/h`` with unit-norm forcing."""

    num_qubits: int
    h_mesh: float
    f_state: np.ndarray  # unit-norm forcing amplitudes
    u: np.ndarray        # classical solution vector
    u_norm: float
    u_state: np.ndarray  # u / ||u||


def solve_poisson(f_state: np.ndarray, h_mesh: float = 1.0) -> PoissonSolution:
    """Solve the tridiagonal system for a unit-norm forcing vector.

    The forcing enters rescaled so that ``h * ||f|| = 1``, i.e. the classical
    right-hand side is ``f_state / h``.  Uses a banded Cholesky solve.
    """
    f_state = np.asarray(f_state)
    size = f_state.shape[0]
    num_qubits = int(round(math.log2(size)))
    if 1 << num_qubits != size:
        raise ValueError("forcing vector length must be a power of two")
    if not math.isclose(float(np.linalg.norm(f_state)), 1.0, rel_tol=1e-9):
        raise ValueError("forcing vector must have unit norm")
    if np.abs(f_state.imag).max() if np.iscomplexobj(f_state) else False:
        raise ValueError("forcing vector must be real")
    fr = f_state.real.astype(float)
    # upper banded form for solveh_banded: row 0 superdiagonal, row 1 diagonal
    ab = np.zeros((2, size))
    ab[0, 1:] = -1.0 / h_mesh
    ab[1, :] = 2.0 / h_mesh
    u = solveh_banded(ab, fr / h_mesh)
    u_norm = float(np.linalg.norm(u))
    return PoissonSolution(num_qubits, h_mesh, fr, u, u_norm, u / u_norm)


# ---------------------------------------------------------------------------
# Measured decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasuredTerm:
    """One measured contribution ``coeff * V^dag diag(eig) V``."""

    coeff: float
    circuit: Circuit
    eigenvalues: np.ndarray = field(repr=False)
    label: str = ""

    def eigenvalue(self, bitstring: str) -> float:
        """Eigenvalue assigned to a measured bitstring (MSB first)."""
        return float(self.eigenvalues[int(bitstring, 2)])

    def matrix(self) -> np.ndarray:
        """Dense ``V^dag diag(eig) V`` (without the coefficient)."""
        size = 1 << self.circuit.num_qubits
        v = np.empty((size, size), dtype=np.complex128)
        for i in range(size):
            e = np.zeros(size, dtype=np.complex128)
            e[i] = 1.0
            v[:, i] = sim.apply_circuit(e, self.circuit)
        return v.conj().T @ (self.eigenvalues[:, None] * v)


@dataclass(frozen=True)
class Decomposition:
    """``A = constant * I + sum coeff_k * V_k^dag diag(eig_k) V_k``."""

    num_qubits: int
    h_mesh: float
    method: str
    constant: float
    terms: tuple[MeasuredTerm, ...]
    pauli_strings: tuple[tuple[str, float], ...] = ()

    @property
    def num_circuits(self) -> int:
        return len(self.terms)

    def expectation(self, state: np.ndarray) -> float:
        """Exact ``<state|A|state>`` evaluated through the measured terms."""
        total = self.constant
        for term in self.terms:
            rotated = sim.apply_circuit(state, term.circuit)
            probs = np.abs(rotated) ** 2
            total += term.coeff * float(probs @ term.eigenvalues)
        return total

    def matrix(self) -> np.ndarray:
        """Dense reconstruction of A from the measured terms."""
        size = 1 << self.num_qubits
        a = self.constant * np.eye(size, dtype=np.complex128)
        for term in self.terms:
            a += term.coeff * term.matrix()
        return a


def _bits(size: int, q: int) -> np.ndarray:
    return (np.arange(size) >> q) & 1


def _ix_term(n: int, coeff: float) -> MeasuredTerm:
    size = 1 << n
    eig = np.where(_bits(size, 0) == 0, 1.0, -1.0)
    return MeasuredTerm(coeff, Circuit(n, 0, (h(0),)), eig, "IX")


def _liu21_ladder(n: int, m: int, coeff: float) -> MeasuredTerm:
    """Odd-pair sector m: CX fan from qubit 0 onto 1..m, then H on qubit 0.

    The measured pattern (bit m = 1, bits m-1..1 = 0) carries eigenvalue
    (-1)^{bit 0}; everything else reads 0.
    """
    size = 1 << n
    gates = tuple(cx(0, q) for q in range(1, m + 1)) + (h(0),)
    pattern = (_bits(size, m) == 1)
    for q in range(1, m):
        pattern &= _bits(size, q) == 0
    eig = np.where(pattern, np.where(_bits(size, 0) == 0, 1.0, -1.0), 0.0)
    return MeasuredTerm(coeff, Circuit(n, 0, gates), eig, f"ladder{m}")


def _increment_circuit(n: int) -> tuple[Gate, ...]:
    """|k> -> |k+1 mod 2**n>: ripple-carry MCX ladder, top down, then X(0)."""
    gates = [mcx(tuple(range(i)), i) for i in range(n - 1, 0, -1)]
    gates.append(x(0))
    return tuple(gates)


def _sato21_shifted_term(n: int, coeff: float) -> MeasuredTerm:
    size = 1 << n
    gates = _increment_circuit(n) + (h(0),)
    upper_nonzero = (np.arange(size) >> 1) != 0
    eig = np.where(upper_nonzero, np.where(_bits(size, 0) == 0, 1.0, -1.0), 0.0)
    return MeasuredTerm(coeff, Circuit(n, 0, gates), eig, "shiftedIX")


def _liu21grouped_term(n: int, coeff: float) -> MeasuredTerm:
    """All odd-pair sectors in one circuit.

    Fan out qubit 0 onto every other qubit, H on qubit 0, then for each sector
    m = n-2..1 apply H to every qubit above m, controlled on the sector pattern
    (bit m = 1, bits m-1..1 = 0; the zero controls are X-dressed).  A measured
    string with lowest set bit m among bits 1..n-1 reads
    (-1)^{bit0 + number of ones above m}.
    """
    size = 1 << n
    gates: list[Gate] = [cx(0, q) for q in range(1, n)]
    gates.append(h(0))
    for m in range(n - 2, 0, -1):
        dress = [x(q) for q in range(1, m)]
        gates += dress
        controls = tuple(range(1, m + 1))
        gates += [Gate("h", (t,), controls) for t in range(m + 1, n)]
        gates += dress
    eig = np.zeros(size)
    idx = np.arange(size)
    sign0 = np.where(_bits(size, 0) == 0, 1.0, -1.0)
    # lowest set bit among bits 1..n-1 selects the sector
    upper = idx >> 1
    for i in range(size):
        u = upper[i]
        if u == 0:
            continue
        m = 1
        while not (u & 1):
            u >>= 1
            m += 1
        above_ones = bin(int(idx[i]) >> (m + 1)).count("1")
        eig[i] = sign0[i] * (-1.0) ** above_ones
    return MeasuredTerm(coeff, Circuit(n, 0, tuple(gates)), eig, "grouped")


# --- Pauli route -----------------------------------------------------------


_PAULI_LETTERS = "IXYZ"


def _string_label(codes: np.ndarray) -> str:
    # codes[q] for qubit q; label written MSB first
    return "".join(_PAULI_LETTERS[c] for c in codes[::-1])


def pauli_terms(num_qubits: int, h_mesh: float = 1.0) -> list[tuple[str, float]]:
    """Weighted Pauli strings of the stiffness matrix (zero coefficients dropped).

    Labels are written most-significant qubit first.  Coefficients are
    ``Tr(P A) / 2**n``.  Only strings whose X-type support is a contiguous
    low block ``2**(m+1) - 1`` can have nonzero trace against a tridiagonal
    matrix, which keeps the scan at O(n 2**n) candidates.
    """
    n = num_qubits
    if n > MAX_PAULI_QUBITS:
        raise ValueError(f"pauli decomposition supported up to {MAX_PAULI_QUBITS} qubits")
    size = 1 << n
    a = stiffness_matrix(n, h_mesh)
    idx = np.arange(size)
    out: list[tuple[str, float]] = [("I" * n, 2.0 / h_mesh)]

    def trace_coeff(codes: np.ndarray) -> float:
        xmask = 0
        zmask = 0
        n_y = 0
        for q, c in enumerate(codes):
            if c in (1, 2):
                xmask |= 1 << q
            if c in (2, 3):
                zmask |= 1 << q
            if c == 2:
                n_y += 1
        phase = (1j) ** n_y
        # P|j> = phase * (-1)^{popcount(j & zmask)} |j ^ xmask>
        lam = phase * (-1.0) ** _popcount(idx & zmask)
        tr = np.sum(lam * a[idx ^ xmask, idx])
        return float(np.real(tr)) / size

    # candidates: for each sector m, {X,Y} on qubits 0..m, {I,Z} above
    for m in range(n):
        low = m + 1
        for low_codes in range(1 << low):
            codes = np.zeros(n, dtype=int)
            n_y = 0
            for q in range(low):
                is_y = (low_codes >> q) & 1
                codes[q] = 2 if is_y else 1
                n_y += is_y
            if n_y % 2:  # odd Y count gives an imaginary trace: zero for real A
                continue
            for up_codes in range(1 << (n - low)):
                for q in range(low, n):
                    codes[q] = 3 if (up_codes >> (q - low)) & 1 else 0
                coeff = trace_coeff(codes)
                if abs(coeff) > 1e-12:
                    out.append((_string_label(codes), coeff))
    return out


def _popcount(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.int64)
    count = np.zeros_like(v)
    while np.any(v):
        count += v & 1
        v >>= 1
    return count


def _pauli_groups(strings: list[tuple[str, float]]) -> list[list[tuple[str, float]]]:
    """Greedy qubit-wise-commuting grouping (identity letters are wildcards)."""
    groups: list[tuple[list[str], list[tuple[str, float]]]] = []
    for label, coeff in strings:
        placed = False
        for basis, members in groups:
            ok = True
            for q, letter in enumerate(label):
                if letter != "I" and basis[q] != "I" and basis[q] != letter:
                    ok = False
                    break
            if ok:
                for q, letter in enumerate(label):
                    if letter != "I":
                        basis[q] = letter
                members.append((label, coeff))
                placed = True
                break
        if not placed:
            groups.append(([c for c in label], [(label, coeff)]))
    return [members for _, members in groups]


def _pauli_group_term(n: int, members: list[tuple[str, float]], basis: list[str]) -> MeasuredTerm:
    size = 1 << n
    gates: list[Gate] = []
    for q in range(n):
        letter = basis[n - 1 - q]  # labels are MSB first
        if letter == "X":
            gates.append(h(q))
        elif letter == "Y":
            gates.append(rz(q, -math.pi / 2))
            gates.append(h(q))
    eig = np.zeros(size)
    idx = np.arange(size)
    for label, coeff in members:
        support = 0
        for q in range(n):
            if label[n - 1 - q] != "I":
                support |= 1 << q
        eig = eig + coeff * (-1.0) ** _popcount(idx & support)
    label = "+".join(lbl for lbl, _ in members)
    return MeasuredTerm(1.0, Circuit(n, 0, tuple(gates)), eig, label)


def _pauli_decomposition(n: int, h_mesh: float) -> Decomposition:
    strings = pauli_terms(n, h_mesh)
    measured = [(lbl, c) for lbl, c in strings if set(lbl) != {"I"}]
    groups = _pauli_groups(measured)
    terms = []
    for members in groups:
        basis = ["I"] * n
        for label, _ in members:
            for q, letter in enumerate(label):
                if letter != "I":
                    basis[q] = letter
        terms.append(_pauli_group_term(n, members, basis))
    return Decomposition(
        n, h_mesh, "pauli", 2.0 / h_mesh, tuple(terms), tuple(strings)
    )


def decompose(num_qubits: int, method: str = "liu21", h_mesh: float = 1.0) -> Decomposition:
    """Build a measured decomposition of the stiffness matrix.

    ``method`` is one of ``pauli``, ``sato21``, ``liu21``, ``liu21grouped``.
    """
    n = num_qubits
    if n < 2:
        raise ValueError("decompositions are defined for 2 or more qubits")
    coeff = -1.0 / h_mesh
    const = 2.0 / h_mesh
    if method == "pauli":
        return _pauli_decomposition(n, h_mesh)
    if method == "sato21":
        terms = (_ix_term(n, coeff), _sato21_shifted_term(n, coeff))
    elif method == "liu21":
        terms = (_ix_term(n, coeff),) + tuple(
            _liu21_ladder(n, m, coeff) for m in range(1, n)
        )
    elif method == "liu21grouped":
        terms = (_ix_term(n, coeff), _liu21grouped_term(n, coeff))
    else:
        raise ValueError(f"unknown decomposition method {method!r}")
    return Decomposition(n, h_mesh, method, const, terms)


DECOMPOSITION_METHODS = ("pauli", "sato21", "liu21", "liu21grouped")


# ---------------------------------------------------------------------------
# Naive entangling-gate accounting
# ---------------------------------------------------------------------------


def cnot_weight(gate: Gate) -> int:
    """CNOT-equivalent weight of one gate under a naive decomposition model.

    Plain CX/CZ count 1, RZZ counts 2 (CX conjugation), a singly controlled
    rotation counts 2, and a gate with k >= 2 controls counts 6(k-1).
    """
    k = len(gate.controls)
    if k == 0:
        return 2 if gate.kind == "rzz" else 0
    if k == 1:
        return 1 if gate.kind in ("x", "z") else 2
    return 6 * (k - 1)


def cnot_count(circuit: Circuit) -> int:
    return sum(cnot_weight(g) for g in circuit.gates)
