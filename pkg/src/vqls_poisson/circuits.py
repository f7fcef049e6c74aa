"""Gate-level circuit IR and the ansatz / right-hand-side builders.

Circuits are immutable sequences of :class:`Gate` records over a little-endian
qubit register (qubit 0 is the least significant bit of a basis index).  Gate
angles are either bound floats or :class:`ParamRef` placeholders into a flat
parameter vector, which keeps parameter-shift bookkeeping trivial: every
reference is one *occurrence* of the parameter it points at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

__all__ = [
    "ParamRef",
    "Gate",
    "Circuit",
    "ANSATZ_FAMILIES",
    "RHS_KINDS",
    "ansatz",
    "num_parameters",
    "rhs_circuit",
    "x",
    "h",
    "rx",
    "ry",
    "rz",
    "u3",
    "cx",
    "cz",
    "rzz",
    "mcx",
    "controlled",
]


@dataclass(frozen=True)
class ParamRef:
    """Reference to entry ``index`` of a circuit's parameter vector."""

    index: int


Angle = Union[float, ParamRef]

# kind -> (number of target qubits, number of angles)
GATE_KINDS: dict[str, tuple[int, int]] = {
    "x": (1, 0),
    "h": (1, 0),
    "z": (1, 0),  # only valid with at least one control (CZ and its k-controlled forms)
    "rx": (1, 1),
    "ry": (1, 1),
    "rz": (1, 1),
    "u3": (1, 3),
    "rzz": (2, 1),
}

# Gates whose matrix is real in the computational basis.  States built from
# these (on |0...0>) have real amplitudes, which is what makes the overlap
# test usable as a Re<f|psi> reader.
REAL_KINDS = frozenset({"x", "h", "z", "ry"})


@dataclass(frozen=True)
class Gate:
    """One gate application: ``kind`` on ``targets``, conditioned on ``controls``.

    ``angles`` holds the gate's rotation angles (empty for fixed gates); each
    entry is a float or a :class:`ParamRef`.  Controls may decorate any kind,
    which covers the base set's CX/CZ and the k-controlled single-qubit forms,
    and also lets composite constructions (Hadamard-test control promotion)
    stay inside the IR.
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angles: tuple[Angle, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        n_targets, n_angles = GATE_KINDS[self.kind]
        if len(self.targets) != n_targets:
            raise ValueError(
                f"{self.kind} takes {n_targets} target(s), got {self.targets!r}"
            )
        if len(self.angles) != n_angles:
            raise ValueError(
                f"{self.kind} takes {n_angles} angle(s), got {len(self.angles)}"
            )
        if self.kind == "z" and not self.controls:
            raise ValueError("bare Z is not in the gate set; use cz(a, b)")
        touched = self.targets + self.controls
        if len(set(touched)) != len(touched):
            raise ValueError(f"duplicate qubit in gate: {touched!r}")

    @property
    def qubits(self) -> tuple[int, ...]:
        """All qubits the gate touches (targets then controls)."""
        return self.targets + self.controls

    @property
    def is_bound(self) -> bool:
        return not any(isinstance(a, ParamRef) for a in self.angles)


def x(q: int) -> Gate:
    return Gate("x", (q,))


def h(q: int) -> Gate:
    return Gate("h", (q,))


def rx(q: int, angle: Angle) -> Gate:
    return Gate("rx", (q,), angles=(angle,))


def ry(q: int, angle: Angle) -> Gate:
    return Gate("ry", (q,), angles=(angle,))


def rz(q: int, angle: Angle) -> Gate:
    return Gate("rz", (q,), angles=(angle,))


def u3(q: int, theta: Angle, phi: Angle, lam: Angle) -> Gate:
    return Gate("u3", (q,), angles=(theta, phi, lam))


def cx(control: int, target: int) -> Gate:
    return Gate("x", (target,), controls=(control,))


def cz(a: int, b: int) -> Gate:
    # CZ is symmetric; we store it as controlled Z on b.
    return Gate("z", (b,), controls=(a,))


def rzz(a: int, b: int, angle: Angle) -> Gate:
    return Gate("rzz", (a, b), angles=(angle,))


def mcx(controls: Sequence[int], target: int) -> Gate:
    return Gate("x", (target,), controls=tuple(controls))


def controlled(gate: Gate, *controls: int) -> Gate:
    """Add control qubits to an existing gate."""
    return replace(gate, controls=gate.controls + tuple(controls))


def _resolve_refs(angles: Iterable[Angle], values: Sequence[float]) -> tuple[Angle, ...]:
    out: list[Angle] = []
    for a in angles:
        out.append(float(values[a.index]) if isinstance(a, ParamRef) else a)
    return tuple(out)


@dataclass(frozen=True)
class Circuit:
    """An immutable gate list over ``num_qubits`` qubits and ``num_params`` parameters."""

    num_qubits: int
    num_params: int
    gates: tuple[Gate, ...]

    def __post_init__(self) -> None:
        if self.num_qubits < 1:
            raise ValueError("need at least one qubit")
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(f"qubit {q} out of range for {self.num_qubits} qubits")
            for a in g.angles:
                if isinstance(a, ParamRef) and not 0 <= a.index < self.num_params:
                    raise ValueError(f"parameter index {a.index} out of range")

    @property
    def is_bound(self) -> bool:
        return all(g.is_bound for g in self.gates)

    def param_occurrences(self) -> tuple[tuple[int, int, int], ...]:
        """Every (gate_index, angle_slot, param_index) that references a parameter.

        The order of this tuple is the canonical occurrence order used by the
        parameter-shift machinery and by batched angle offsets.
        """
        occ: list[tuple[int, int, int]] = []
        for gi, g in enumerate(self.gates):
            for si, a in enumerate(g.angles):
                if isinstance(a, ParamRef):
                    occ.append((gi, si, a.index))
        return tuple(occ)

    def bind(self, values: Sequence[float]) -> "Circuit":
        """Return a fully bound copy with parameters replaced by ``values``."""
        if len(values) != self.num_params:
            raise ValueError(f"expected {self.num_params} values, got {len(values)}")
        gates = tuple(
            replace(g, angles=_resolve_refs(g.angles, values)) if not g.is_bound else g
            for g in self.gates
        )
        return Circuit(self.num_qubits, 0, gates)

    def shifted(self, occurrence: int, delta: float, values: Sequence[float]) -> "Circuit":
        """Bind to ``values`` with one parameter *occurrence* offset by ``delta``.

        Other occurrences of the same parameter keep the unshifted value; this
        is exactly the per-occurrence evaluation the parameter-shift rule sums.
        """
        gi, si, pi = self.param_occurrences()[occurrence]
        bound = self.bind(values)
        g = bound.gates[gi]
        new_angles = list(g.angles)
        new_angles[si] = float(values[pi]) + delta
        gates = list(bound.gates)
        gates[gi] = replace(g, angles=tuple(new_angles))
        return Circuit(self.num_qubits, 0, tuple(gates))

    def controlled(self, control: int, num_qubits: int) -> "Circuit":
        """Add ``control`` to every gate, widening the register to ``num_qubits``."""
        if control < self.num_qubits or control >= num_qubits:
            raise ValueError("control qubit must lie outside the original register")
        gates = tuple(controlled(g, control) for g in self.gates)
        return Circuit(num_qubits, self.num_params, gates)

    def inverse(self) -> "Circuit":
        """Reverse the gate order and negate angles.  Requires a bound circuit."""
        if not self.is_bound:
            raise ValueError("cannot invert an unbound circuit")
        inv: list[Gate] = []
        for g in reversed(self.gates):
            if g.kind == "u3":
                t, p, l = g.angles
                inv.append(replace(g, angles=(-t, -l, -p)))
            elif g.angles:
                inv.append(replace(g, angles=tuple(-a for a in g.angles)))
            else:
                inv.append(g)  # x, h, z are self-inverse
        return Circuit(self.num_qubits, 0, tuple(inv))

    def concat(self, other: "Circuit") -> "Circuit":
        """Append ``other`` (which must be bound) after this circuit."""
        if other.num_qubits != self.num_qubits:
            raise ValueError("register size mismatch")
        if other.num_params:
            raise ValueError("can only append a bound circuit")
        return Circuit(self.num_qubits, self.num_params, self.gates + other.gates)

    def embedded(self, num_qubits: int) -> "Circuit":
        """View this circuit on a wider register (extra qubits untouched)."""
        if num_qubits < self.num_qubits:
            raise ValueError("cannot shrink a circuit")
        return Circuit(num_qubits, self.num_params, self.gates)

    def count_kind(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)

    @property
    def has_complex_gates(self) -> bool:
        """True if any gate can produce complex amplitudes from real input."""
        return any(g.kind not in REAL_KINDS for g in self.gates)

    # --- plain text round-trip -------------------------------------------------

    def to_text(self) -> str:
        lines = [f"qubits {self.num_qubits}", f"params {self.num_params}"]
        for g in self.gates:
            parts = [g.kind, "t=" + ",".join(map(str, g.targets))]
            if g.controls:
                parts.append("c=" + ",".join(map(str, g.controls)))
            if g.angles:
                parts.append(
                    "a=" + ",".join(
                        f"p{a.index}" if isinstance(a, ParamRef) else repr(float(a))
                        for a in g.angles
                    )
                )
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if len(lines) < 2 or not lines[0].startswith("qubits ") or not lines[1].startswith("params "):
            raise ValueError("malformed circuit text")
        nq = int(lines[0].split()[1])
        np_ = int(lines[1].split()[1])
        gates: list[Gate] = []
        for ln in lines[2:]:
            fields = ln.split()
            kind = fields[0]
            targets: tuple[int, ...] = ()
            ctrls: tuple[int, ...] = ()
            angles: tuple[Angle, ...] = ()
            for f in fields[1:]:
                key, _, val = f.partition("=")
                if key == "t":
                    targets = tuple(int(v) for v in val.split(","))
                elif key == "c":
                    ctrls = tuple(int(v) for v in val.split(","))
                elif key == "a":
                    angles = tuple(
                        ParamRef(int(v[1:])) if v.startswith("p") else float(v)
                        for v in val.split(",")
                    )
                else:
                    raise ValueError(f"bad field {f!r}")
            gates.append(Gate(kind, targets, ctrls, angles))
        return cls(nq, np_, tuple(gates))


# ---------------------------------------------------------------------------
# Ansatz families
# ---------------------------------------------------------------------------


def _even_pairs(n: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(0, n - 1, 2)]


def _odd_pairs(n: int) -> list[tuple[int, int]]:
    return [(q, q + 1) for q in range(1, n - 1, 2)]


def _touched(pairs: list[tuple[int, int]]) -> list[int]:
    return sorted({q for p in pairs for q in p})


def _linear_ryz(n: int, layers: int) -> Circuit:
    gates: list[Gate] = []
    k = 0
    for q in range(n):
        gates.append(ry(q, ParamRef(k)))
        k += 1
    for _ in range(layers):
        for q in range(n - 1):
            gates.append(cz(q, q + 1))
        for q in range(n):
            gates.append(ry(q, ParamRef(k)))
            k += 1
    return Circuit(n, k, tuple(gates))


def _linear_alt_ryz(n: int, layers: int) -> Circuit:
    gates: list[Gate] = []
    k = 0
    for q in range(n):
        gates.append(ry(q, ParamRef(k)))
        k += 1
    for _ in range(layers):
        for pairs in (_even_pairs(n), _odd_pairs(n)):
            for a, b in pairs:
                gates.append(cz(a, b))
            for q in _touched(pairs):
                gates.append(ry(q, ParamRef(k)))
                k += 1
    return Circuit(n, k, tuple(gates))


def _rot_triple(q: int, k: int) -> tuple[list[Gate], int]:
    gs = [rx(q, ParamRef(k)), ry(q, ParamRef(k + 1)), rz(q, ParamRef(k + 2))]
    return gs, k + 3


def _linear_alt_periodic_u3(n: int, layers: int) -> Circuit:
    gates: list[Gate] = []
    k = 0
    for q in range(n):
        gs, k = _rot_triple(q, k)
        gates += gs
    for _ in range(layers):
        for pairs in (_even_pairs(n), _odd_pairs(n)):
            for a, b in pairs:
                gates.append(cx(a, b))
            for q in _touched(pairs):
                gs, k = _rot_triple(q, k)
                gates += gs
        gates.append(cx(0, n - 1))
        for q in (0, n - 1):
            gs, k = _rot_triple(q, k)
            gates += gs
    return Circuit(n, k, tuple(gates))


def _linear_alt_periodic_bidir_rz(n: int, layers: int) -> Circuit:
    gates: list[Gate] = []
    k = 0
    for q in range(n):
        gates.append(rz(q, ParamRef(k)))
        k += 1

    def sweep(forward: bool, k: int) -> int:
        for pairs in (_even_pairs(n), _odd_pairs(n)):
            for a, b in pairs:
                gates.append(cx(a, b) if forward else cx(b, a))
            for q in _touched(pairs):
                gates.append(rz(q, ParamRef(k)))
                k += 1
        gates.append(cx(0, n - 1) if forward else cx(n - 1, 0))
        for q in (0, n - 1):
            gates.append(rz(q, ParamRef(k)))
            k += 1
        return k

    for _ in range(layers):
        k = sweep(True, k)
    for _ in range(layers):
        k = sweep(False, k)
    return Circuit(n, k, tuple(gates))


def _qaoa(n: int, layers: int, periodic: bool) -> Circuit:
    gates: list[Gate] = [h(q) for q in range(n)]
    for layer in range(layers):
        gamma, beta = ParamRef(2 * layer), ParamRef(2 * layer + 1)
        for q in range(n - 1):
            gates.append(rzz(q, q + 1, gamma))
        if periodic and n > 2:
            # Figure-literal boundary coupling: an RX(+-pi/2) sandwich around a
            # CX-conjugated RZ, which acts as RYY(gamma) on the (0, n-1) pair.
            half = math.pi / 2
            gates += [rx(0, half), rx(n - 1, half), cx(0, n - 1), rz(n - 1, gamma)]
            gates += [cx(0, n - 1), rx(0, -half), rx(n - 1, -half)]
        for q in range(n):
            gates.append(rx(q, beta))
    return Circuit(n, 2 * layers, tuple(gates))


def _linear_rot_cx(kind: str):
    def build(n: int, layers: int) -> Circuit:
        gates: list[Gate] = []
        k = 0

        def column(k: int) -> int:
            for q in range(n):
                if kind == "u3":
                    gates.append(u3(q, ParamRef(k), ParamRef(k + 1), ParamRef(k + 2)))
                    k += 3
                else:
                    gates.append(Gate(kind, (q,), angles=(ParamRef(k),)))
                    k += 1
            return k

        k = column(k)
        for _ in range(layers):
            for q in range(n - 1):
                gates.append(cx(q, q + 1))
            k = column(k)
        return Circuit(n, k, tuple(gates))

    return build


ANSATZ_FAMILIES = {
    "LinearRYCZ": _linear_ryz,
    "LinearAltRYCZ": _linear_alt_ryz,
    "LinearAltPeriodicU3CX": _linear_alt_periodic_u3,
    "LinearAltPeriodicBidirRZCX": _linear_alt_periodic_bidir_rz,
    "QAOA": lambda n, l: _qaoa(n, l, periodic=False),
    "QAOAPeriodic": lambda n, l: _qaoa(n, l, periodic=True),
    "LinearRXCX": _linear_rot_cx("rx"),
    "LinearRZCX": _linear_rot_cx("rz"),
    "LinearU3CX": _linear_rot_cx("u3"),
}


def ansatz(family: str, num_qubits: int, num_layers: int) -> Circuit:
    """Build ansatz ``family`` on ``num_qubits`` qubits with ``num_layers`` layers."""
    if family not in ANSATZ_FAMILIES:
        raise ValueError(f"unknown ansatz family {family!r}; choose from {sorted(ANSATZ_FAMILIES)}")
    if num_qubits < 2:
        raise ValueError("ansatz families are defined for 2 or more qubits")
    if num_layers < 0:
        raise ValueError("num_layers must be non-negative")
    return ANSATZ_FAMILIES[family](num_qubits, num_layers)


def num_parameters(family: str, num_qubits: int, num_layers: int) -> int:
    """Closed-form parameter count for an ansatz family.

    Always equals ``ansatz(...).num_params``; kept separate so experiment
    configs can size parameter vectors without building circuits.
    """
    n, l = num_qubits, num_layers
    formulas = {
        "LinearRYCZ": n * (l + 1),
        "LinearAltRYCZ": n + l * (2 * n - 2),
        "LinearAltPeriodicU3CX": 3 * n * (2 * l + 1),
        "LinearAltPeriodicBidirRZCX": n + 4 * n * l,
        "QAOA": 2 * l,
        "QAOAPeriodic": 2 * l,
        "LinearRXCX": n * (l + 1),
        "LinearRZCX": n * (l + 1),
        "LinearU3CX": 3 * n * (l + 1),
    }
    if family not in formulas:
        raise ValueError(f"unknown ansatz family {family!r}")
    return formulas[family]


# ---------------------------------------------------------------------------
# Right-hand-side state preparation
# ---------------------------------------------------------------------------


RHS_KINDS = ("hn", "hnx")


def rhs_circuit(kind: str, num_qubits: int, jump_qubit: int | None = None) -> Circuit:
    """State preparation for the forcing term.

    ``"hn"`` prepares the uniform superposition H^{(x)n}|0>.  ``"hnx"`` puts an
    X on ``jump_qubit`` (default: the most significant qubit, n-1) and H on
    every other qubit, i.e. a uniform forcing over the upper half of the
    domain; for three qubits the amplitudes are 1/2 on indices {4,5,6,7}.
    """
    n = num_qubits
    if kind == "hn":
        return Circuit(n, 0, tuple(h(q) for q in range(n)))
    if kind == "hnx":
        jq = n - 1 if jump_qubit is None else jump_qubit
        if not 0 <= jq < n:
            raise ValueError(f"jump_qubit {jq} out of range")
        gates = [x(jq)] + [h(q) for q in range(n) if q != jq]
        return Circuit(n, 0, tuple(gates))
    raise ValueError(f"unknown rhs kind {kind!r}; choose 'hn' or 'hnx'")
