"""Dense statevector simulation with seeded sampling and trajectory noise.

States are complex128 arrays of shape ``(2**n,)`` or batched ``(B, 2**n)``,
little-endian: basis index ``i`` has qubit ``q`` equal to ``(i >> q) & 1``.
Measurement bitstrings are written most-significant qubit first, so qubit 0
is the *last* character.

Everything here is a pure function of its inputs plus an integer seed; equal
inputs and seeds give bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuits import Circuit, Gate, ParamRef

__all__ = [
    "NoiseParams",
    "NOISELESS",
    "zero_state",
    "statevector",
    "apply_circuit",
    "probabilities",
    "sample_counts",
    "sample_counts_noisy",
    "marginal_counts",
    "counts_to_probs",
    "derive_seed",
]

MAX_QUBITS = 24
# Cap on batch_size * state_size handled per chunk by the trajectory sampler.
_CHUNK_AMPLITUDES = 1 << 20


@dataclass(frozen=True)
class NoiseParams:
    """Stochastic noise strengths.

    After every gate, each qubit the gate touches receives a Pauli drawn
    uniformly from {I, X, Y, Z} with probability ``p1`` (single-qubit gates)
    or ``p2`` (gates touching two or more qubits).  Each measured bit flips
    with probability ``p_readout``.
    """

    p1: float = 0.0
    p2: float = 0.0
    p_readout: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_readout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.p_readout == 0.0


NOISELESS = NoiseParams()


def derive_seed(*parts: int) -> int:
    """Deterministically derive a child seed from integer parts."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def zero_state(num_qubits: int) -> np.ndarray:
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}]")
    state = np.zeros(1 << num_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def _bit(q: int, size: int) -> np.ndarray:
    return (np.arange(size) >> q) & 1


def _control_mask(controls: tuple[int, ...], size: int) -> np.ndarray:
    mask = np.ones(size, dtype=bool)
    for c in controls:
        mask &= _bit(c, size) == 1
    return mask


def _entries_1q(kind: str, angles: Sequence) -> tuple:
    """2x2 matrix entries (m00, m01, m10, m11); angle entries may be arrays."""
    if kind == "x":
        return 0.0, 1.0, 1.0, 0.0
    if kind == "h":
        s = 1.0 / math.sqrt(2.0)
        return s, s, s, -s
    if kind == "z":
        return 1.0, 0.0, 0.0, -1.0
    if kind == "rx":
        t = np.asarray(angles[0]) / 2.0
        c, s = np.cos(t), np.sin(t)
        return c, -1j * s, -1j * s, c
    if kind == "ry":
        t = np.asarray(angles[0]) / 2.0
        c, s = np.cos(t), np.sin(t)
        return c, -s, s, c
    if kind == "rz":
        t = np.asarray(angles[0]) / 2.0
        em, ep = np.exp(-1j * t), np.exp(1j * t)
        return em, 0.0, 0.0, ep
    if kind == "u3":
        t = np.asarray(angles[0]) / 2.0
        phi, lam = np.asarray(angles[1]), np.asarray(angles[2])
        c, s = np.cos(t), np.sin(t)
        return (
            c + 0j,
            -np.exp(1j * lam) * s,
            np.exp(1j * phi) * s,
            np.exp(1j * (phi + lam)) * c,
        )
    raise ValueError(f"no 1q matrix for kind {kind!r}")


def _col(v) -> object:
    """Broadcast a per-row coefficient against (B, M) slices."""
    return v[:, None] if isinstance(v, np.ndarray) and v.ndim == 1 else v


def _apply_1q(states: np.ndarray, q: int, entries: tuple) -> None:
    m00, m01, m10, m11 = entries
    b, size = states.shape
    view = states.reshape(b, size >> (q + 1), 2, 1 << q)
    lo = view[:, :, 0, :].copy()
    hi = view[:, :, 1, :]
    if isinstance(m00, np.ndarray) and m00.ndim == 1:
        m00, m01, m10, m11 = (m[:, None, None] for m in map(np.atleast_1d, entries))
    view[:, :, 0, :] = m00 * lo + m01 * hi
    view[:, :, 1, :] = m10 * lo + m11 * hi


def _apply_1q_controlled(states: np.ndarray, q: int, controls: tuple, entries: tuple) -> None:
    m00, m01, m10, m11 = (_col(m) for m in entries)
    size = states.shape[1]
    sel = _control_mask(controls, size) & (_bit(q, size) == 0)
    idx0 = np.nonzero(sel)[0]
    idx1 = idx0 | (1 << q)
    s0 = states[:, idx0]
    s1 = states[:, idx1]
    states[:, idx0] = m00 * s0 + m01 * s1
    states[:, idx1] = m10 * s0 + m11 * s1


def _apply_diagonal(states: np.ndarray, gate: Gate, angles: Sequence) -> None:
    size = states.shape[1]
    ctrl = _control_mask(gate.controls, size)
    if gate.kind == "z":
        sel = ctrl & (_bit(gate.targets[0], size) == 1)
        states[:, sel] *= -1.0
        return
    theta = np.asarray(angles[0])
    em, ep = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    if gate.kind == "rz":
        plus = ctrl & (_bit(gate.targets[0], size) == 1)
        minus = ctrl & ~ (_bit(gate.targets[0], size) == 1)
    else:  # rzz: -theta/2 phase on equal bits, +theta/2 on unequal
        a, b = gate.targets
        neq = _bit(a, size) != _bit(b, size)
        plus = ctrl & neq
        minus = ctrl & ~neq
    states[:, plus] *= _col(ep)
    states[:, minus] *= _col(em)


def _apply_gate(states: np.ndarray, gate: Gate, angles: Sequence) -> None:
    if gate.kind in ("z", "rz", "rzz"):
        _apply_diagonal(states, gate, angles)
    elif gate.controls:
        _apply_1q_controlled(states, gate.targets[0], gate.controls, _entries_1q(gate.kind, angles))
    else:
        _apply_1q(states, gate.targets[0], _entries_1q(gate.kind, angles))


def _resolve_angles(
    gate_index: int,
    gate: Gate,
    params,
    occ_lookup: Mapping[tuple[int, int], int] | None,
    occurrence_offsets,
) -> list:
    angles = []
    for slot, a in enumerate(gate.angles):
        if isinstance(a, ParamRef):
            val = params[..., a.index]
            if occurrence_offsets is not None:
                oi = occ_lookup[(gate_index, slot)]
                val = val + occurrence_offsets[:, oi]
            angles.append(val)
        else:
            angles.append(a)
    return angles


def apply_circuit(
    state: np.ndarray,
    circuit: Circuit,
    params: Sequence[float] | np.ndarray | None = None,
    *,
    occurrence_offsets: np.ndarray | None = None,
) -> np.ndarray:
    """Apply ``circuit`` to ``state`` and return the new state.

    Parameters
    ----------
    state : ndarray
        Shape ``(2**n,)`` or ``(B, 2**n)``.  Not modified.
    params : sequence or ndarray, optional
        Parameter vector ``(num_params,)``, or ``(B, num_params)`` for
        row-wise parameter sets on a batched state.
    occurrence_offsets : ndarray, optional
        Shape ``(B, len(circuit.param_occurrences()))``; entry ``[r, o]`` is
        added to occurrence ``o``'s angle in row ``r``.  This is how batched
        parameter-shift evaluations run in one pass.
    """
    single = state.ndim == 1
    states = np.array(state, dtype=np.complex128, copy=True, ndmin=2)
    if states.shape[1] != 1 << circuit.num_qubits:
        raise ValueError("state size does not match circuit register")
    if circuit.num_params:
        if params is None:
            raise ValueError("circuit has unbound parameters but no params were given")
        params = np.asarray(params, dtype=float)
    occ_lookup = None
    if occurrence_offsets is not None:
        occurrence_offsets = np.asarray(occurrence_offsets, dtype=float)
        occ_lookup = {
            (gi, si): oi for oi, (gi, si, _) in enumerate(circuit.param_occurrences())
        }
    for gi, gate in enumerate(circuit.gates):
        angles = _resolve_angles(gi, gate, params, occ_lookup, occurrence_offsets)
        _apply_gate(states, gate, angles)
    return states[0] if single else states


def statevector(circuit: Circuit, params: Sequence[float] | None = None) -> np.ndarray:
    """Convenience: run ``circuit`` on the all-zeros state."""
    return apply_circuit(zero_state(circuit.num_qubits), circuit, params)


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    return p / p.sum(axis=-1, keepdims=True)


def _bitstring(index: int, num_qubits: int) -> str:
    return format(index, f"0{num_qubits}b")


def sample_counts(state: np.ndarray, shots: int, seed: int) -> dict[str, int]:
    """Sample ``shots`` measurement outcomes from ``state``.

    Returns a counts dict keyed by bitstring (most significant qubit first).
    Deterministic in (state, shots, seed).
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    if state.ndim != 1:
        raise ValueError("sample_counts takes a single state, not a batch")
    n = int(round(math.log2(state.shape[-1])))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = rng.multinomial(shots, probabilities(state))
    return {_bitstring(i, n): int(c) for i, c in enumerate(hits) if c}


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One outcome index per row by inverse-CDF sampling."""
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(probs.shape[0])
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


_PAULI_X, _PAULI_Y, _PAULI_Z = 1, 2, 3


def _apply_pauli_rows(states: np.ndarray, rows: np.ndarray, q: int, which: int) -> None:
    if not rows.any():
        return
    sub = states[rows]
    view = sub.reshape(sub.shape[0], sub.shape[1] >> (q + 1), 2, 1 << q)
    if which == _PAULI_X:
        view[:, :, [0, 1], :] = view[:, :, [1, 0], :]
    elif which == _PAULI_Y:
        lo = view[:, :, 0, :].copy()
        view[:, :, 0, :] = -1j * view[:, :, 1, :]
        view[:, :, 1, :] = 1j * lo
    else:
        view[:, :, 1, :] *= -1.0
    states[rows] = sub


def sample_counts_noisy(
    circuit: Circuit,
    shots: int,
    seed: int,
    noise: NoiseParams,
    params: Sequence[float] | None = None,
) -> dict[str, int]:
    """Sample from ``circuit`` under stochastic Pauli + readout noise.

    Runs one trajectory per shot: after each gate, every touched qubit gets a
    uniformly random Pauli (I/X/Y/Z) with probability ``p1`` or ``p2``; the
    measured bitstring has each bit flipped with probability ``p_readout``.
    With all rates zero this delegates to the noiseless path and returns
    bit-identical counts for the same seed.
    """
    if noise.is_zero:
        return sample_counts(statevector(circuit, params), shots, seed)
    if shots < 1:
        raise ValueError("shots must be positive")
    if not circuit.is_bound and params is None:
        raise ValueError("circuit has unbound parameters but no params were given")
    bound = circuit if circuit.is_bound else circuit.bind(params)
    n = circuit.num_qubits
    size = 1 << n
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    chunk = max(1, _CHUNK_AMPLITUDES // size)
    totals = np.zeros(size, dtype=np.int64)
    done = 0
    while done < shots:
        b = min(chunk, shots - done)
        states = np.zeros((b, size), dtype=np.complex128)
        states[:, 0] = 1.0
        for gate in bound.gates:
            _apply_gate(states, gate, gate.angles)
            p_err = noise.p1 if len(gate.qubits) == 1 else noise.p2
            if p_err == 0.0:
                continue
            for q in gate.qubits:
                hit = rng.random(b) < p_err
                which = rng.integers(0, 4, size=b)
                for pauli in (_PAULI_X, _PAULI_Y, _PAULI_Z):
                    _apply_pauli_rows(states, hit & (which == pauli), q, pauli)
        idx = _sample_rows(np.abs(states) ** 2, rng)
        if noise.p_readout > 0.0:
            flips = rng.random((b, n)) < noise.p_readout
            idx = idx ^ (flips @ (1 << np.arange(n))).astype(idx.dtype)
        totals += np.bincount(idx, minlength=size)
        done += b
    return {_bitstring(i, n): int(c) for i, c in enumerate(totals) if c}


def marginal_counts(counts: Mapping[str, int], qubits: Sequence[int]) -> dict[str, int]:
    """Marginalize counts onto ``qubits`` (result keys: highest given qubit first)."""
    if len(qubits) == 0:
        raise ValueError("cannot marginalize onto an empty qubit set")
    kept = sorted(set(qubits), reverse=True)
    out: dict[str, int] = {}
    for key, c in counts.items():
        n = len(key)
        sub = "".join(key[n - 1 - q] for q in kept)
        out[sub] = out.get(sub, 0) + c
    return out


def counts_to_probs(counts: Mapping[str, int], num_qubits: int) -> np.ndarray:
    """Empirical probability vector (length 2**num_qubits) from a counts dict."""
    p = np.zeros(1 << num_qubits)
    total = 0
    for key, c in counts.items():
        p[int(key, 2)] += c
        total += c
    return p / total
