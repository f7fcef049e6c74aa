"""Shot-based estimators for inner products and operator expectations.

Every estimator runs in one of two modes controlled by
:class:`EstimatorConfig`: exact (``shots=None``), which evaluates the ideal
expectation from the statevector, and sampled, which draws seeded counts
(optionally through the stochastic noise model) and returns the empirical
estimate.  For fixed inputs and seed the sampled mode is deterministic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .circuits import Circuit, Gate, ParamRef, h, rz, x
from .poisson import Decomposition
from . import sim
from .sim import NOISELESS, NoiseParams, derive_seed

__all__ = [
    "EstimatorConfig",
    "hadamard_test_re",
    "hadamard_test_im",
    "overlap_test",
    "expval_A",
    "mlqae_overlap",
    "MLQAEResult",
]

# fixed tags for deterministic per-term / per-power seed derivation
_TAG_TERM = 101
_TAG_POWER = 202


@dataclass(frozen=True)
class EstimatorConfig:
    """How to evaluate expectations: exact (shots=None) or sampled."""

    shots: int | None = None
    seed: int = 0
    noise: NoiseParams = NOISELESS

    def __post_init__(self) -> None:
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive or None")
        if self.shots is None and not self.noise.is_zero:
            raise ValueError("noise requires sampled mode (set shots)")


def _counts(circuit: Circuit, params, cfg: EstimatorConfig, seed: int) -> dict[str, int]:
    if cfg.noise.is_zero:
        return sim.sample_counts(sim.statevector(circuit, params), cfg.shots, seed)
    return sim.sample_counts_noisy(circuit, cfg.shots, seed, cfg.noise, params)


def _hadamard_circuit(prep: Circuit, rhs: Circuit, imaginary: bool) -> Circuit:
    n = prep.num_qubits
    if rhs.num_qubits != n:
        raise ValueError("prep and rhs must share a register")
    anc = n
    gates: list[Gate] = [h(anc)]
    gates += list(prep.controlled(anc, n + 1).gates)
    gates.append(x(anc))
    gates += list(rhs.controlled(anc, n + 1).gates)
    if imaginary:
        gates.append(rz(anc, -math.pi / 2))
    gates.append(h(anc))
    return Circuit(n + 1, prep.num_params, tuple(gates))


def _hadamard_estimate(
    prep: Circuit, rhs: Circuit, params, cfg: EstimatorConfig, imaginary: bool
) -> float:
    circ = _hadamard_circuit(prep, rhs, imaginary)
    anc = prep.num_qubits
    if cfg.shots is None:
        state = sim.statevector(circ, params)
        p1 = float(np.sum(np.abs(state.reshape(2, -1)[1]) ** 2))
        return 1.0 - 2.0 * p1
    counts = sim.marginal_counts(_counts(circ, params, cfg, cfg.seed), [anc])
    return (counts.get("0", 0) - counts.get("1", 0)) / cfg.shots


def hadamard_test_re(
    prep: Circuit, rhs: Circuit, params=None, cfg: EstimatorConfig = EstimatorConfig()
) -> float:
    """Estimate Re<f|psi>: ancilla-controlled prep and rhs, X-flip in between.

    The ancilla (qubit n) is measured; P(0) - P(1) is the real part of the
    overlap between the prepared state and the right-hand side.
    """
    return _hadamard_estimate(prep, rhs, params, cfg, imaginary=False)


def hadamard_test_im(
    prep: Circuit, rhs: Circuit, params=None, cfg: EstimatorConfig = EstimatorConfig()
) -> float:
    """Imaginary-part variant: an extra RZ(-pi/2) on the ancilla.

    Returns Im<psi|f> under the same measurement convention.  Unused by the
    cost functions (the forcing states are real) but kept for completeness.
    """
    return _hadamard_estimate(prep, rhs, params, cfg, imaginary=True)


def overlap_circuit(prep: Circuit, rhs: Circuit) -> Circuit:
    """prep followed by the inverse rhs preparation; |<f|psi>|^2 = P(all zeros)."""
    return prep.concat(rhs.inverse())


def overlap_test(
    prep: Circuit, rhs: Circuit, params=None, cfg: EstimatorConfig = EstimatorConfig()
) -> float:
    """Estimate |<f|psi>|^2 from the all-zeros return probability.

    This equals (Re<f|psi>)^2 only when both circuits keep amplitudes real;
    a warning is raised when either contains complex-valued gates.
    """
    if prep.has_complex_gates or rhs.has_complex_gates:
        warnings.warn(
            "overlap test measures |<f|psi>|^2; with complex-amplitude gates "
            "the signed real part is not recoverable",
            stacklevel=2,
        )
    circ = overlap_circuit(prep, rhs)
    if cfg.shots is None:
        state = sim.statevector(circ, params)
        return float(np.abs(state[0]) ** 2)
    counts = _counts(circ, params, cfg, cfg.seed)
    return counts.get("0" * circ.num_qubits, 0) / cfg.shots


def expval_A(
    decomp: Decomposition,
    prep: Circuit,
    params=None,
    cfg: EstimatorConfig = EstimatorConfig(),
) -> float:
    """Estimate <psi|A|psi> through a measured decomposition.

    Sampled mode spends ``cfg.shots`` on each measured circuit, with a child
    seed derived per term, and sums ``coeff * mean(eigenvalue)``.
    """
    if prep.num_qubits != decomp.num_qubits:
        raise ValueError("prep register does not match the decomposition")
    if cfg.shots is None:
        state = sim.statevector(prep, params)
        return decomp.expectation(state)
    total = decomp.constant
    for k, term in enumerate(decomp.terms):
        circ = prep.concat(term.circuit)
        counts = _counts(circ, params, cfg, derive_seed(cfg.seed, _TAG_TERM, k))
        acc = 0.0
        for key, c in counts.items():
            acc += c * term.eigenvalues[int(key, 2)]
        total += term.coeff * acc / cfg.shots
    return total


# ---------------------------------------------------------------------------
# Maximum-likelihood amplitude estimation of the squared overlap
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MLQAEResult:
    """MLE of the good-state amplitude ``a = sin^2(theta)``."""

    a: float
    theta: float
    powers: tuple[int, ...]
    shots_per_power: int
    hits: tuple[int, ...]


def _reflect_zero(n: int) -> tuple[Gate, ...]:
    """I - 2|0...0><0...0| as gates: X-conjugated (n-1)-controlled Z."""
    flips = tuple(x(q) for q in range(n))
    cz_all = Gate("z", (n - 1,), tuple(range(n - 1)))
    return flips + (cz_all,) + flips


def grover_operator(good_prep: Circuit) -> Circuit:
    """Q = A S0 A^dag S0 for the good state |0...0> of ``good_prep``."""
    if not good_prep.is_bound:
        raise ValueError("amplitude estimation needs a bound preparation circuit")
    n = good_prep.num_qubits
    s0 = _reflect_zero(n)
    gates = s0 + good_prep.inverse().gates + s0 + good_prep.gates
    return Circuit(n, 0, gates)


def _log_likelihood(a: np.ndarray, powers, shots: int, hits) -> np.ndarray:
    theta = np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    total = np.zeros_like(np.asarray(a, dtype=float))
    for m, k in zip(powers, hits):
        p = np.sin((2 * m + 1) * theta) ** 2
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        total += k * np.log(p) + (shots - k) * np.log1p(-p)
    return total


def _golden_refine(fn, lo: float, hi: float, iters: int = 60) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def mlqae_overlap(
    prep: Circuit,
    rhs: Circuit,
    params=None,
    *,
    powers: tuple[int, ...] = (0, 1, 2, 4),
    shots: int | None = None,
    seed: int = 0,
    noise: NoiseParams = NOISELESS,
    grid_points: int = 10_000,
) -> MLQAEResult:
    """Amplitude estimation of ``a = |<f|psi>|^2`` by maximum likelihood.

    Runs the overlap circuit amplified by Grover powers ``m`` in ``powers``
    (``shots`` measurements each; the all-zeros string is the good outcome,
    hit with probability sin^2((2m+1) theta)), then maximizes the binomial
    likelihood on a uniform grid over [0, 1] refined by one golden-section
    pass.  ``shots=None`` returns the exact squared overlap.
    """
    w = overlap_circuit(prep if prep.is_bound else prep.bind(params), rhs)
    if shots is None:
        state = sim.statevector(w)
        a = float(np.abs(state[0]) ** 2)
        return MLQAEResult(a, math.asin(math.sqrt(min(a, 1.0))), tuple(powers), 0, ())
    n = w.num_qubits
    q = grover_operator(w)
    zeros = "0" * n
    hits: list[int] = []
    for i, m in enumerate(powers):
        gates = w.gates
        for _ in range(m):
            gates = gates + q.gates
        circ = Circuit(n, 0, gates)
        child = derive_seed(seed, _TAG_POWER, i)
        if noise.is_zero:
            counts = sim.sample_counts(sim.statevector(circ), shots, child)
        else:
            counts = sim.sample_counts_noisy(circ, shots, child, noise)
        hits.append(counts.get(zeros, 0))
    grid = np.linspace(0.0, 1.0, grid_points)
    ll = _log_likelihood(grid, powers, shots, hits)
    j = int(np.argmax(ll))
    lo = grid[max(0, j - 1)]
    hi = grid[min(grid_points - 1, j + 1)]
    a_hat = _golden_refine(
        lambda a: float(_log_likelihood(np.array([a]), powers, shots, hits)[0]), lo, hi
    )
    return MLQAEResult(
        float(a_hat),
        math.asin(math.sqrt(max(0.0, min(a_hat, 1.0)))),
        tuple(powers),
        shots,
        tuple(hits),
    )
