"""Cost functions, parameter-shift gradients, and solution-quality metrics.

Four costs drive the variational solve of ``A u = f`` (states normalized, so
the scale of ``u`` is carried separately where needed):

* ``CN``   normalized:      -(1/2) (Re<f|psi>)^2 / <psi|A|psi>
* ``CNN``  non-normalized:  (1/2) s^4 <A> - s^2 Re<f|psi>, with the scale
           ``s = params[-1] + 1`` appended as an extra trainable parameter
* ``CG``   global:          1 - |<f|A|psi>|^2 / <psi|A^2|psi>
* ``CL``   local:           <psi|H_L|psi> / <psi|A^2|psi>

CN and CNN are built from shot estimators (Hadamard test or overlap-type for
the inner product, a measured decomposition for <A>) and support sampled
evaluation and sampled parameter-shift gradients.  CG and CL are dense
exact-backend costs; their gradients still use the parameter-shift rule on
the shifted quadratic forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .circuits import Circuit, ansatz as build_ansatz, rhs_circuit
from .estimation import EstimatorConfig, expval_A, hadamard_test_re, mlqae_overlap, overlap_test
from .poisson import Decomposition, PoissonSolution, decompose, solve_poisson
from . import sim
from .sim import NOISELESS, NoiseParams, derive_seed

__all__ = [
    "COST_KINDS",
    "INNER_METHODS",
    "Problem",
    "make_problem",
    "CostEval",
    "cost_value",
    "cost_gradient",
    "num_cost_parameters",
    "exact_cost",
    "circuit_count_report",
    "fidelity",
    "trace_distance_from_fidelity",
    "cosine_similarity",
    "relative_error",
    "TracedObjective",
]

COST_KINDS = ("CN", "CNN", "CG", "CL")
INNER_METHODS = ("hadamard", "overlap", "mlqae")

_TAG_INNER = 301
_TAG_EXPVAL = 302
_TAG_SHIFT = 303
_TAG_EVAL = 304
_TAG_GRAD = 305

DEFAULT_EPSILON = 1e-6


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def fidelity(state: np.ndarray, target: np.ndarray) -> float:
    """|<target|state>|^2 for unit-norm vectors."""
    return float(np.abs(np.vdot(target, state)) ** 2)


def trace_distance_from_fidelity(f: float) -> float:
    """Pure-state trace distance sqrt(1 - F)."""
    return math.sqrt(max(0.0, 1.0 - f))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def relative_error(estimate: float, exact: float, floor: float = 1e-12) -> float:
    return abs(estimate - exact) / max(abs(exact), floor)


# ---------------------------------------------------------------------------
# Problem bundle
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    """Everything a cost evaluation needs, with cached dense references."""

    num_qubits: int
    layers: int
    family: str
    rhs_kind: str
    h_mesh: float
    decomposition_method: str
    ansatz: Circuit
    rhs: Circuit
    decomposition: Decomposition

    @cached_property
    def matrix(self) -> np.ndarray:
        from .poisson import stiffness_matrix

        return stiffness_matrix(self.num_qubits, self.h_mesh)

    @cached_property
    def f_state(self) -> np.ndarray:
        return sim.statevector(self.rhs).real

    @cached_property
    def solution(self) -> PoissonSolution:
        return solve_poisson(self.f_state, self.h_mesh)

    @cached_property
    def matrix_sq(self) -> np.ndarray:
        return self.matrix @ self.matrix

    @cached_property
    def af(self) -> np.ndarray:
        return self.matrix @ self.f_state

    @cached_property
    def rhs_inverse(self) -> "Circuit":
        return self.rhs.inverse()

    @cached_property
    def local_weights(self) -> np.ndarray:
        """Diagonal of I - (1/n) sum_j |0_j><0_j| x I in the rhs frame."""
        n = self.num_qubits
        size = 1 << n
        zero_bits = np.zeros(size)
        for q in range(n):
            zero_bits += ((np.arange(size) >> q) & 1) == 0
        return 1.0 - zero_bits / n

    @cached_property
    def local_matrix(self) -> np.ndarray:
        """H_L = A U_f (I - (1/n) sum_j |0_j><0_j| x I) U_f^dag A."""
        size = 1 << self.num_qubits
        uf = np.empty((size, size), dtype=np.complex128)
        for i in range(size):
            e = np.zeros(size, dtype=np.complex128)
            e[i] = 1.0
            uf[:, i] = sim.apply_circuit(e, self.rhs)
        m = self.matrix @ uf @ np.diag(self.local_weights) @ uf.conj().T @ self.matrix
        return np.real(m)

    def num_params(self, kind: str) -> int:
        return self.ansatz.num_params + (1 if kind == "CNN" else 0)

    def split_params(self, kind: str, params: np.ndarray) -> tuple[np.ndarray, float]:
        """(rotation angles, scale s).  s = last + 1 for CNN, else 1."""
        params = np.asarray(params, dtype=float)
        if kind == "CNN":
            if params.shape[0] != self.ansatz.num_params + 1:
                raise ValueError("CNN expects one extra scale parameter")
            return params[:-1], float(params[-1]) + 1.0
        if params.shape[0] != self.ansatz.num_params:
            raise ValueError("parameter vector length mismatch")
        return params, 1.0


def make_problem(
    num_qubits: int,
    layers: int,
    family: str = "LinearAltRYCZ",
    rhs_kind: str = "hnx",
    h_mesh: float = 1.0,
    decomposition: str = "liu21",
    jump_qubit: int | None = None,
) -> Problem:
    a = build_ansatz(family, num_qubits, layers)
    r = rhs_circuit(rhs_kind, num_qubits, jump_qubit)
    d = decompose(num_qubits, decomposition, h_mesh)
    return Problem(num_qubits, layers, family, rhs_kind, h_mesh, decomposition, a, r, d)


def num_cost_parameters(problem: Problem, kind: str) -> int:
    return problem.num_params(kind)


# ---------------------------------------------------------------------------
# Cost evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostEval:
    value: float
    inner: float       # Re<f|psi> (hadamard) or |<f|psi>|^2 (overlap/mlqae)
    expval: float      # <psi|A|psi> (nan for CG/CL)
    clamped: bool


def _check_kind(kind: str, innerp: str) -> None:
    if kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {kind!r}")
    if innerp not in INNER_METHODS:
        raise ValueError(f"unknown inner-product method {innerp!r}")


def _inner_estimate(problem: Problem, circ: Circuit, params, cfg: EstimatorConfig, innerp: str) -> float:
    if innerp == "hadamard":
        return hadamard_test_re(circ, problem.rhs, params, cfg)
    if innerp == "overlap":
        return overlap_test(circ, problem.rhs, params, cfg)
    res = mlqae_overlap(
        circ, problem.rhs, params, shots=cfg.shots, seed=cfg.seed, noise=cfg.noise
    )
    return res.a


def _signed_inner(inner: float, innerp: str) -> float:
    """Signed Re<f|psi> from whatever the inner estimator returned."""
    if innerp == "hadamard":
        return inner
    return math.sqrt(max(0.0, inner))


def cost_value(
    problem: Problem,
    kind: str,
    params,
    cfg: EstimatorConfig = EstimatorConfig(),
    innerp: str = "hadamard",
    epsilon: float = DEFAULT_EPSILON,
) -> CostEval:
    """Evaluate one cost.  Sampled mode derives child seeds per estimator.

    CN divides by the estimated <A>, floored at ``epsilon`` (the ``clamped``
    flag reports when the floor engaged).  CG and CL are exact-backend only.
    """
    _check_kind(kind, innerp)
    theta, s = problem.split_params(kind, np.asarray(params, dtype=float))
    if kind in ("CG", "CL"):
        if cfg.shots is not None:
            raise ValueError(f"{kind} is an exact-backend cost; shots are not supported")
        psi = sim.statevector(problem.ansatz, theta)
        d = float(np.real(psi.conj() @ problem.matrix_sq @ psi))
        if kind == "CG":
            g = complex(np.vdot(problem.af, psi))
            value = 1.0 - abs(g) ** 2 / d
        else:
            nl = float(np.real(psi.conj() @ problem.local_matrix @ psi))
            value = nl / d
        return CostEval(value, math.nan, math.nan, False)

    inner_cfg = EstimatorConfig(cfg.shots, derive_seed(cfg.seed, _TAG_INNER), cfg.noise)
    exp_cfg = EstimatorConfig(cfg.shots, derive_seed(cfg.seed, _TAG_EXPVAL), cfg.noise)
    inner = _inner_estimate(problem, problem.ansatz, theta, inner_cfg, innerp)
    e_a = expval_A(problem.decomposition, problem.ansatz, theta, exp_cfg)
    if kind == "CN":
        denom = max(e_a, epsilon)
        clamped = e_a < epsilon
        num = inner**2 if innerp == "hadamard" else inner
        return CostEval(-0.5 * num / denom, inner, e_a, clamped)
    r = _signed_inner(inner, innerp)
    value = 0.5 * s**4 * e_a - s**2 * r
    return CostEval(value, inner, e_a, False)


def exact_cost(
    problem: Problem,
    kind: str,
    params,
    innerp: str = "hadamard",
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Dense noiseless cost value (fast reference path for traces)."""
    _check_kind(kind, innerp)
    theta, s = problem.split_params(kind, np.asarray(params, dtype=float))
    psi = sim.statevector(problem.ansatz, theta)
    if kind in ("CG", "CL"):
        d = float(np.real(psi.conj() @ problem.matrix_sq @ psi))
        if kind == "CG":
            return 1.0 - abs(complex(np.vdot(problem.af, psi))) ** 2 / d
        return float(np.real(psi.conj() @ problem.local_matrix @ psi)) / d
    r = float(np.real(np.vdot(problem.f_state, psi)))
    e_a = float(np.real(psi.conj() @ problem.matrix @ psi))
    if kind == "CN":
        num = r**2 if innerp == "hadamard" else abs(np.vdot(problem.f_state, psi)) ** 2
        return -0.5 * num / max(e_a, epsilon)
    r_eff = r if innerp == "hadamard" else abs(complex(np.vdot(problem.f_state, psi)))
    return 0.5 * s**4 * e_a - s**2 * r_eff


# ---------------------------------------------------------------------------
# Gradients (parameter shift)
# ---------------------------------------------------------------------------


def _occurrence_param_index(circ: Circuit) -> np.ndarray:
    return np.array([pi for _, _, pi in circ.param_occurrences()], dtype=int)


def _linear_shift_rule(circ: Circuit) -> tuple[np.ndarray, np.ndarray]:
    """(shift, weight) per occurrence for the *linear* overlap Re<f|psi>.

    The state is single-harmonic in each rotation angle at frequency 1/2
    (amplitudes go as cos/sin of theta/2), so the exact rule there is a +-pi
    shift with weight 1/4.  The u3 phase angles enter as e^{i phi}: frequency
    1, shifted by +-pi/2 with weight 1/2.
    """
    deltas, weights = [], []
    for gi, si, _ in circ.param_occurrences():
        if circ.gates[gi].kind == "u3" and si in (1, 2):
            deltas.append(math.pi / 2)
            weights.append(0.5)
        else:
            deltas.append(math.pi)
            weights.append(0.25)
    return np.array(deltas), np.array(weights)


def _shift_rows(circ: Circuit, deltas: np.ndarray | None = None) -> np.ndarray:
    """Interleaved (+,-) occurrence-shift offset rows.

    Expectation-type primitives are single-harmonic at frequency 1 in every
    angle (including u3 phases), so their shift is +-pi/2 throughout; pass
    ``deltas`` for the frequency-aware linear-overlap shifts.
    """
    n_occ = len(circ.param_occurrences())
    if deltas is None:
        deltas = np.full(n_occ, math.pi / 2)
    offs = np.zeros((2 * n_occ, n_occ))
    for o in range(n_occ):
        offs[2 * o, o] = deltas[o]
        offs[2 * o + 1, o] = -deltas[o]
    return offs


def _batch_states(circ: Circuit, theta: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    base = np.tile(sim.zero_state(circ.num_qubits), (offsets.shape[0], 1))
    return sim.apply_circuit(base, circ, theta, occurrence_offsets=offsets)


def _collapse_occurrences(diffs: np.ndarray, occ_param: np.ndarray, num_params: int) -> np.ndarray:
    grad = np.zeros(num_params)
    np.add.at(grad, occ_param, diffs)
    return grad


def _stiffness_rows(rows: np.ndarray, h: float) -> np.ndarray:
    """A applied to each row, using the tridiagonal structure of A."""
    out = 2.0 * rows
    out[..., :-1] -= rows[..., 1:]
    out[..., 1:] -= rows[..., :-1]
    out /= h
    return out


def _exact_shift_primitives(
    problem: Problem, theta: np.ndarray, kind: str, innerp: str
) -> dict[str, np.ndarray]:
    """Per-occurrence shift derivatives of the primitives ``kind`` needs."""
    circ = problem.ansatz
    out: dict[str, np.ndarray] = {}
    if kind in ("CG", "CL"):
        rows = _batch_states(circ, theta, _shift_rows(circ))
        v = _stiffness_rows(rows, problem.h_mesh)
        out["d"] = _pair_diff(np.sum(np.abs(v) ** 2, axis=1))  # <A^2> = |A psi|^2
        if kind == "CG":
            out["n_g"] = _pair_diff(np.abs(rows @ problem.af) ** 2)
        else:
            w = sim.apply_circuit(v, problem.rhs_inverse)
            out["n_l"] = _pair_diff(np.abs(w) ** 2 @ problem.local_weights)
        return out
    f = problem.f_state
    if innerp == "hadamard":
        # One simulator pass covers both shift families: expectation rows
        # (+-pi/2) stacked on the frequency-aware linear-overlap rows.
        deltas, weights = _linear_shift_rule(circ)
        offs = np.vstack([_shift_rows(circ), _shift_rows(circ, deltas)])
        stacked = _batch_states(circ, theta, offs)
        rows, rows_lin = np.split(stacked, 2)
        r_vals = np.real(rows_lin @ f)
        out["r"] = weights * (r_vals[0::2] - r_vals[1::2])
    else:
        rows = _batch_states(circ, theta, _shift_rows(circ))
        out["a"] = _pair_diff(np.abs(rows @ f) ** 2)
    v = _stiffness_rows(rows, problem.h_mesh)
    out["e"] = _pair_diff(np.real(np.einsum("rn,rn->r", rows.conj(), v)))
    return out


def _pair_diff(vals: np.ndarray) -> np.ndarray:
    """0.5 * (plus - minus) per occurrence from interleaved rows."""
    return 0.5 * (vals[0::2] - vals[1::2])


def _sampled_shift_primitives(
    problem: Problem, theta: np.ndarray, cfg: EstimatorConfig, innerp: str
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled per-occurrence derivatives of the inner product and <A>.

    The expectation-type shifts are +-pi/2 with weight 1/2; the hadamard
    (linear) inner product uses its frequency-aware shifts.  Every shifted
    evaluation draws fresh counts under a seed derived from the occurrence.
    """
    circ = problem.ansatz
    n_occ = len(circ.param_occurrences())
    if innerp == "hadamard":
        deltas, weights = _linear_shift_rule(circ)
    else:
        deltas = np.full(n_occ, math.pi / 2)
        weights = np.full(n_occ, 0.5)
    inner_d = np.zeros(n_occ)
    exp_d = np.zeros(n_occ)
    for o in range(n_occ):
        inner_pm = []
        exp_pm = []
        for s_idx, sign in enumerate((1.0, -1.0)):
            icfg = EstimatorConfig(
                cfg.shots, derive_seed(cfg.seed, _TAG_SHIFT, _TAG_INNER, o, s_idx), cfg.noise
            )
            bound = circ.shifted(o, sign * deltas[o], theta)
            inner_pm.append(_inner_estimate(problem, bound, None, icfg, innerp))
            ecfg = EstimatorConfig(
                cfg.shots, derive_seed(cfg.seed, _TAG_SHIFT, _TAG_EXPVAL, o, s_idx), cfg.noise
            )
            bound_e = circ.shifted(o, sign * math.pi / 2, theta)
            exp_pm.append(expval_A(problem.decomposition, bound_e, None, ecfg))
        inner_d[o] = weights[o] * (inner_pm[0] - inner_pm[1])
        exp_d[o] = 0.5 * (exp_pm[0] - exp_pm[1])
    return inner_d, exp_d


def cost_gradient(
    problem: Problem,
    kind: str,
    params,
    cfg: EstimatorConfig = EstimatorConfig(),
    innerp: str = "hadamard",
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Parameter-shift gradient of a cost.

    Each parameter *occurrence* is shifted by the angle matching its harmonic
    content (+-pi/2 for expectation-type primitives and u3 phases, +-pi for
    the linear Hadamard-test overlap, whose amplitudes move at half frequency)
    and the primitive estimates are recombined by the chain rule; occurrences
    of a shared parameter are summed.  Sampled mode is available for CN and
    CNN (each shifted evaluation draws fresh counts under a derived seed);
    CG and CL gradients run on the exact backend only.
    """
    _check_kind(kind, innerp)
    params = np.asarray(params, dtype=float)
    theta, s = problem.split_params(kind, params)
    circ = problem.ansatz
    occ_param = _occurrence_param_index(circ)
    p = circ.num_params

    if kind in ("CG", "CL") and cfg.shots is not None:
        raise ValueError(f"{kind} gradients are exact-backend only")

    if cfg.shots is None:
        psi = sim.statevector(circ, theta)
        prim = _exact_shift_primitives(problem, theta, kind, innerp)
        if kind in ("CG", "CL"):
            d0 = float(np.real(psi.conj() @ problem.matrix_sq @ psi))
            d_p = _collapse_occurrences(prim["d"], occ_param, p)
            if kind == "CG":
                n0 = abs(complex(np.vdot(problem.af, psi))) ** 2
                n_p = _collapse_occurrences(prim["n_g"], occ_param, p)
                return -n_p / d0 + n0 * d_p / d0**2
            n0 = float(np.real(psi.conj() @ problem.local_matrix @ psi))
            n_p = _collapse_occurrences(prim["n_l"], occ_param, p)
            return n_p / d0 - n0 * d_p / d0**2
        r0 = float(np.real(np.vdot(problem.f_state, psi)))
        a0 = abs(complex(np.vdot(problem.f_state, psi))) ** 2
        e0 = float(np.real(psi.conj() @ problem.matrix @ psi))
        inner0 = r0 if innerp == "hadamard" else a0
        inner_d = _collapse_occurrences(
            prim["r" if innerp == "hadamard" else "a"], occ_param, p
        )
        e_d = _collapse_occurrences(prim["e"], occ_param, p)
    else:
        ce = cost_value(problem, kind, params, cfg, innerp, epsilon)
        inner0, e0 = ce.inner, ce.expval
        inner_vals, exp_vals = _sampled_shift_primitives(problem, theta, cfg, innerp)
        inner_d = _collapse_occurrences(inner_vals, occ_param, p)
        e_d = _collapse_occurrences(exp_vals, occ_param, p)

    if kind == "CN":
        denom = max(e0, epsilon)
        clamped = e0 < epsilon
        if innerp == "hadamard":
            grad = -inner0 * inner_d / denom
        else:
            grad = -0.5 * inner_d / denom
        if not clamped:
            num = inner0**2 if innerp == "hadamard" else inner0
            grad = grad + 0.5 * num * e_d / denom**2
        return grad

    # CNN
    r0 = _signed_inner(inner0, innerp)
    if innerp == "hadamard":
        r_d = inner_d
    else:
        r_d = inner_d / (2.0 * max(r0, 1e-12))
    grad_theta = 0.5 * s**4 * e_d - s**2 * r_d
    grad_s = 2.0 * s**3 * e0 - 2.0 * s * r0
    return np.concatenate([grad_theta, [grad_s]])


def circuit_count_report(problem: Problem, kind: str, innerp: str = "hadamard") -> dict[str, int]:
    """Circuit-execution accounting for one cost + gradient step.

    ``*_module`` counts what this implementation actually runs: the inner
    product plus each decomposition circuit per cost call, and two shifted
    cost calls per parameter occurrence for the gradient.  ``*_reported``
    follows the published tally (n+1 circuits per cost, 2n+1 per parameter),
    which does not coincide with the module count in general; both are given.
    """
    n = problem.num_qubits
    p = problem.ansatz.num_params
    occ = len(problem.ansatz.param_occurrences())
    per_cost = problem.decomposition.num_circuits + 1
    return {
        "cost_circuits_module": per_cost,
        "gradient_circuits_module": 2 * occ * per_cost,
        "step_circuits_module": per_cost * (1 + 2 * occ),
        "step_circuits_reported": (n + 1) + (2 * n + 1) * p,
    }


# ---------------------------------------------------------------------------
# Traced objective for the optimizers
# ---------------------------------------------------------------------------


@dataclass
class EvalRecord:
    index: int
    value: float
    exact_value: float
    fidelity: float
    clamped: bool
    params: np.ndarray = field(repr=False)


class TracedObjective:
    """Callable cost with per-evaluation seeding, tracing, and exact references.

    Each call gets an independent child seed derived from (master_seed, call
    index), so the objective is reproducible as a whole while individual
    evaluations see fresh shot noise.  The trace records the sampled value,
    the dense exact value, and the fidelity against the classical solution.
    """

    def __init__(
        self,
        problem: Problem,
        kind: str,
        *,
        innerp: str = "hadamard",
        shots: int | None = None,
        noise: NoiseParams = NOISELESS,
        master_seed: int = 0,
        epsilon: float = DEFAULT_EPSILON,
    ) -> None:
        _check_kind(kind, innerp)
        self.problem = problem
        self.kind = kind
        self.innerp = innerp
        self.shots = shots
        self.noise = noise
        self.master_seed = master_seed
        self.epsilon = epsilon
        self.trace: list[EvalRecord] = []
        self.n_grad_calls = 0

    @property
    def num_params(self) -> int:
        return self.problem.num_params(self.kind)

    @property
    def n_evals(self) -> int:
        return len(self.trace)

    def _state_fidelity(self, params: np.ndarray) -> float:
        theta, _ = self.problem.split_params(self.kind, params)
        psi = sim.statevector(self.problem.ansatz, theta)
        return fidelity(psi, self.problem.solution.u_state)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        cfg = EstimatorConfig(
            self.shots, derive_seed(self.master_seed, _TAG_EVAL, self.n_evals), self.noise
        )
        ce = cost_value(self.problem, self.kind, x, cfg, self.innerp, self.epsilon)
        if self.shots is None:
            exact = ce.value
        else:
            exact = exact_cost(self.problem, self.kind, x, self.innerp, self.epsilon)
        self.trace.append(
            EvalRecord(self.n_evals, ce.value, exact, self._state_fidelity(x), ce.clamped, x.copy())
        )
        return ce.value

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cfg = EstimatorConfig(
            self.shots, derive_seed(self.master_seed, _TAG_GRAD, self.n_grad_calls), self.noise
        )
        self.n_grad_calls += 1
        return cost_gradient(self.problem, self.kind, x, cfg, self.innerp, self.epsilon)

    def best(self) -> EvalRecord:
        if not self.trace:
            raise RuntimeError("objective has not been evaluated")
        return min(self.trace, key=lambda r: r.value)

    def clamp_fraction(self) -> float:
        if not self.trace:
            return 0.0
        return sum(r.clamped for r in self.trace) / len(self.trace)
