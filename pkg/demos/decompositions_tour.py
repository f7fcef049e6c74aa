"""Compare the four measured decompositions of the stiffness matrix.

Each method writes A = const*I + sum_k coeff_k V_k^dag diag(eig_k) V_k with a
different trade-off between circuit count and entangling-gate cost.  The
script prints that trade-off table and spot-checks exactness on a random
state.
"""

import numpy as np

from vqls_poisson.poisson import (
    DECOMPOSITION_METHODS,
    cnot_count,
    decompose,
    stiffness_matrix,
)
from vqls_poisson.sim import apply_circuit

N = 5

print(f"stiffness matrix at n={N} ({1 << N} x {1 << N}), h=1\n")
print(f"{'method':<14} {'circuits':>8} {'entanglers':>11}")
for method in DECOMPOSITION_METHODS:
    d = decompose(N, method)
    total_cx = sum(cnot_count(t.circuit) for t in d.terms)
    print(f"{method:<14} {d.num_circuits:>8} {total_cx:>11}")

rng = np.random.default_rng(0)
state = rng.normal(size=1 << N) + 1j * rng.normal(size=1 << N)
state /= np.linalg.norm(state)
dense = float(np.real(state.conj() @ stiffness_matrix(N) @ state))

print(f"\n<psi|A|psi> on a random state, dense reference {dense:.12f}")
for method in DECOMPOSITION_METHODS:
    d = decompose(N, method)
    val = d.constant
    for t in d.terms:
        probs = np.abs(apply_circuit(state, t.circuit)) ** 2
        val += t.coeff * float(np.sum(t.eigenvalues * probs))
    print(f"  {method:<14} {val:.12f}  (|err| = {abs(val - dense):.2e})")
