"""Why more shots stop helping once gate noise enters.

Estimates the normalized cost at random parameter points under a fixed
noise injection while sweeping the total shot budget.  Without noise the
error keeps falling like 1/sqrt(shots); with noise it saturates at the
bias floor.
"""

import math

import numpy as np

from vqls_poisson.estimation import EstimatorConfig
from vqls_poisson.sim import NOISELESS, NoiseParams
from vqls_poisson.vqls import cost_value, exact_cost, make_problem

NOISE = NoiseParams(p1=0.001, p2=0.01, p_readout=0.02)
BUDGETS = (100, 300, 1000, 3000, 10000)
NUM_POINTS = 200

problem = make_problem(2, 1, decomposition="sato21")
rng = np.random.default_rng(1000)
thetas = rng.uniform(0, 2 * math.pi, (NUM_POINTS, problem.ansatz.num_params))


def mean_abs_error(noise):
    errors = []
    for budget in BUDGETS:
        shots = budget // 3  # three measured circuits share the budget
        tot = 0.0
        for i, theta in enumerate(thetas):
            cfg = EstimatorConfig(shots=shots, seed=9000 + i, noise=noise)
            est = cost_value(problem, "CN", theta, cfg, innerp="overlap").value
            tot += abs(est - exact_cost(problem, "CN", theta))
        errors.append(tot / NUM_POINTS)
    return errors


clean = mean_abs_error(NOISELESS)
noisy = mean_abs_error(NOISE)

print(f"{'budget':>7} {'clean error':>12} {'noisy error':>12}")
for budget, c, s in zip(BUDGETS, clean, noisy):
    print(f"{budget:>7} {c:>12.5f} {s:>12.5f}")

print("\nclean estimates keep improving; the noisy column flattens once")
print("shot noise drops below the bias injected by the gate errors.")
