"""Shot-based training with the sequential sinusoid optimizer.

The derivative-free NFT routine fits one rotation angle at a time from
three cost evaluations, which makes it robust to shot noise.  Here it
trains the scale-augmented cost from finite samples only, and we watch
the true (exactly simulated) fidelity it never gets to see.
"""

from vqls_poisson.optimize import OptimizerConfig, multistart
from vqls_poisson.vqls import make_problem

problem = make_problem(3, 2)
config = OptimizerConfig(method="nft", max_evals=400, seed=5, reset_interval=9)

result = multistart(problem, 3, config, kind="CNN", innerp="hadamard", shots=1000)

print("training on 1000-shot estimates, three starts:")
for run in result.runs:
    final = run.result.trace[-1]
    print(f"  start {run.index}: estimated cost {run.result.value:+.4f}, "
          f"final fidelity {final.fidelity:.4f}")

best_final = max(run.result.trace[-1].fidelity for run in result.runs)
print(f"\nbest end-of-training fidelity: {best_final:.4f}")
print("note: the best *estimated* cost can belong to a lucky sample — judge")
print("runs by their final state, not by the noisy minimum they reported.")
