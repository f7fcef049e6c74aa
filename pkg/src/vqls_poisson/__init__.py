"""Variational quantum linear solver for the 1-D finite-element Poisson equation.

Modules
-------
circuits    gate IR, ansatz families, right-hand-side preparations
sim         dense statevector simulation, sampling, stochastic noise
poisson     stiffness matrix, classical solve, operator decompositions
estimation  Hadamard / overlap / amplitude-estimation inner products, <A>
vqls        cost functions, parameter-shift gradients, metrics
optimize    BFGS, SPSA, NFT, Powell wrappers and multistart driver
harness     reproducible experiment runners behind the ``vqls-poisson`` CLI
"""

__version__ = "0.1.0"
