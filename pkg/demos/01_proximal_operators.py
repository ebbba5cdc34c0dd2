"""Proximal operators behind the sparsity penalties.

Each operator maps a vector to the minimizer of 0.5||x - v||^2 + tau * phi(x).
Running this script prints how each one reshapes the same input.
"""
import numpy as np

from hsibundles import GroupStructure
from hsibundles.prox import (project_simplex, prox_collaborative_rows, prox_elitist, prox_group,
                             q_shrink, soft_threshold)

v = np.array([0.9, 0.4, 0.05, 0.3, 0.25, -0.1])
groups = GroupStructure.from_sizes([3, 3])
tau = 0.2

np.set_printoptions(precision=3, suppress=True)
print("input              ", v)
print("soft threshold     ", soft_threshold(v, tau))
# whole groups switch off together; survivors keep their direction
print("group (L2 inside)  ", prox_group(v, groups, tau))
# the threshold grows with the group's L1 mass, so only leaders survive
print("elitist (L1 inside)", prox_elitist(v, groups, tau))
print("q-shrink, q=0.1    ", q_shrink(v, 0.1, tau))
print("simplex projection ", project_simplex(v), "sum", project_simplex(v).sum())

# collaborative shrinkage couples one atom's coefficients across pixels
V = np.array([[0.5, 0.6, 0.4], [0.05, 0.1, 0.02]])
print("row shrinkage\n", prox_collaborative_rows(V, tau))
