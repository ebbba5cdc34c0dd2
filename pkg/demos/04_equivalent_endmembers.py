"""Per-pixel equivalent endmembers: the abundance-weighted mean of each bundle."""
import numpy as np

from hsibundles import (SceneSpec, SolverConfig, collapse_abundances, equivalent_endmember_stack,
                        generate_scene, solve)
from hsibundles.metrics import evaluate

image, truth = generate_scene(SceneSpec(n_materials=3, n_variants=5, width=15, height=15,
                                        n_bands=50, seed=1))
X, B, G = image.data, truth.dictionary, truth.groups
A = solve(X, B, SolverConfig("fractional", 0.1), G).abundances

S, defined = equivalent_endmember_stack(A, B, G)
k = 0
print("pixel 0 collapsed abundances", np.round(collapse_abundances(A, G)[:, k], 3))
print("materials with a defined endmember", np.flatnonzero(defined[:, k]).tolist())
# the pixel is reproduced by its equivalent endmembers and collapsed abundances
x_hat = S[:, :, k] @ collapse_abundances(A, G)[:, k]
print("reconstruction gap", float(np.abs(x_hat - B @ A[:, k]).max()))

report = evaluate(X, B, G, A, truth.atom_abundances)
for key, value in report.as_dict().items():
    print(f"{key:>28}: {value}")
