"""Hyperspectral unmixing with endmember bundles and group-sparse penalties."""
from .core import (AbundanceMatrix, EndmemberDictionary, GroupStructure, SpectralImage,
                   StructureError, collapse_abundances, equivalent_endmember_stack,
                   equivalent_endmembers, reconstruct)
from .io import load_groups, load_matrix, save_groups, save_matrix
from .bundles import BundleExtractionConfig, extract_bundles, spectral_angle, vca
from .simgen import GroundTruth, SceneSpec, generate_scene
from .solvers import (SolverConfig, SolverDiverged, SolverReport, solve, solve_collaborative,
                      solve_elitist, solve_fclsu, solve_fractional, solve_group, solve_l1)
from .metrics import MetricReport, evaluate

__version__ = "0.1.0"
