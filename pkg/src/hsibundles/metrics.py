"""Abundance, endmember and reconstruction error measures."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .core import (GroupStructure, StructureError, as_matrix, collapse_abundances,
                   equivalent_endmember_stack)


@dataclass
class MetricReport:
    rmse_abundance: Optional[float] = None
    rmse_group: Optional[float] = None
    rmse_endmembers: Optional[float] = None
    sam_endmembers_degrees: Optional[float] = None
    reconstruction_rmse: Optional[float] = None
    reconstruction_sam_degrees: Optional[float] = None
    evaluated_pairs: Optional[int] = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def csv_header(self) -> str:
        return ",".join(f.name for f in fields(self))

    def csv_row(self) -> str:
        return ",".join(_fmt(v) for v in self.as_dict().values())


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _same_shape(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise StructureError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def rmse_abundance(A_hat, A_true) -> float:
    """Mean over pixels of the per-pixel RMS abundance error (collapsed rows)."""
    A_hat, A_true = _same_shape(A_hat, A_true)
    P = A_true.shape[0]
    return float(np.mean(np.sqrt(np.sum((A_hat - A_true) ** 2, axis=0) / P)))


def rmse_group(A_hat, A_true, groups: GroupStructure, per_atom_normalization: bool = False) -> float:
    """Per-atom counterpart of :func:`rmse_abundance`.

    The squared errors of all ``Q`` atoms are summed but divided by the
    number of groups ``P``, not ``Q``; pass ``per_atom_normalization=True``
    to divide by ``Q`` instead.
    """
    A_hat, A_true = _same_shape(A_hat, A_true)
    groups.check(A_true.shape[0])
    denom = groups.n_atoms if per_atom_normalization else groups.n_groups
    return float(np.mean(np.sqrt(np.sum((A_hat - A_true) ** 2, axis=0) / denom)))


def _pair_mask(S_hat, S_true, mask):
    S_hat = np.asarray(S_hat, dtype=float)
    S_true = np.asarray(S_true, dtype=float)
    if S_hat.shape != S_true.shape or S_hat.ndim != 3:
        raise StructureError(
            f"endmember stacks must share an (L, P, N) shape, got {S_hat.shape} and {S_true.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != S_hat.shape[1:]:
        raise StructureError(f"mask shape {mask.shape} does not match {S_hat.shape[1:]}")
    if not mask.any():
        raise ValueError("no (pixel, material) pairs to evaluate")
    return S_hat, S_true, mask


def rmse_endmembers(S_hat, S_true, mask) -> float:
    """Mean over evaluated (material, pixel) pairs of ``||b - s|| / sqrt(L)``.

    ``S_hat`` and ``S_true`` are ``(L, P, N)`` stacks; ``mask`` (``P x N``)
    marks the pairs to score.
    """
    S_hat, S_true, mask = _pair_mask(S_hat, S_true, mask)
    L = S_true.shape[0]
    err = np.linalg.norm(S_true - S_hat, axis=0) / np.sqrt(L)
    return float(err[mask].mean())


def _angles_deg(U, V):
    """Angles between matching columns of two ``L x n`` matrices, in degrees."""
    nu = np.linalg.norm(U, axis=0)
    nv = np.linalg.norm(V, axis=0)
    if np.any(nu == 0) or np.any(nv == 0):
        raise ValueError("spectral angle is undefined for a zero vector")
    U = U / nu
    V = V / nv
    ang = 2.0 * np.arctan2(np.linalg.norm(U - V, axis=0), np.linalg.norm(U + V, axis=0))
    return np.degrees(ang)


def sam_endmembers(S_hat, S_true, mask) -> float:
    """Mean spectral angle (degrees) over the evaluated pairs."""
    S_hat, S_true, mask = _pair_mask(S_hat, S_true, mask)
    p_idx, k_idx = np.nonzero(mask)
    return float(_angles_deg(S_true[:, p_idx, k_idx], S_hat[:, p_idx, k_idx]).mean())


def reconstruction_metrics(X, B, A):
    """Pixelwise RMSE and mean SAM (degrees) between ``X`` and ``B @ A``."""
    X, B, A = as_matrix(X), as_matrix(B), as_matrix(A)
    if B.shape[1] != A.shape[0] or B.shape[0] != X.shape[0] or A.shape[1] != X.shape[1]:
        raise StructureError(f"incompatible shapes X{X.shape}, B{B.shape}, A{A.shape}")
    X_hat = B @ A
    rmse = float(np.mean(np.linalg.norm(X - X_hat, axis=0) / np.sqrt(X.shape[0])))
    return rmse, float(_angles_deg(X, X_hat).mean())


def evaluate(X, B, groups: GroupStructure, A_atom, truth_atom=None,
             truth_dictionary=None, truth_groups: GroupStructure = None,
             per_atom_normalization: bool = False) -> MetricReport:
    """All measures available for an estimate.

    Without ``truth_atom`` only the reconstruction measures are filled in.
    Otherwise the truth is given per atom of ``truth_dictionary`` (default:
    ``B``) grouped by ``truth_groups`` (default: ``groups``); its true
    endmembers are recovered as equivalent endmembers. Endmember errors are
    averaged over pairs where the material is truly present and the estimate
    defines an endmember.
    """
    A_atom = as_matrix(A_atom)
    report = MetricReport()
    report.reconstruction_rmse, report.reconstruction_sam_degrees = reconstruction_metrics(X, B, A_atom)
    if truth_atom is None:
        return report

    truth_atom = as_matrix(truth_atom)
    T = as_matrix(B if truth_dictionary is None else truth_dictionary)
    tg = groups if truth_groups is None else truth_groups
    if tg.n_groups != groups.n_groups:
        raise StructureError(
            f"estimate has {groups.n_groups} materials, truth has {tg.n_groups}")
    report.rmse_abundance = rmse_abundance(collapse_abundances(A_atom, groups),
                                           collapse_abundances(truth_atom, tg))
    if truth_atom.shape == A_atom.shape:
        report.rmse_group = rmse_group(A_atom, truth_atom, groups, per_atom_normalization)

    S_hat, defined = equivalent_endmember_stack(A_atom, B, groups)
    S_true, present = equivalent_endmember_stack(truth_atom, T, tg)
    mask = defined & present
    report.evaluated_pairs = int(mask.sum())
    if mask.any():
        report.rmse_endmembers = rmse_endmembers(S_hat, S_true, mask)
        report.sam_endmembers_degrees = sam_endmembers(S_hat, S_true, mask)
    return report
