"""Proximal and shrinkage operators for the bundle sparsity penalties.

All group-aware operators accept either a length-``Q`` vector or a ``Q x N``
matrix; matrices are processed column by column (one pixel per column),
except :func:`prox_collaborative_rows`, which couples every pixel of a row.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import GroupStructure, StructureError


class PenaltyValue(NamedTuple):
    kind: str
    value: float


def _group_sums(X: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Per-group sums along axis 0; works on vectors and matrices."""
    if X.shape[0] != groups.n_atoms:
        raise StructureError(
            f"length {X.shape[0]} does not match group structure of {groups.n_atoms} atoms")
    out = np.zeros((groups.n_groups,) + X.shape[1:])
    np.add.at(out, groups.labels, X)
    return out


def mixed_norm(v, groups: GroupStructure, p: float, q: float, power: bool = False) -> float:
    """Two-level mixed norm: p-norm inside each group, q-norm across groups.

    With ``power=True`` the q-th power ``sum_i ||v_Gi||_p^q`` is returned
    instead; this is the form the fractional penalty uses. Matrices are
    handled column by column and the per-column values summed.
    """
    if p <= 0 or q <= 0:
        raise ValueError(f"mixed norm exponents must be positive, got p={p}, q={q}")
    v = np.asarray(v, dtype=float)
    inner = _group_sums(np.abs(v) ** p, groups) ** (1.0 / p)
    level = np.sum(inner ** q, axis=0)
    if not power:
        level = level ** (1.0 / q)
    return float(np.sum(level))


def soft_threshold(u, tau: float) -> np.ndarray:
    """Entrywise ``sign(u) * max(|u| - tau, 0)``."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)


def block_soft_threshold(v, tau: float) -> np.ndarray:
    """Shrink a whole vector towards zero: ``max(1 - tau/||v||, 0) * v``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= tau or norm == 0.0:
        return np.zeros_like(v)
    return (1.0 - tau / norm) * v


def prox_group(v, groups: GroupStructure, tau: float) -> np.ndarray:
    """Block soft thresholding of every group subvector (group lasso prox)."""
    v = np.asarray(v, dtype=float)
    norms = np.sqrt(_group_sums(v * v, groups))[groups.labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    return scale * v


def prox_elitist(v, groups: GroupStructure, tau: float) -> np.ndarray:
    """Elitist lasso shrinkage.

    Every entry of group ``i`` is soft-thresholded by
    ``tau / (1 + tau) * ||v_Gi||_1``. For singleton groups this is
    ``v / (1 + tau)``.
    """
    v = np.asarray(v, dtype=float)
    gamma = tau / (1.0 + tau) * _group_sums(np.abs(v), groups)[groups.labels]
    return np.sign(v) * np.maximum(np.abs(v) - gamma, 0.0)


def q_shrink(u, q: float, tau: float) -> np.ndarray:
    """Approximate q-shrinkage ``sign(u) * (|u| - tau^(2-q) |u|^(q-1))_+``.

    Reduces to :func:`soft_threshold` at ``q = 1``. Entries with
    ``|u| <= tau`` (including zeros) map to 0.
    """
    if not 0 <= q <= 1:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    u = np.asarray(u, dtype=float)
    mag = np.abs(u)
    live = mag > tau
    out = np.zeros_like(u)
    m = mag[live]
    out[live] = np.maximum(m - tau ** (2.0 - q) * m ** (q - 1.0), 0.0)
    return np.sign(u) * out


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the unit simplex.

    A vector is projected directly; a matrix is projected column by column.
    Sort-based, O(n log n) per column.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0 or v.shape[0] == 0:
        raise ValueError("cannot project an empty vector onto the simplex")
    vec = v.ndim == 1
    V = v[:, None] if vec else v
    n = V.shape[0]
    s = -np.sort(-V, axis=0)
    css = np.cumsum(s, axis=0) - 1.0
    ks = np.arange(1, n + 1)[:, None]
    cond = s - css / ks > 0
    # cond is True on a prefix; its length is the support size
    rho = np.count_nonzero(cond, axis=0)
    theta = css[rho - 1, np.arange(V.shape[1])] / rho
    X = np.maximum(V - theta, 0.0)
    return X[:, 0] if vec else X


def project_nonneg(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def prox_collaborative_rows(V, tau: float) -> np.ndarray:
    """Block soft thresholding of every row of ``V`` (collaborative L2,1 prox)."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    return scale * V


def evaluate_penalty(A, kind: str, groups: GroupStructure = None,
                     fraction: float = 0.1) -> PenaltyValue:
    """Value of the penalty a solver minimizes, summed over all pixels.

    ``elitist`` is the halved squared mixed norm ``0.5 * sum_i ||a_Gi||_1^2``
    per pixel, which is the function whose shrinkage :func:`prox_elitist`
    implements for singleton supports. ``fractional`` is the surrogate
    ``sum_i ||a_Gi||_1^q``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if kind in ("none", "fclsu"):
        value = 0.0
    elif kind == "l1":
        value = float(np.abs(A).sum())
    elif kind == "collaborative":
        value = float(np.linalg.norm(A, axis=1).sum())
    elif kind == "group":
        value = mixed_norm(A, groups, 2.0, 1.0)
    elif kind == "elitist":
        value = 0.5 * mixed_norm(A, groups, 1.0, 2.0, power=True)
    elif kind == "fractional":
        value = mixed_norm(A, groups, 1.0, fraction, power=True)
    else:
        raise ValueError(f"unknown penalty {kind!r}")
    return PenaltyValue(kind, value)
