"""Automated endmember bundle extraction.

Run VCA on random pixel subsets, pool the extracted signatures and group them
with k-means under the spectral angle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EndmemberDictionary, GroupStructure, as_matrix


class DegenerateDataError(ValueError):
    """The data cannot support the requested number of endmembers."""


class ClusteringError(RuntimeError):
    pass


@dataclass
class BundleExtractionConfig:
    n_endmembers: int
    n_subsets: int = 10
    fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.n_endmembers < 1 or self.n_subsets < 1:
            raise ValueError("n_endmembers and n_subsets must be positive")
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")

    def subset_size(self, n_pixels: int) -> int:
        return int(np.floor(self.fraction * n_pixels))


def sample_subsets(n_pixels: int, cfg: BundleExtractionConfig, rng: np.random.Generator):
    """``cfg.n_subsets`` sorted index arrays, each drawn without replacement.

    Different subsets are drawn independently and may overlap.
    """
    size = cfg.subset_size(n_pixels)
    if size < 1:
        raise ValueError(f"fraction {cfg.fraction} of {n_pixels} pixels selects nothing")
    if size < cfg.n_endmembers:
        raise ValueError(
            f"subsets of {size} pixels cannot yield {cfg.n_endmembers} endmembers")
    return [np.sort(rng.choice(n_pixels, size=size, replace=False))
            for _ in range(cfg.n_subsets)]


def estimate_snr(Y, r_m, x):
    """SNR estimate (dB) of the VCA paper from the data and its projection."""
    L, N = Y.shape
    p = x.shape[0]
    P_y = np.sum(Y ** 2) / N
    P_x = np.sum(x ** 2) / N + np.sum(r_m ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10 * np.log10((P_x - p / L * P_y) / (P_y - P_x))


def vca(Y, n_endmembers: int, rng: np.random.Generator, snr=None):
    """Vertex component analysis.

    Parameters
    ----------
    Y : ndarray, shape (L, n)
        Pixels as columns.
    n_endmembers : int
    rng : numpy Generator
        Source of the random projection directions.
    snr : float, optional
        Known SNR in dB; estimated from the data when omitted.

    Returns
    -------
    E : ndarray, shape (L, n_endmembers)
        Selected pixels, copied from ``Y``.
    indices : ndarray of int
        Their column indices in ``Y``.
    """
    Y = as_matrix(Y)
    L, N = Y.shape
    p = int(n_endmembers)
    if N < p:
        raise DegenerateDataError(f"{N} pixels cannot yield {p} endmembers")

    if p == 1:
        u = np.linalg.svd(Y, full_matrices=False)[0][:, 0]
        idx = np.array([int(np.argmax(np.abs(u @ Y)))])
        return Y[:, idx].copy(), idx

    r_m = Y.mean(axis=1, keepdims=True)
    R_o = Y - r_m
    U, svals, _ = np.linalg.svd(R_o, full_matrices=False)
    rank = int(np.sum(svals > svals[0] * 1e-10)) if svals.size and svals[0] > 0 else 0
    if rank < p - 1:
        raise DegenerateDataError(
            f"data spans an affine subspace of dimension {rank}, need {p - 1}")
    Ud = U[:, :p]
    x_p = Ud.T @ R_o

    if snr is None:
        snr = estimate_snr(Y, r_m, x_p)
    snr_th = 15 + 10 * np.log10(p)

    if not np.isfinite(snr) or snr < snr_th:
        # projection onto the (p-1)-dimensional affine hull
        d = p - 1
        x = x_p[:d]
        c = np.sqrt(np.max(np.sum(x ** 2, axis=0)))
        y = np.vstack([x, np.full((1, N), c)])
    else:
        Ud = np.linalg.svd(Y @ Y.T / N)[0][:, :p]
        x = Ud.T @ Y
        u = x.mean(axis=1, keepdims=True)
        y = x / (u.T @ x)

    indices = np.zeros(p, dtype=int)
    A = np.zeros((p, p))
    A[-1, 0] = 1.0
    for i in range(p):
        w = rng.random((p, 1))
        f = w - A @ np.linalg.pinv(A) @ w
        f /= np.linalg.norm(f)
        v = f.T @ y
        indices[i] = int(np.argmax(np.abs(v)))
        A[:, i] = y[:, indices[i]]
    return Y[:, indices].copy(), indices


def spectral_angle(u, v) -> float:
    """Angle in radians between two nonzero spectra; blind to positive scaling."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("spectral angle is undefined for a zero vector")
    u, v = u / nu, v / nv
    # atan2 form stays accurate near 0 and pi, where acos loses precision
    return float(2.0 * np.arctan2(np.linalg.norm(u - v), np.linalg.norm(u + v)))


def _angles(units, centroids):
    """Angles between unit columns of ``units`` (L x n) and ``centroids`` (L x k)."""
    return np.arccos(np.clip(centroids.T @ units, -1.0, 1.0))


def _normalize(X):
    return X / np.linalg.norm(X, axis=0, keepdims=True)


def _kmeans_once(units, k, first, max_iter=100):
    n = units.shape[1]
    chosen = [first]
    for _ in range(1, k):
        dist = _angles(units, units[:, chosen]).min(axis=0)
        dist[chosen] = -1.0
        chosen.append(int(np.argmax(dist)))
    centroids = units[:, chosen].copy()

    history = []
    labels = None
    for _ in range(max_iter):
        ang = _angles(units, centroids)
        new_labels = np.argmin(ang, axis=0)
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # reseed an empty cluster with the worst-fitted signature
            worst = ang[new_labels, np.arange(n)]
            movable = counts[new_labels] > 1
            if not np.any(movable):
                break
            j = int(np.argmax(np.where(movable, worst, -1.0)))
            counts[new_labels[j]] -= 1
            new_labels[j] = empty
            counts[empty] = 1
            centroids[:, empty] = units[:, j]
        if np.any(np.bincount(new_labels, minlength=k) == 0):
            return None
        ang = _angles(units, centroids)
        history.append(float(ang[new_labels, np.arange(n)].sum()))

        for c in range(k):
            members = units[:, new_labels == c]
            mean = members.sum(axis=1)
            norm = np.linalg.norm(mean)
            if norm == 0:
                continue
            candidate = mean / norm
            old = _angles(members, centroids[:, [c]]).sum()
            # accept the mean direction only when it does not raise the angle sum
            if _angles(members, candidate[:, None]).sum() <= old:
                centroids[:, c] = candidate
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    ang = _angles(units, centroids)
    labels = np.argmin(ang, axis=0)
    if np.any(np.bincount(labels, minlength=k) == 0):
        return None
    history.append(float(ang[labels, np.arange(n)].sum()))
    return labels, centroids, history


def spherical_kmeans(signatures, k: int, rng: np.random.Generator, restarts: int = 20):
    """k-means with spectral-angle assignment on unit-normalized signatures.

    Farthest-point initialization from a random first signature, ``restarts``
    runs, best total angle kept.

    Returns
    -------
    labels : ndarray of int, shape (n,)
    centroids : ndarray, shape (L, k), unit columns
    history : list of float
        Total angle to the assigned centroid after each assignment step.
    """
    S = as_matrix(signatures)
    n = S.shape[1]
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} signatures")
    if np.any(np.linalg.norm(S, axis=0) == 0):
        raise ValueError("zero signature cannot be clustered by angle")
    units = _normalize(S)
    best = None
    for _ in range(restarts):
        result = _kmeans_once(units, k, int(rng.integers(n)))
        if result is None:
            continue
        if best is None or result[2][-1] < best[2][-1] - 1e-12:
            best = result
    if best is None:
        raise ClusteringError(f"k-means left a cluster empty in all {restarts} restarts")
    return best


def cluster_bundles(signatures, n_groups: int, rng: np.random.Generator):
    """Group pooled signatures into bundles.

    Returns the signatures reordered so each group is contiguous, and the
    matching group structure. Groups are numbered by the first input column
    they contain.
    """
    S = as_matrix(signatures)
    labels, _, _ = spherical_kmeans(S, n_groups, rng)
    first_seen = {}
    for lab in labels:
        first_seen.setdefault(int(lab), len(first_seen))
    relabeled = np.array([first_seen[int(lab)] for lab in labels])
    order = np.argsort(relabeled, kind="stable")
    return (EndmemberDictionary(S[:, order]),
            GroupStructure(relabeled[order], n_groups))


def extract_bundles(X, cfg: BundleExtractionConfig, rng: np.random.Generator = None):
    """Subsets, then VCA on each subset, then angular k-means into ``cfg.n_endmembers`` bundles."""
    X = as_matrix(X)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    pooled = []
    for idx in sample_subsets(X.shape[1], cfg, rng):
        E, _ = vca(X[:, idx], cfg.n_endmembers, rng)
        pooled.append(E)
    return cluster_bundles(np.hstack(pooled), cfg.n_endmembers, rng)
