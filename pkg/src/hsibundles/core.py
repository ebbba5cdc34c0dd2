"""Domain types and per-pixel bookkeeping for unmixing with endmember bundles.

Matrices follow the usual hyperspectral convention: an image is ``L x N``
(bands by pixels), a dictionary is ``L x Q`` and abundances are ``Q x N``, so
every pixel is a column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

#: Group abundance below which an equivalent endmember is left undefined.
DEFINED_THRESHOLD = 1e-8
#: Tolerated negative round-off on abundance outputs.
NEGATIVE_SLACK = 1e-9


class StructureError(ValueError):
    """Raised when array shapes or a group structure are inconsistent."""


def as_matrix(obj) -> np.ndarray:
    """Return the 2-D float array behind ``obj``.

    Accepts plain arrays as well as :class:`SpectralImage`,
    :class:`EndmemberDictionary` and :class:`AbundanceMatrix`.
    """
    for attr in ("data", "signatures"):
        if hasattr(obj, attr):
            obj = getattr(obj, attr)
            break
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise StructureError(f"expected a matrix, got array with shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SpectralImage:
    """Reflectance matrix ``X`` of shape ``(bands, pixels)``.

    ``layout`` is an optional ``(width, height)`` pair; pixel ``k`` sits at
    row ``k // width`` and column ``k % width``.
    """

    data: np.ndarray
    layout: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise StructureError("image data must be a bands x pixels matrix")
        if data.shape[0] < 2 or data.shape[1] < 1:
            raise StructureError(f"image needs >= 2 bands and >= 1 pixel, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise StructureError("image contains non-finite values")
        if self.layout is not None:
            width, height = (int(v) for v in self.layout)
            if width < 1 or height < 1 or width * height != data.shape[1]:
                raise StructureError(
                    f"layout {width}x{height} inconsistent with {data.shape[1]} pixels")
            object.__setattr__(self, "layout", (width, height))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EndmemberDictionary:
    """Bundle dictionary ``B`` holding ``Q`` candidate signatures as columns."""

    signatures: np.ndarray

    def __post_init__(self):
        sig = np.array(self.signatures, dtype=float)
        if sig.ndim == 1:
            sig = sig[:, None]
        if sig.ndim != 2 or sig.shape[1] < 1:
            raise StructureError("dictionary must be a bands x atoms matrix with >= 1 atom")
        if not np.all(np.isfinite(sig)):
            raise StructureError("dictionary contains non-finite values")
        if np.any(sig < 0):
            raise StructureError("dictionary signatures must be nonnegative")
        zero = np.flatnonzero(np.linalg.norm(sig, axis=0) == 0)
        if zero.size:
            raise StructureError(f"dictionary atoms {zero.tolist()} have zero norm")
        sig.setflags(write=False)
        object.__setattr__(self, "signatures", sig)

    @property
    def bands(self) -> int:
        return self.signatures.shape[0]

    @property
    def atoms(self) -> int:
        return self.signatures.shape[1]


@dataclass(frozen=True)
class GroupStructure:
    """Partition of ``Q`` dictionary atoms into ``P`` material groups.

    ``labels[j]`` is the 0-based group of atom ``j``. Group files on disk use
    1-based ids (see :func:`hsibundles.io.save_groups`).
    """

    labels: np.ndarray
    n_groups: int = field(default=-1)

    def __post_init__(self):
        labels = np.array(self.labels).ravel()
        if labels.size == 0:
            raise StructureError("group structure needs at least one atom")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise StructureError("group labels must be integers")
        labels = labels.astype(np.int64)
        n_groups = int(labels.max()) + 1 if self.n_groups < 0 else int(self.n_groups)
        if labels.min() < 0 or labels.max() >= n_groups:
            raise StructureError(f"group labels must lie in [0, {n_groups - 1}]")
        sizes = np.bincount(labels, minlength=n_groups)
        if np.any(sizes == 0):
            empty = np.flatnonzero(sizes == 0).tolist()
            raise StructureError(f"groups {empty} have no atoms")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_groups", n_groups)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupStructure":
        """Contiguous groups, e.g. ``from_sizes([2, 3])`` -> labels ``0 0 1 1 1``."""
        return cls(np.repeat(np.arange(len(sizes)), sizes), len(sizes))

    @classmethod
    def singletons(cls, n_atoms: int) -> "GroupStructure":
        return cls(np.arange(n_atoms), n_atoms)

    @property
    def n_atoms(self) -> int:
        return self.labels.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_groups)

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.labels == group)

    def indicator(self) -> np.ndarray:
        """The ``P x Q`` binary matrix ``M`` with ``M @ a`` = per-group sums."""
        M = np.zeros((self.n_groups, self.n_atoms))
        M[self.labels, np.arange(self.n_atoms)] = 1.0
        return M

    def check(self, n_atoms: int) -> None:
        if n_atoms != self.n_atoms:
            raise StructureError(
                f"group structure covers {self.n_atoms} atoms, data has {n_atoms}")


@dataclass(frozen=True)
class AbundanceMatrix:
    """Abundance coefficients, either one row per atom or one per material."""

    data: np.ndarray
    mode: str = "atom"

    def __post_init__(self):
        if self.mode not in ("atom", "collapsed"):
            raise ValueError(f"unknown abundance mode {self.mode!r}")
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise StructureError("abundances must be a rows x pixels matrix")
        if not np.all(np.isfinite(data)):
            raise StructureError("abundances contain non-finite values")
        if np.any(data < -NEGATIVE_SLACK):
            raise StructureError("abundances below the negative round-off slack")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def collapse(self, groups: GroupStructure) -> "AbundanceMatrix":
        if self.mode != "atom":
            raise StructureError("abundances are already collapsed")
        return AbundanceMatrix(collapse_abundances(self.data, groups), "collapsed")


def collapse_abundances(A, groups: GroupStructure) -> np.ndarray:
    """Sum per-atom abundances within each group, giving a ``P x N`` matrix."""
    A = as_matrix(A)
    groups.check(A.shape[0])
    out = np.zeros((groups.n_groups, A.shape[1]))
    np.add.at(out, groups.labels, A)
    return out


def equivalent_endmembers(A, B, groups: GroupStructure, pixel: int):
    """Per-material equivalent endmembers of one pixel.

    Each column is the abundance-weighted mean of the group's atoms. Groups
    whose total abundance does not exceed ``DEFINED_THRESHOLD`` are undefined:
    their column is zero and their flag is False.

    Returns
    -------
    S : ndarray, shape (L, P)
    defined : ndarray of bool, shape (P,)
    """
    A = as_matrix(A)
    B = as_matrix(B)
    if B.shape[1] != A.shape[0]:
        raise StructureError(f"dictionary has {B.shape[1]} atoms, abundances {A.shape[0]} rows")
    groups.check(A.shape[0])
    if not 0 <= pixel < A.shape[1]:
        raise IndexError(f"pixel {pixel} out of range for {A.shape[1]} pixels")
    a = A[:, pixel]
    totals = np.zeros(groups.n_groups)
    np.add.at(totals, groups.labels, a)
    defined = totals > DEFINED_THRESHOLD
    # normalize weights first so a lone active atom is reproduced bit for bit
    on = defined[groups.labels]
    w = np.zeros_like(a)
    w[on] = a[on] / totals[groups.labels[on]]
    S = np.zeros((B.shape[0], groups.n_groups))
    np.add.at(S.T, groups.labels, (B * w).T)
    return S, defined


def equivalent_endmember_stack(A, B, groups: GroupStructure):
    """Equivalent endmembers for all pixels: ``(L, P, N)`` array and ``(P, N)`` flags."""
    A = as_matrix(A)
    B = as_matrix(B)
    if B.shape[1] != A.shape[0]:
        raise StructureError(f"dictionary has {B.shape[1]} atoms, abundances {A.shape[0]} rows")
    groups.check(A.shape[0])
    M = groups.indicator()
    totals = M @ A
    defined = totals > DEFINED_THRESHOLD
    safe = np.where(defined, totals, 1.0)[groups.labels]
    W = np.where(defined[groups.labels], A / safe, 0.0)
    # S[l, p, k] = sum_{j in G_p} B[l, j] W[j, k]
    S = np.einsum("lj,pj,jk->lpk", B, M, W)
    return S, defined


def reconstruct(B, A) -> np.ndarray:
    """Noiseless forward model ``B @ A``."""
    B = as_matrix(B)
    A = as_matrix(A)
    if B.shape[1] != A.shape[0]:
        raise StructureError(f"cannot multiply {B.shape} dictionary by {A.shape} abundances")
    return B @ A
