"""Synthetic scenes with spectral variability and full ground truth.

Each material gets a smooth base spectrum and a bundle of variants
(scaling, quadratic distortion, noise). Abundances are sparse, spatially
smooth fields; in every pixel each active material uses exactly one of its
variants.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import EndmemberDictionary, GroupStructure, SpectralImage


@dataclass
class SceneSpec:
    n_materials: int = 5
    n_variants: int = 5
    width: int = 30
    height: int = 30
    n_bands: int = 100
    k_min: int = 1
    k_max: int = 3
    psi_min: float = 0.75
    psi_max: float = 1.25
    beta_min: float = -0.1
    beta_max: float = 0.1
    variant_noise: float = 0.005
    snr_db: Optional[float] = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.n_materials < 1 or self.n_variants < 1:
            raise ValueError("need at least one material and one variant")
        if self.width < 1 or self.height < 1 or self.n_bands < 2:
            raise ValueError("image needs positive size and at least two bands")
        if not 1 <= self.k_min <= self.k_max <= self.n_materials:
            raise ValueError(
                f"active range [{self.k_min}, {self.k_max}] must sit in [1, {self.n_materials}]")
        if not 0 < self.psi_min <= self.psi_max:
            raise ValueError("scaling range must be positive and ordered")
        if self.beta_min > self.beta_max:
            raise ValueError("quadratic coefficient range is reversed")
        if self.variant_noise < 0:
            raise ValueError("variant noise must be nonnegative")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def n_atoms(self) -> int:
        return self.n_materials * self.n_variants

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = "inf" if self.snr_db is None else self.snr_db
        return d


@dataclass
class GroundTruth:
    base: np.ndarray            # L x P
    dictionary: np.ndarray      # L x Q, group-contiguous
    groups: GroupStructure
    atom_abundances: np.ndarray      # Q x N
    abundances: np.ndarray           # P x N
    active_atoms: np.ndarray         # P x N atom index per material, -1 when absent

    def endmembers(self) -> np.ndarray:
        """True per-pixel endmembers as an ``(L, P, N)`` array (zero when absent)."""
        L = self.dictionary.shape[0]
        P, N = self.active_atoms.shape
        S = np.zeros((L, P, N))
        present = self.active_atoms >= 0
        p_idx, k_idx = np.nonzero(present)
        S[:, p_idx, k_idx] = self.dictionary[:, self.active_atoms[p_idx, k_idx]]
        return S

    @property
    def active(self) -> np.ndarray:
        return self.abundances > 0


def generate_base_signatures(n_materials: int, n_bands: int, rng: np.random.Generator,
                             max_tries: int = 100) -> np.ndarray:
    """Smooth positive spectra with values in (0, 1].

    Each is a small constant offset plus 3 to 6 Gaussian bumps, scaled so its
    maximum is a random brightness in [0.3, 1].
    """
    if n_materials < 1 or n_bands < 2:
        raise ValueError("need n_materials >= 1 and n_bands >= 2")
    grid = np.linspace(0.0, 1.0, n_bands)
    out = np.empty((n_bands, n_materials))
    for p in range(n_materials):
        for _ in range(max_tries):
            n_bumps = rng.integers(3, 7)
            centers = rng.uniform(-0.1, 1.1, n_bumps)
            widths = rng.uniform(0.08, 0.3, n_bumps)
            heights = rng.uniform(0.2, 1.0, n_bumps)
            curve = (heights[None] * np.exp(-0.5 * ((grid[:, None] - centers) / widths) ** 2)).sum(1)
            curve = rng.uniform(0.05, 0.3) + curve
            curve *= rng.uniform(0.3, 1.0) / curve.max()
            if p == 0 or np.min(np.linalg.norm(out[:, :p] - curve[:, None], axis=0)) > 1e-3:
                out[:, p] = curve
                break
        else:
            raise RuntimeError("could not draw distinct base signatures")
    return out


def generate_variants(base, n_variants: int, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """``psi * s + beta * s**2 + noise`` per variant, clipped at zero."""
    s = np.asarray(base, dtype=float)
    psi = rng.uniform(spec.psi_min, spec.psi_max, n_variants)
    beta = rng.uniform(spec.beta_min, spec.beta_max, n_variants)
    noise = rng.normal(0.0, 1.0, (s.size, n_variants)) * spec.variant_noise
    V = psi[None] * s[:, None] + beta[None] * (s * s)[:, None] + noise
    return np.maximum(V, 0.0)


def generate_abundance_field(spec: SceneSpec, rng: np.random.Generator):
    """Sparse, spatially smooth abundances.

    Returns
    -------
    A : ndarray, shape (P, N)
        Columns on the simplex with between ``k_min`` and ``k_max`` nonzeros.
    active : ndarray of bool, shape (P, N)
    """
    P, N = spec.n_materials, spec.n_pixels
    sigma = min(spec.width, spec.height) / 10.0
    fields = np.empty((P, N))
    for p in range(P):
        noise = rng.normal(size=(spec.height, spec.width))
        smooth = gaussian_filter(noise, sigma, mode="wrap")
        fields[p] = (smooth / (smooth.std() or 1.0)).ravel()

    k = rng.integers(spec.k_min, spec.k_max + 1, size=N)
    order = np.argsort(-fields, axis=0, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(P)[:, None].repeat(N, axis=1), axis=0)
    keep = rank < k[None]

    vals = np.where(keep, np.maximum(fields, 0.0), 0.0)
    # every kept field negative: spread the pixel uniformly over the kept ones
    bad = vals.sum(axis=0) <= 0
    vals[:, bad] = keep[:, bad]
    A = vals / vals.sum(axis=0)
    return A, A > 0


def generate_scene(spec: SceneSpec, rng: np.random.Generator = None):
    """Build a scene and its ground truth.

    Pixel ``k`` is ``sum_p a_pk * variant_pk`` plus white Gaussian noise at
    ``spec.snr_db`` (``None`` for noiseless), where ``variant_pk`` is drawn
    uniformly from material ``p``'s bundle.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    P, m, L, N = spec.n_materials, spec.n_variants, spec.n_bands, spec.n_pixels
    base = generate_base_signatures(P, L, rng)
    D = np.hstack([generate_variants(base[:, p], m, spec, rng) for p in range(P)])
    groups = GroupStructure.from_sizes([m] * P)

    A, active = generate_abundance_field(spec, rng)
    choice = rng.integers(0, m, size=(P, N))
    atom = np.arange(P)[:, None] * m + choice
    active_atoms = np.where(active, atom, -1)
    A_atom = np.zeros((P * m, N))
    p_idx, k_idx = np.nonzero(active)
    A_atom[active_atoms[p_idx, k_idx], k_idx] = A[p_idx, k_idx]

    clean = D @ A_atom
    if spec.snr_db is None:
        X = clean
    else:
        power = np.mean(clean ** 2) / 10 ** (spec.snr_db / 10)
        X = clean + rng.normal(0.0, np.sqrt(power), clean.shape)

    truth = GroundTruth(base, D, groups, A_atom, A, active_atoms)
    return SpectralImage(X, (spec.width, spec.height)), truth


def scene_dictionary(truth: GroundTruth) -> EndmemberDictionary:
    return EndmemberDictionary(truth.dictionary)
