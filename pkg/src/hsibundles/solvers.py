"""ADMM abundance solvers for bundle dictionaries.

Every solver minimizes

    0.5 * ||X - B A||_F^2 + lam * penalty(A)

under either the simplex constraint (each column of ``A`` nonnegative and
summing to one) or, for ``l1``, plain nonnegativity. The shared iteration
splits ``K A = U`` (penalty branch) and ``A = V`` (constraint branch) with
scaled duals ``C`` and ``D``:

    A <- (B'B + rho K'K + rho I)^-1 (B'X + rho K'(U + C) + rho (V + D))
    U <- prox_{(lam/rho) penalty}(K A - C)
    V <- proj(A - D)
    C <- C + U - K A
    D <- D + V - A

``K`` is the identity for the convex penalties and the group indicator
matrix for the fractional one. The returned abundances are the ``V``
iterate, so constraint feasibility holds exactly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import prox
from .core import GroupStructure, StructureError, as_matrix

PENALTIES = ("none", "l1", "collaborative", "group", "elitist", "fractional")
GROUPED = ("group", "elitist", "fractional")


class SolverDiverged(ArithmeticError):
    """Non-finite values appeared during the ADMM iterations."""

    def __init__(self, iteration: int):
        super().__init__(f"ADMM produced non-finite values at iteration {iteration}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    penalty: str = "none"
    lam: float = 0.0
    rho: float = 10.0
    fraction: float = 0.1
    max_iter: int = 1000
    rel_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}; choose from {PENALTIES}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.rel_tol >= 0:
            raise ValueError("rel_tol must be nonnegative")


@dataclass
class SolverState:
    """Iterates of one ADMM run. ``U``/``C`` are ``None`` when the penalty branch is off."""

    A: np.ndarray
    V: np.ndarray
    D: np.ndarray
    U: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    iteration: int = 0
    rel_changes: list = field(default_factory=list)
    primal_u: list = field(default_factory=list)
    primal_v: list = field(default_factory=list)


@dataclass
class SplitProblem:
    """Pieces plugged into :func:`admm_skeleton`.

    ``u_prox(W, tau)`` is the penalty shrinkage at scale ``tau = lam / rho``;
    leaving it ``None`` drops the penalty branch entirely. ``u_matrix`` is
    the ``K`` in ``K A = U`` (identity when ``None``).
    """

    v_prox: Callable[[np.ndarray], np.ndarray]
    u_prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    u_matrix: Optional[np.ndarray] = None
    penalty: Callable[[np.ndarray], float] = lambda A: 0.0


@dataclass
class SolverReport:
    abundances: np.ndarray
    iterations: int
    converged: bool
    rel_change: float
    rel_changes: np.ndarray
    primal_u: np.ndarray
    primal_v: np.ndarray
    data_fit: float
    penalty: float
    lam: float
    wall_time: float
    time_per_iter: float
    penalty_kind: str = "none"

    @property
    def objective(self) -> float:
        return self.data_fit + self.lam * self.penalty

    @property
    def status(self) -> str:
        return "converged" if self.converged else "iteration-limited"

    def summary(self) -> dict:
        return {
            "penalty": self.penalty_kind,
            "lambda": repr(self.lam),
            "status": self.status,
            "iterations": self.iterations,
            "rel_change": repr(self.rel_change),
            "primal_residual_u": repr(float(self.primal_u[-1])) if len(self.primal_u) else "nan",
            "primal_residual_v": repr(float(self.primal_v[-1])) if len(self.primal_v) else "nan",
            "data_fit": repr(self.data_fit),
            "penalty_value": repr(self.penalty),
            "objective": repr(self.objective),
            "wall_time_s": f"{self.wall_time:.6f}",
        }


def system_matrix(B: np.ndarray, rho: float, u_matrix=None, with_u=True) -> np.ndarray:
    """``B'B + rho K'K + rho I`` (``K = I`` gives ``B'B + 2 rho I``)."""
    Q = B.shape[1]
    G = B.T @ B + rho * np.eye(Q)
    if with_u:
        G += rho * (np.eye(Q) if u_matrix is None else u_matrix.T @ u_matrix)
    return G


def admm_skeleton(X, B, problem: SplitProblem, cfg: SolverConfig,
                  callback: Optional[Callable[[SolverState], None]] = None) -> SolverReport:
    """Run the shared ADMM loop until the relative change of ``A`` drops below
    ``cfg.rel_tol`` or ``cfg.max_iter`` iterations have been made.

    ``callback(state)`` is invoked after every iteration.
    """
    X = as_matrix(X)
    B = as_matrix(B)
    if X.shape[0] != B.shape[0]:
        raise StructureError(f"image has {X.shape[0]} bands, dictionary {B.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(B))):
        raise ValueError("image and dictionary must be finite")
    Q, N = B.shape[1], X.shape[1]
    rho = cfg.rho
    tau = cfg.lam / rho
    with_u = problem.u_prox is not None
    K = problem.u_matrix

    factor = cho_factor(system_matrix(B, rho, K, with_u))
    BtX = B.T @ X

    A = np.full((Q, N), 1.0 / Q)
    state = SolverState(A=A, V=A.copy(), D=np.zeros((Q, N)))
    if with_u:
        state.U = A.copy() if K is None else K @ A
        state.C = np.zeros_like(state.U)

    converged = False
    rel = np.inf
    start = time.perf_counter()
    for it in range(1, cfg.max_iter + 1):
        A_prev = state.A
        rhs = BtX + rho * (state.V + state.D)
        if with_u:
            UC = state.U + state.C
            rhs += rho * (UC if K is None else K.T @ UC)
        A = cho_solve(factor, rhs, check_finite=False)
        if not np.all(np.isfinite(A)):
            raise SolverDiverged(it)

        if with_u:
            KA = A if K is None else K @ A
            state.U = problem.u_prox(KA - state.C, tau)
            state.C = state.C + state.U - KA
            state.primal_u.append(float(np.linalg.norm(state.U - KA)))
        state.V = problem.v_prox(A - state.D)
        state.D = state.D + state.V - A
        state.primal_v.append(float(np.linalg.norm(state.V - A)))
        if not (np.all(np.isfinite(state.V)) and np.all(np.isfinite(state.D))):
            raise SolverDiverged(it)

        denom = np.linalg.norm(A_prev)
        rel = float(np.linalg.norm(A - A_prev) / denom) if denom > 0 else float(np.linalg.norm(A))
        state.A = A
        state.iteration = it
        state.rel_changes.append(rel)
        if callback is not None:
            callback(state)
        if rel < cfg.rel_tol:
            converged = True
            break
    elapsed = time.perf_counter() - start

    V = state.V
    resid = X - B @ V
    return SolverReport(
        abundances=V,
        iterations=state.iteration,
        converged=converged,
        rel_change=rel,
        rel_changes=np.array(state.rel_changes),
        primal_u=np.array(state.primal_u),
        primal_v=np.array(state.primal_v),
        data_fit=0.5 * float(np.sum(resid * resid)),
        penalty=float(problem.penalty(V)),
        lam=cfg.lam,
        wall_time=elapsed,
        time_per_iter=elapsed / max(state.iteration, 1),
        penalty_kind=cfg.penalty,
    )


def _with_penalty(cfg: SolverConfig, penalty: str) -> SolverConfig:
    if cfg.penalty == penalty:
        return cfg
    return SolverConfig(penalty, cfg.lam, cfg.rho, cfg.fraction, cfg.max_iter, cfg.rel_tol, cfg.seed)


def _check_groups(B, groups):
    if groups is None:
        raise StructureError("this penalty needs a group structure")
    groups.check(as_matrix(B).shape[1])


def solve_fclsu(X, B, cfg: SolverConfig = None, callback=None) -> SolverReport:
    """Fully constrained least squares (nonnegative, sum-to-one abundances)."""
    cfg = _with_penalty(cfg or SolverConfig(), "none")
    problem = SplitProblem(v_prox=prox.project_simplex)
    return admm_skeleton(X, B, problem, cfg, callback)


def solve_l1(X, B, cfg: SolverConfig, callback=None) -> SolverReport:
    """Nonnegative lasso; no sum-to-one constraint."""
    cfg = _with_penalty(cfg, "l1")
    problem = SplitProblem(
        v_prox=prox.project_nonneg,
        u_prox=prox.soft_threshold,
        penalty=lambda A: prox.evaluate_penalty(A, "l1").value,
    )
    return admm_skeleton(X, B, problem, cfg, callback)


def solve_collaborative(X, B, cfg: SolverConfig, callback=None) -> SolverReport:
    """Row-sparse (collaborative) abundances on the simplex."""
    cfg = _with_penalty(cfg, "collaborative")
    problem = SplitProblem(
        v_prox=prox.project_simplex,
        u_prox=prox.prox_collaborative_rows,
        penalty=lambda A: prox.evaluate_penalty(A, "collaborative").value,
    )
    return admm_skeleton(X, B, problem, cfg, callback)


def solve_group(X, B, groups: GroupStructure, cfg: SolverConfig, callback=None) -> SolverReport:
    """Group lasso (few active bundles per pixel, dense inside them)."""
    _check_groups(B, groups)
    cfg = _with_penalty(cfg, "group")
    problem = SplitProblem(
        v_prox=prox.project_simplex,
        u_prox=lambda W, tau: prox.prox_group(W, groups, tau),
        penalty=lambda A: prox.evaluate_penalty(A, "group", groups).value,
    )
    return admm_skeleton(X, B, problem, cfg, callback)


def solve_elitist(X, B, groups: GroupStructure, cfg: SolverConfig, callback=None) -> SolverReport:
    """Elitist lasso (few atoms per bundle, most bundles active)."""
    _check_groups(B, groups)
    cfg = _with_penalty(cfg, "elitist")
    problem = SplitProblem(
        v_prox=prox.project_simplex,
        u_prox=lambda W, tau: prox.prox_elitist(W, groups, tau),
        penalty=lambda A: prox.evaluate_penalty(A, "elitist", groups).value,
    )
    return admm_skeleton(X, B, problem, cfg, callback)


def solve_fractional(X, B, groups: GroupStructure, cfg: SolverConfig, callback=None) -> SolverReport:
    """Fractional mixed penalty ``sum_i ||a_Gi||_1^q`` with ``0 < q < 1``.

    The penalty branch acts on the per-group sums ``M A``, which equal the
    group L1 norms because ``A`` is kept on the simplex.
    """
    _check_groups(B, groups)
    cfg = _with_penalty(cfg, "fractional")
    q = cfg.fraction
    if not 0 < q < 1:
        raise ValueError(f"fractional penalty needs 0 < q < 1, got {q}")
    problem = SplitProblem(
        v_prox=prox.project_simplex,
        u_prox=lambda W, tau: prox.q_shrink(W, q, tau),
        u_matrix=groups.indicator(),
        penalty=lambda A: prox.evaluate_penalty(A, "fractional", groups, q).value,
    )
    return admm_skeleton(X, B, problem, cfg, callback)


def solve(X, B, cfg: SolverConfig, groups: GroupStructure = None, callback=None) -> SolverReport:
    """Dispatch on ``cfg.penalty``."""
    if cfg.penalty in GROUPED and groups is None:
        raise StructureError(f"penalty {cfg.penalty!r} needs a group structure")
    if cfg.penalty == "none":
        return solve_fclsu(X, B, cfg, callback)
    if cfg.penalty == "l1":
        return solve_l1(X, B, cfg, callback)
    if cfg.penalty == "collaborative":
        return solve_collaborative(X, B, cfg, callback)
    if cfg.penalty == "group":
        return solve_group(X, B, groups, cfg, callback)
    if cfg.penalty == "elitist":
        return solve_elitist(X, B, groups, cfg, callback)
    return solve_fractional(X, B, groups, cfg, callback)


def objective(X, B, A, cfg: SolverConfig, groups: GroupStructure = None) -> float:
    """``0.5 ||X - BA||^2 + lam * penalty(A)`` for the penalty in ``cfg``."""
    X, B, A = as_matrix(X), as_matrix(B), as_matrix(A)
    r = X - B @ A
    pen = prox.evaluate_penalty(A, cfg.penalty, groups, cfg.fraction).value
    return 0.5 * float(np.sum(r * r)) + cfg.lam * pen
