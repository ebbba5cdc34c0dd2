"""Acceptance suite. Each test prints one ``criterion N: PASS/FAIL`` line.

The desk-scale comparisons (criteria 5, 6, 7, 9) share one set of solver runs
computed by the ``desk`` fixture.
"""
import time

import numpy as np
import pytest

from conftest import record
from oracles import (box_grid_minimum, grid_penalty, orthant_grid_minimum, quad_objective,
                     separable_grid_minimum, simplex_grid, simplex_grid_3)

from hsibundles import cli
from hsibundles.bundles import BundleExtractionConfig, extract_bundles
from hsibundles.core import GroupStructure, collapse_abundances, equivalent_endmember_stack
from hsibundles.metrics import rmse_abundance
from hsibundles.prox import (block_soft_threshold, project_nonneg, project_simplex,
                             prox_collaborative_rows, prox_group, q_shrink, soft_threshold)
from hsibundles.simgen import SceneSpec, generate_scene
from hsibundles.solvers import SolverConfig, objective, solve

SEEDS = range(10)
ACTIVE = 0.01
# regularization grids for the desk-scale comparison
LAMBDAS = {
    "none": [0.0],
    "group": [1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
    "elitist": [1e-3, 3e-3, 1e-2, 3e-2],
    "fractional": [1e-2, 3e-2, 1e-1, 3e-1],
}
FRACTION = 0.1


# -- criterion 1 ------------------------------------------------------------

STEP = 1e-2


def _strongly_convex_box(v, tau, lip):
    """Half-width of a box around ``v`` holding every grid point that can beat
    the grid point nearest the minimizer of ``0.5||x - v||^2 + tau * phi(x)``,
    for ``phi`` Lipschitz with constant ``lip``.

    The minimizer lies within ``tau * lip`` of ``v``. The nearest grid point is
    within ``h = STEP * sqrt(n) / 2`` of it and costs at most
    ``delta = (2 tau lip) h + h^2 / 2`` more, while strong convexity keeps every
    point with lower value within ``sqrt(2 delta)`` of the minimizer.
    """
    n = v.size
    h = STEP * np.sqrt(n) / 2
    delta = 2 * tau * lip * h + h * h / 2
    return tau * lip + np.sqrt(2 * delta) + STEP


def _prox_cases(rng):
    n = int(rng.integers(1, 4))
    v = rng.uniform(-3, 3, n)
    tau = float(rng.uniform(0.01, 0.3))
    return n, v, tau


def test_criterion_01_prox_grid_oracle():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {}

    def check(name, value, best):
        worst[name] = max(worst.get(name, -np.inf), value - best)

    for _ in range(200):
        # soft threshold: separable, exact full grid
        n, v, tau = _prox_cases(rng)
        x = soft_threshold(v, tau)
        val = 0.5 * np.sum((x - v) ** 2) + tau * np.abs(x).sum()
        best = separable_grid_minimum(lambda t, vi: 0.5 * (t - vi) ** 2 + tau * np.abs(t), v)
        check("soft", val, best)

        # orthant projection: separable with the indicator of t >= 0
        n, v, _ = _prox_cases(rng)
        x = project_nonneg(v)
        val = 0.5 * np.sum((x - v) ** 2)
        best = separable_grid_minimum(
            lambda t, vi: np.where(t >= 0, 0.5 * (t - vi) ** 2, np.inf), v)
        check("orthant", val, best)

        # simplex projection: the grid points of [-5, 5]^n on the simplex
        n, v, _ = _prox_cases(rng)
        x = project_simplex(v)
        grid = simplex_grid(n, STEP) if n < 3 else simplex_grid_3(STEP)
        check("simplex", 0.5 * np.sum((x - v) ** 2),
              float(np.min(0.5 * np.sum((grid - v[:, None]) ** 2, axis=0))))

        # block soft threshold (Euclidean norm)
        n, v, tau = _prox_cases(rng)
        x = block_soft_threshold(v, tau)
        f = lambda P, v=v, tau=tau: (0.5 * np.sum((P - v[:, None]) ** 2, axis=0)
                                     + tau * np.sqrt(np.sum(P * P, axis=0)))
        val = float(f(x[:, None])[0])
        best, _ = box_grid_minimum(f, v, _strongly_convex_box(v, tau, 1.0), STEP)
        check("block-soft", val, best)

        # group prox over a random partition of the coordinates
        n, v, tau = _prox_cases(rng)
        labels = rng.integers(0, n, n)
        labels = np.unique(labels, return_inverse=True)[1]
        g = GroupStructure(labels)
        x = prox_group(v, g, tau)
        f = lambda P, v=v, tau=tau, labels=labels: (
            0.5 * np.sum((P - v[:, None]) ** 2, axis=0) + tau * grid_penalty(P, "group", labels))
        val = float(f(x[:, None])[0])
        best, _ = box_grid_minimum(f, v, _strongly_convex_box(v, tau, np.sqrt(g.n_groups)), STEP)
        check("group", val, best)

        # collaborative rows: a rows x cols matrix with at most 3 entries
        n, _, tau = _prox_cases(rng)
        rows = int(rng.integers(1, n + 1))
        cols = max(1, n // rows)
        V = rng.uniform(-3, 3, (rows, cols))
        X = prox_collaborative_rows(V, tau)
        val = 0.5 * np.sum((X - V) ** 2) + tau * np.sum(np.sqrt(np.sum(X * X, axis=1)))
        best = 0.0
        for r in range(rows):
            vr = V[r]
            f = lambda P, vr=vr, tau=tau: (0.5 * np.sum((P - vr[:, None]) ** 2, axis=0)
                                           + tau * np.sqrt(np.sum(P * P, axis=0)))
            best += box_grid_minimum(f, vr, _strongly_convex_box(vr, tau, 1.0), STEP)[0]
        check("collaborative-row", val, best)

    elapsed = time.perf_counter() - start
    ok = all(w <= 1e-6 for w in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {w:+.1e}" for k, w in worst.items())
    record(1, ok, f"worst objective minus grid minimum: {detail}; {elapsed:.1f}s")
    assert ok


# -- criterion 2 ------------------------------------------------------------

def test_criterion_02_simplex_kkt():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    total = 0
    per_n = 2000
    for n in range(1, 51):
        V = rng.normal(0, rng.uniform(0.1, 5), (n, per_n))
        X = project_simplex(V)
        support = X > 0
        # theta from the support equations x_i = v_i - theta
        theta = np.sum(np.where(support, V - X, 0), axis=0) / support.sum(0)
        r_sum = np.abs(X.sum(0) - 1)
        r_neg = np.maximum(-X, 0)
        r_on = np.where(support, np.abs(X - (V - theta)), 0)
        r_off = np.where(support, 0, np.maximum(V - theta, 0))
        worst = max(worst, r_sum.max(), r_neg.max(), r_on.max(), r_off.max())
        total += per_n
    elapsed = time.perf_counter() - start
    ok = total == 100_000 and worst <= 1e-10 and elapsed < 10
    record(2, ok, f"{total} vectors, worst KKT residual {worst:.1e}, {elapsed:.2f}s")
    assert ok


# -- criterion 3 ------------------------------------------------------------

def test_criterion_03_q_shrink_reductions():
    rng = np.random.default_rng(303)
    q1 = True
    for tau in rng.uniform(0, 2, 10):
        u = rng.normal(0, 2, 1_000)
        q1 &= np.array_equal(q_shrink(u, 1.0, tau), soft_threshold(u, tau))
    dead = True
    for q in (0.1, 0.5, 0.9):
        tau = 0.7
        grid = np.concatenate([rng.uniform(-3, 3, 10_000), [tau, -tau, 0.0,
                               np.nextafter(tau, 1), np.nextafter(-tau, -1)]])
        out = q_shrink(grid, q, tau)
        dead &= bool(np.all((out == 0) == (np.abs(grid) <= tau)))
    ok = q1 and dead
    record(3, ok, f"q=1 equals soft threshold: {q1}; dead zone exactly |u|<=tau: {dead}")
    assert ok


# -- criterion 4 ------------------------------------------------------------

def test_criterion_04_convex_solver_oracle():
    start = time.perf_counter()
    groups = GroupStructure(np.array([0, 0, 1]))
    P = simplex_grid_3(1e-3)
    worst = {}
    for pen in ("none", "l1", "collaborative", "group", "elitist"):
        rng = np.random.default_rng(404)
        for _ in range(20):
            B = rng.uniform(0.05, 1, (6, 3))
            x = B @ rng.dirichlet(np.ones(3)) + 0.02 * rng.normal(size=6)
            lam = 0.0 if pen == "none" else float(rng.uniform(0.005, 0.1))
            cfg = SolverConfig(pen, lam, rho=1.0, max_iter=5000, rel_tol=1e-10)
            rep = solve(x[:, None], B, cfg, groups)
            val = objective(x[:, None], B, rep.abundances, cfg, groups)
            f = quad_objective(B, x)
            full = lambda Z, f=f, lam=lam, pen=pen: f(Z) + lam * grid_penalty(Z, pen, groups.labels)
            best = orthant_grid_minimum(full, 3)[0] if pen == "l1" else float(np.min(full(P)))
            worst[pen] = max(worst.get(pen, -np.inf), val - best)
    elapsed = time.perf_counter() - start
    ok = all(w <= 2e-3 for w in worst.values()) and elapsed < 120
    names = {"none": "fclsu"}
    detail = ", ".join(f"{names.get(k, k)} {w:+.1e}" for k, w in worst.items())
    record(4, ok, f"worst objective gap to grid oracle: {detail}; {elapsed:.1f}s")
    assert ok


# -- shared desk-scale runs -------------------------------------------------

def _mean_atoms_per_active_group(A_atom, groups):
    Ac = collapse_abundances(A_atom, groups)
    active_groups = Ac > ACTIVE
    atoms = collapse_abundances((A_atom > ACTIVE).astype(float), groups)
    return float(atoms[active_groups].mean())


@pytest.fixture(scope="module")
def desk():
    start = time.perf_counter()
    out = []
    for seed in SEEDS:
        image, truth = generate_scene(SceneSpec(seed=seed))
        X, B, G = image.data, truth.dictionary, truth.groups
        per_solver = {}
        for pen, lams in LAMBDAS.items():
            runs = []
            for lam in lams:
                rep = solve(X, B, SolverConfig(pen, lam, fraction=FRACTION), G)
                A = rep.abundances
                runs.append(dict(lam=lam, A=A,
                                 rmse=rmse_abundance(collapse_abundances(A, G), truth.abundances)))
            per_solver[pen] = min(runs, key=lambda r: r["rmse"])
            per_solver[pen]["all"] = runs
        out.append(dict(seed=seed, X=X, B=B, groups=G, truth=truth, best=per_solver))
    return dict(runs=out, elapsed=time.perf_counter() - start)


# -- criterion 5 ------------------------------------------------------------

def test_criterion_05_sum_to_one(desk):
    worst_sum = 0.0
    worst_neg = 0.0
    count = 0
    for run in desk["runs"]:
        for pen, best in run["best"].items():
            for r in best["all"]:
                A = r["A"]
                worst_sum = max(worst_sum, float(np.abs(A.sum(0) - 1).max()))
                worst_neg = max(worst_neg, float(-A.min()))
                count += 1
    # the collaborative solver on a small scene as well
    image, truth = generate_scene(SceneSpec(seed=0, width=12, height=12))
    rep = solve(image.data, truth.dictionary, SolverConfig("collaborative", 0.05), truth.groups)
    worst_sum = max(worst_sum, float(np.abs(rep.abundances.sum(0) - 1).max()))
    worst_neg = max(worst_neg, float(-rep.abundances.min()))
    count += 1
    ok = worst_sum <= 1e-6 and worst_neg <= 1e-9
    record(5, ok, f"{count} solves: max |colsum-1| {worst_sum:.1e}, most negative {-worst_neg:.1e}")
    assert ok


# -- criterion 6 ------------------------------------------------------------

def test_criterion_06_table_trend(desk):
    hits = 0
    rows = []
    for run in desk["runs"]:
        f = run["best"]["fractional"]["rmse"]
        g = run["best"]["group"]["rmse"]
        c = run["best"]["none"]["rmse"]
        hits += f <= g <= c
        rows.append(f"{f:.4f}/{g:.4f}/{c:.4f}")
    ok = hits >= 8 and desk["elapsed"] < 600
    record(6, ok, f"fractional<=group<=fclsu on {hits}/10 seeds "
                  f"(frac/group/fclsu: {' '.join(rows)}); {desk['elapsed']:.0f}s")
    assert ok


# -- criterion 7 ------------------------------------------------------------

def test_criterion_07_sparsity_patterns(desk):
    hits_groups = 0
    hits_atoms = 0
    both = 0
    for run in desk["runs"]:
        G = run["groups"]
        counts = {pen: float((collapse_abundances(run["best"][pen]["A"], G) > ACTIVE).sum(0).mean())
                  for pen in ("group", "elitist")}
        atoms = {pen: _mean_atoms_per_active_group(run["best"][pen]["A"], G)
                 for pen in ("group", "fractional")}
        a = counts["group"] < counts["elitist"]
        b = atoms["fractional"] < atoms["group"]
        hits_groups += a
        hits_atoms += b
        both += a and b
    ok = both >= 8
    record(7, ok, f"groups/pixel group<elitist on {hits_groups}/10, atoms/active group "
                  f"fractional<group on {hits_atoms}/10, both on {both}/10")
    assert ok


# -- criterion 8 ------------------------------------------------------------

def _match_angles(C, T):
    from itertools import permutations
    Cn = C / np.linalg.norm(C, axis=0)
    Tn = T / np.linalg.norm(T, axis=0)
    ang = np.degrees(np.arccos(np.clip(Cn.T @ Tn, -1, 1)))
    k = C.shape[1]
    return min(max(ang[i, p] for i, p in enumerate(perm)) for perm in permutations(range(k)))


def test_criterion_08_bundle_pipeline():
    hits = 0
    exact = True
    worst = []
    for seed in SEEDS:
        image, truth = generate_scene(SceneSpec(n_materials=3, n_variants=4, snr_db=None, seed=seed))
        X = image.data
        D, G = extract_bundles(X, BundleExtractionConfig(3, seed=seed))
        pixels = {X[:, k].tobytes() for k in range(X.shape[1])}
        exact &= all(D.signatures[:, j].tobytes() in pixels for j in range(D.atoms))
        U = D.signatures / np.linalg.norm(D.signatures, axis=0)
        C = np.stack([U[:, G.members(p)].mean(1) for p in range(G.n_groups)], axis=1)
        a = _match_angles(C, truth.base)
        worst.append(a)
        hits += a <= 5.0
    ok = hits >= 9 and exact
    record(8, ok, f"centroids within 5 deg on {hits}/10 seeds (worst {max(worst):.2f} deg); "
                  f"all atoms exact pixels: {exact}")
    assert ok


# -- criterion 9 ------------------------------------------------------------

def test_criterion_09_equivalent_endmember_geometry(desk):
    worst_neg = 0.0
    worst_sum = 0.0
    worst_fit = 0.0
    pairs = 0
    for run in desk["runs"]:
        B, G = run["B"], run["groups"]
        for pen in ("group", "elitist", "fractional", "none"):
            A = run["best"][pen]["A"]
            S, defined = equivalent_endmember_stack(A, B, G)
            for p in range(G.n_groups):
                idx = G.members(p)
                cols = np.flatnonzero(defined[p])
                # coefficients implied by S: least squares on the group's atoms
                W = np.linalg.lstsq(B[:, idx], S[:, p, cols], rcond=None)[0]
                worst_neg = max(worst_neg, float(-W.min()))
                worst_sum = max(worst_sum, float(np.abs(W.sum(0) - 1).max()))
                worst_fit = max(worst_fit, float(np.abs(B[:, idx] @ W - S[:, p, cols]).max()))
                pairs += cols.size
    ok = worst_neg <= 1e-9 and worst_sum <= 1e-9
    record(9, ok, f"{pairs} pairs: min coefficient {-worst_neg:.1e}, max |sum-1| {worst_sum:.1e}")
    assert ok


# -- criterion 10 -----------------------------------------------------------

def test_criterion_10_complexity_scaling():
    rng = np.random.default_rng(1010)
    L, N = 100, 900
    t = {}
    for Q in (50, 100):
        B = rng.uniform(0.05, 1, (L, Q))
        X = B @ rng.dirichlet(np.ones(Q), N).T
        G = GroupStructure.from_sizes([10] * (Q // 10))
        cfg = SolverConfig("group", 0.01, max_iter=100, rel_tol=0.0)
        t[Q] = min(solve(X, B, cfg, G).time_per_iter for _ in range(5))
    ratio = t[100] / t[50]
    ok = 2.0 <= ratio <= 6.0
    record(10, ok, f"per-iteration time Q=50 {t[50] * 1e3:.2f} ms, Q=100 {t[100] * 1e3:.2f} ms, "
                   f"ratio {ratio:.2f}")
    assert ok


# -- criterion 11 -----------------------------------------------------------

def _pipeline(root):
    scene, bundles, unmixed, scored = (root / d for d in ("scene", "bundles", "unmix", "eval"))
    steps = [
        ["simulate", "--seed", "11", "--out", str(scene), "--set", "width=15", "--set", "height=15",
         "--set", "bands=40", "--set", "materials=3", "--set", "variants=3"],
        ["extract", "--seed", "11", "--out", str(bundles), "--set", f"image={scene / 'image.bin'}",
         "--set", "materials=3", "--set", "subset_fraction=0.2"],
        ["unmix", "--seed", "11", "--out", str(unmixed), "--penalty", "group", "--lambda", "0.01",
         "--set", f"image={scene / 'image.bin'}", "--set", f"dictionary={bundles / 'dictionary.bin'}",
         "--set", f"groups={bundles / 'groups.txt'}", "--set", "endmembers=yes"],
        ["eval", "--out", str(scored), "--set", f"image={scene / 'image.bin'}",
         "--set", f"dictionary={bundles / 'dictionary.bin'}", "--set", f"groups={bundles / 'groups.txt'}",
         "--set", f"abundances={unmixed / 'abundances_atom.bin'}",
         "--set", f"truth={scene / 'truth_atom.bin'}",
         "--set", f"truth_dictionary={scene / 'dictionary.bin'}",
         "--set", f"truth_groups={scene / 'groups.txt'}"],
    ]
    codes = [cli.main(argv) for argv in steps]
    files = sorted(p.relative_to(root) for p in [*root.rglob("*.bin"), *root.rglob("metrics.csv")])
    return codes, {str(f): (root / f).read_bytes() for f in files}


def test_criterion_11_cli_determinism(tmp_path):
    codes_a, a = _pipeline(tmp_path / "a")
    codes_b, b = _pipeline(tmp_path / "b")
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    ok = codes_a == codes_b == [0, 0, 0, 0] and same and len(a) >= 8
    record(11, ok, f"exit codes {codes_a}/{codes_b}; {len(a)} output files bit-identical: {same}")
    assert ok
