"""Command-line front end.

    hsibundles simulate --out scene/ --seed 7
    hsibundles extract  --set image=scene/image.bin --set materials=5 --out bundles/
    hsibundles unmix    --config unmix.cfg --penalty group --lambda 0.01
    hsibundles eval     --config eval.cfg
    hsibundles sweep    --config sweep.cfg --threads 4
    hsibundles report   --set abundances=out/abundances.bin --set layout=scene/spec.txt

Parameters come from a flat ``key=value`` file (``--config``), then from the
named flags, then from ``--set key=value``; later sources win. Unknown keys
are errors. Exit codes: 0 success, 2 configuration error, 3 data error,
4 solver divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .bundles import (BundleExtractionConfig, ClusteringError, DegenerateDataError,
                      extract_bundles)
from .core import (GroupStructure, SpectralImage, StructureError, collapse_abundances,
                   equivalent_endmember_stack)
from .metrics import MetricReport, evaluate
from .simgen import SceneSpec, generate_scene
from .solvers import GROUPED, SolverConfig, SolverDiverged, solve

log = logging.getLogger("hsibundles")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


COMMON_KEYS = {"seed", "out", "threads"}
SOLVER_KEYS = {"penalty", "lambda", "fraction", "rho", "max_iter", "tol"}
TRUTH_KEYS = {"truth", "truth_dictionary", "truth_groups", "per_atom_normalization"}
COMMAND_KEYS = {
    "simulate": {"materials", "variants", "width", "height", "bands", "k_min", "k_max",
                 "psi_min", "psi_max", "beta_min", "beta_max", "variant_noise", "snr_db"},
    "extract": {"image", "materials", "subsets", "subset_fraction"},
    "unmix": {"image", "dictionary", "groups", "endmembers"} | SOLVER_KEYS,
    "eval": {"image", "dictionary", "groups", "abundances"} | TRUTH_KEYS,
    "sweep": {"image", "dictionary", "groups", "lambdas", "fractions"} | SOLVER_KEYS | TRUTH_KEYS,
    "report": {"abundances", "groups", "width", "height", "layout", "per_atom"},
}
FLAG_KEYS = {"seed": "seed", "out": "out", "penalty": "penalty", "lambda_": "lambda",
             "fraction": "fraction", "rho": "rho", "max_iter": "max_iter", "tol": "tol",
             "threads": "threads"}


def default_fraction_grid():
    """27 fractions: 9 evenly spaced steps in each of three decades up to 0.9."""
    return [round(s * d, 12) for d in (1e-3, 1e-2, 1e-1) for s in range(1, 10)]


class Config:
    """Typed access to a flat string mapping; rejects keys the command does not know."""

    def __init__(self, values: dict, command: str):
        allowed = COMMON_KEYS | COMMAND_KEYS[command]
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
        self.values = values
        self.command = command

    def has(self, key):
        return key in self.values and self.values[key] != ""

    def str(self, key, default=None):
        if self.has(key):
            return self.values[key]
        if default is None:
            raise ConfigError(f"{self.command}: missing required key {key!r}")
        return default

    def path(self, key, required=True):
        if not self.has(key):
            if required:
                raise ConfigError(f"{self.command}: missing required key {key!r}")
            return None
        return Path(self.values[key])

    def _typed(self, key, default, cast, kind):
        if not self.has(key):
            if default is None:
                raise ConfigError(f"{self.command}: missing required key {key!r}")
            return default
        try:
            return cast(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: {self.values[key]!r} is not {kind}") from None

    def int(self, key, default=None):
        return self._typed(key, default, int, "an integer")

    def float(self, key, default=None):
        return self._typed(key, default, float, "a number")

    def bool(self, key, default=False):
        if not self.has(key):
            return default
        value = self.values[key].lower()
        if value in ("1", "true", "yes", "on"):
            return True
        if value in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: {self.values[key]!r} is not a boolean")

    def floats(self, key, default=None):
        if not self.has(key):
            if default is None:
                raise ConfigError(f"{self.command}: missing required key {key!r}")
            return default
        try:
            return [float(v) for v in self.values[key].split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers") from None

    def out_dir(self):
        try:
            return io.ensure_dir(self.str("out", "."))
        except OSError as exc:
            raise OSError(f"cannot create output directory: {exc}") from exc


def solver_config(cfg: Config) -> SolverConfig:
    try:
        return SolverConfig(
            penalty=cfg.str("penalty", "none"),
            lam=cfg.float("lambda", 0.0),
            rho=cfg.float("rho", 10.0),
            fraction=cfg.float("fraction", 0.1),
            max_iter=cfg.int("max_iter", 1000),
            rel_tol=cfg.float("tol", 1e-6),
            seed=cfg.int("seed", 0),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _require_solver_inputs(cfg: Config, scfg: SolverConfig):
    if scfg.penalty != "none" and not cfg.has("lambda"):
        raise ConfigError(f"penalty {scfg.penalty!r} needs a lambda value")
    if scfg.penalty in GROUPED and not cfg.has("groups"):
        raise ConfigError(f"penalty {scfg.penalty!r} needs a groups file")


def _load_groups_or_singletons(cfg: Config, n_atoms: int) -> GroupStructure:
    path = cfg.path("groups", required=False)
    groups = io.load_groups(path) if path else GroupStructure.singletons(n_atoms)
    groups.check(n_atoms)
    return groups


def cmd_simulate(cfg: Config) -> dict:
    """Write a synthetic scene with its ground truth."""
    snr = cfg.str("snr_db", "30")
    try:
        spec = SceneSpec(
            n_materials=cfg.int("materials", 5), n_variants=cfg.int("variants", 5),
            width=cfg.int("width", 30), height=cfg.int("height", 30), n_bands=cfg.int("bands", 100),
            k_min=cfg.int("k_min", 1), k_max=cfg.int("k_max", 3),
            psi_min=cfg.float("psi_min", 0.75), psi_max=cfg.float("psi_max", 1.25),
            beta_min=cfg.float("beta_min", -0.1), beta_max=cfg.float("beta_max", 0.1),
            variant_noise=cfg.float("variant_noise", 0.005),
            snr_db=None if snr.lower() in ("inf", "none") else float(snr),
            seed=cfg.int("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = cfg.out_dir()
    image, truth = generate_scene(spec)
    files = {
        "image": out / "image.bin",
        "dictionary": out / "dictionary.bin",
        "groups": out / "groups.txt",
        "truth_atom": out / "truth_atom.bin",
        "truth": out / "truth.bin",
        "spec": out / "spec.txt",
    }
    io.save_matrix(image.data, files["image"])
    io.save_matrix(truth.dictionary, files["dictionary"])
    io.save_groups(truth.groups, files["groups"])
    io.save_matrix(truth.atom_abundances, files["truth_atom"])
    io.save_matrix(truth.abundances, files["truth"])
    io.write_kv(spec.to_dict(), files["spec"])
    log.info("scene with %d atoms in %d groups written to %s", spec.n_atoms, spec.n_materials, out)
    return files


def cmd_extract(cfg: Config) -> dict:
    """Extract endmember bundles from an image."""
    X = io.load_matrix(cfg.path("image"))
    try:
        ecfg = BundleExtractionConfig(
            n_endmembers=cfg.int("materials"),
            n_subsets=cfg.int("subsets", 10),
            fraction=cfg.float("subset_fraction", 0.10),
            seed=cfg.int("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = cfg.out_dir()
    try:
        D, groups = extract_bundles(X, ecfg, np.random.default_rng(ecfg.seed))
    except DegenerateDataError as exc:
        raise DegenerateDataError(f"bundle extraction on {cfg.path('image')}: {exc}") from exc
    files = {"dictionary": out / "dictionary.bin", "groups": out / "groups.txt",
             "spec": out / "extract.txt"}
    io.save_matrix(D.signatures, files["dictionary"])
    io.save_groups(groups, files["groups"])
    io.write_kv({"materials": ecfg.n_endmembers, "subsets": ecfg.n_subsets,
                 "subset_fraction": ecfg.fraction, "seed": ecfg.seed,
                 "atoms": D.atoms}, files["spec"])
    log.info("extracted %d atoms in %d bundles", D.atoms, groups.n_groups)
    return files


def _unmix_arrays(cfg: Config):
    scfg = solver_config(cfg)
    _require_solver_inputs(cfg, scfg)
    X = io.load_matrix(cfg.path("image"))
    B = io.load_matrix(cfg.path("dictionary"))
    groups = _load_groups_or_singletons(cfg, B.shape[1])
    return X, B, groups, scfg


def cmd_unmix(cfg: Config) -> dict:
    """Estimate abundances with the configured penalty."""
    X, B, groups, scfg = _unmix_arrays(cfg)
    out = cfg.out_dir()
    report = solve(X, B, scfg, groups)
    A = np.maximum(report.abundances, 0.0)
    files = {"abundances_atom": out / "abundances_atom.bin",
             "abundances": out / "abundances.bin",
             "report": out / "solver_report.txt"}
    io.save_matrix(A, files["abundances_atom"])
    io.save_matrix(collapse_abundances(A, groups), files["abundances"])
    summary = report.summary()
    summary["fraction"] = repr(scfg.fraction)
    summary["rho"] = repr(scfg.rho)
    io.write_kv(summary, files["report"])
    if cfg.bool("endmembers"):
        S, _ = equivalent_endmember_stack(A, B, groups)
        # column k * P + p holds material p of pixel k
        files["endmembers"] = out / "endmembers.bin"
        io.save_matrix(S.transpose(0, 2, 1).reshape(S.shape[0], -1), files["endmembers"])
    log.info("%s after %d iterations", report.status, report.iterations)
    return files


def _truth_inputs(cfg: Config):
    if not cfg.has("truth"):
        return None, None, None
    truth = io.load_matrix(cfg.path("truth"))
    tdict = cfg.path("truth_dictionary", required=False)
    tgroups = cfg.path("truth_groups", required=False)
    return (truth,
            io.load_matrix(tdict) if tdict else None,
            io.load_groups(tgroups) if tgroups else None)


def _metric_report(X, B, groups, A, truth, per_atom) -> MetricReport:
    t_atom, t_dict, t_groups = truth
    return evaluate(X, B, groups, A, t_atom, t_dict, t_groups, per_atom)


def cmd_eval(cfg: Config) -> dict:
    """Score an abundance estimate, with or without ground truth."""
    X = io.load_matrix(cfg.path("image"))
    B = io.load_matrix(cfg.path("dictionary"))
    A = io.load_matrix(cfg.path("abundances"))
    groups = _load_groups_or_singletons(cfg, B.shape[1])
    report = _metric_report(X, B, groups, A, _truth_inputs(cfg),
                            cfg.bool("per_atom_normalization"))
    out = cfg.out_dir()
    files = {"csv": out / "metrics.csv", "text": out / "metrics.txt"}
    with open(files["csv"], "w") as fh:
        fh.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    io.write_kv({k: ("" if v is None else v) for k, v in report.as_dict().items()}, files["text"])
    return files


SWEEP_METRICS = ("rmse_abundance", "rmse_group", "rmse_endmembers", "sam_endmembers_degrees",
                 "reconstruction_rmse", "reconstruction_sam_degrees")


def cmd_sweep(cfg: Config) -> dict:
    """Solve and score every (lambda, fraction) grid point."""
    X, B, groups, base = _sweep_arrays(cfg)
    lambdas = cfg.floats("lambdas", [base.lam])
    if base.penalty == "fractional":
        fallback = [base.fraction] if cfg.has("fraction") else default_fraction_grid()
        fractions = cfg.floats("fractions", fallback)
    else:
        fractions = [base.fraction]
    grid = [(lam, q) for q in fractions for lam in lambdas]
    if not grid:
        raise ConfigError("sweep grid is empty")
    truth = _truth_inputs(cfg)
    per_atom = cfg.bool("per_atom_normalization")

    def run(point):
        lam, q = point
        row = {"penalty": base.penalty, "lambda": lam, "fraction": q}
        try:
            scfg = SolverConfig(base.penalty, lam, base.rho, q, base.max_iter, base.rel_tol, base.seed)
            rep = solve(X, B, scfg, groups)
            A = np.maximum(rep.abundances, 0.0)
            metrics = _metric_report(X, B, groups, A, truth, per_atom)
            row.update(status=rep.status, iterations=rep.iterations, **metrics.as_dict())
        except (SolverDiverged, ValueError, ArithmeticError) as exc:
            row.update(status=f"error: {exc}".replace(",", ";"), iterations="")
        return row

    threads = max(1, cfg.int("threads", 1))
    if threads == 1:
        rows = [run(p) for p in grid]
    else:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(run, grid))

    for name in SWEEP_METRICS:
        vals = [r.get(name) for r in rows]
        present = [v for v in vals if v is not None]
        best = min(present) if present else None
        for r, v in zip(rows, vals):
            r[f"best_{name}"] = int(best is not None and v == best)

    columns = (["penalty", "lambda", "fraction", "status", "iterations"] + list(SWEEP_METRICS)
               + ["evaluated_pairs"] + [f"best_{m}" for m in SWEEP_METRICS])
    out = cfg.out_dir()
    path = out / "sweep.csv"
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_cell(r.get(c)) for c in columns) + "\n")
    return {"csv": path}


def _sweep_arrays(cfg: Config):
    scfg = solver_config(cfg)
    if scfg.penalty in GROUPED and not cfg.has("groups"):
        raise ConfigError(f"penalty {scfg.penalty!r} needs a groups file")
    if scfg.penalty != "none" and not (cfg.has("lambdas") or cfg.has("lambda")):
        raise ConfigError("sweep needs lambdas (or a single lambda)")
    X = io.load_matrix(cfg.path("image"))
    B = io.load_matrix(cfg.path("dictionary"))
    return X, B, _load_groups_or_singletons(cfg, B.shape[1]), scfg


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_pgm(image, path) -> None:
    """16-bit binary graymap; 0 maps to black and 1 to white."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    h, w = img.shape
    data = np.round(img * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise io.FormatError(f"{path}: not a binary graymap")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(parts[4], dtype=dtype, count=w * h)
    return data.reshape(h, w) / maxval


def cmd_report(cfg: Config) -> dict:
    """Abundance maps as graymaps plus a per-material summary table."""
    A = io.load_matrix(cfg.path("abundances"))
    if cfg.has("width") and cfg.has("height"):
        width, height = cfg.int("width"), cfg.int("height")
    elif cfg.has("layout"):
        spec = io.read_kv(cfg.path("layout"))
        try:
            width, height = int(spec["width"]), int(spec["height"])
        except (KeyError, ValueError):
            raise ConfigError(f"{cfg.path('layout')}: no width/height recorded") from None
    else:
        raise ConfigError("no spatial layout recorded; supply width and height (or layout=spec.txt)")
    try:
        SpectralImage(np.zeros((2, A.shape[1])), (width, height))
    except StructureError as exc:
        raise ConfigError(str(exc)) from None

    maps = {}
    if cfg.has("groups"):
        groups = io.load_groups(cfg.path("groups"))
        groups.check(A.shape[0])
        if cfg.bool("per_atom"):
            maps.update({f"atom_{j + 1:03d}": A[j] for j in range(A.shape[0])})
        A = collapse_abundances(A, groups)
    maps = {**{f"material_{p + 1:02d}": A[p] for p in range(A.shape[0])}, **maps}

    out = cfg.out_dir()
    files = {}
    for name, row in maps.items():
        files[name] = out / f"{name}.pgm"
        write_pgm(row.reshape(height, width), files[name])
    lines = [f"{'material':>8} {'mean':>8} {'max':>8} {'cover>0.01':>10}"]
    for p in range(A.shape[0]):
        lines.append(f"{p + 1:>8d} {A[p].mean():8.4f} {A[p].max():8.4f} {np.mean(A[p] > 0.01):10.3f}")
    files["summary"] = out / "summary.txt"
    files["summary"].write_text("\n".join(lines) + "\n")
    return files


COMMANDS = {"simulate": cmd_simulate, "extract": cmd_extract, "unmix": cmd_unmix,
            "eval": cmd_eval, "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsibundles", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--penalty")
        p.add_argument("--lambda", dest="lambda_", type=float)
        p.add_argument("--fraction", type=float)
        p.add_argument("--rho", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--threads", type=int)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key")
    return parser


def gather_config(args) -> Config:
    values = dict(io.read_kv(args.config)) if args.config else {}
    for attr, key in FLAG_KEYS.items():
        v = getattr(args, attr)
        if v is not None:
            values[key] = repr(v) if isinstance(v, float) else str(v)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return Config(values, args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = gather_config(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDiverged as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, io.FormatError, StructureError, DegenerateDataError,
            ClusteringError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
