"""Command line runner: JSON config in, CSV/JSON reports and a manifest out.

Usage::

    schwarzlab run config.json --out results/
    schwarzlab check config.json
    schwarzlab summary results/manifest.json
"""
import argparse
import csv
import hashlib
import io
import json
import math
import platform
import re
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .decomposition import build_decomposition
from .diagnostics import (BoundReport, DenseModel, measure_constants, positivity_report, solver_table,
                          spectrum, structural_checks, verify_bounds, wielandt_report)
from .errors import ConfigError, OverlapTooLarge, SchwarzLabError
from .operators import DEFAULT_DENSE_CAP, EPSILON_SWEEP, LocalSolverBundle, Method, MethodKind
from .poisson_fem import build_grid

EXIT_OK, EXIT_ERROR, EXIT_BOUND_FAILED = 0, 1, 2

ALIASES = {"cells": "cells_per_side", "blocks": "blocks_per_side", "layers": "overlap_layers",
           "out": "output", "eps": "epsilon"}
DEFAULT_METHODS = tuple(k.value for k in MethodKind)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


@dataclass
class ExperimentConfig:
    dim: int
    cells_per_side: int
    blocks_per_side: int
    overlap_layers: int
    methods: list = field(default_factory=lambda: list(DEFAULT_METHODS))
    epsilon: list = field(default_factory=lambda: list(EPSILON_SWEEP))
    tol: float = 1e-10
    max_iter: int = 1000
    restart: int = 200
    seed: int = 0
    dense_cap: int = DEFAULT_DENSE_CAP
    wielandt_samples: int = 1000
    output: str = "results"

    def method_list(self) -> list:
        """Expanded methods; ``FEPS_T`` fans out over the epsilon list."""
        out = []
        for name in self.methods:
            kind = MethodKind(name)
            if kind is MethodKind.FEPS_T:
                out += [Method(kind, e) for e in self.epsilon if e < 1.0]
            else:
                out.append(Method(kind))
        return sorted(set(out), key=lambda m: m.sort_key)

    def echo(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def parse_config(text: str, overrides: dict = None) -> ExperimentConfig:
    """Validate a JSON config; errors name the offending line."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError("line 1: top level must be an object")

    def fail(key, msg):
        raise ConfigError(f"line {_line_of(text, key)}: {key}: {msg}")

    cfg = {}
    for key, val in raw.items():
        name = ALIASES.get(key, key)
        if name not in ExperimentConfig.__dataclass_fields__:
            fail(key, "unknown key")
        if name in cfg:
            fail(key, "given twice (alias)")
        cfg[name] = val
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for req in ("dim", "cells_per_side", "blocks_per_side", "overlap_layers"):
        if req not in cfg:
            raise ConfigError(f"line 1: missing required key {req}")

    def key_of(name):
        return next((k for k in raw if ALIASES.get(k, k) == name), name)

    def as_int(name, lo):
        v = cfg[name]
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            fail(key_of(name), f"expected integer >= {lo}, got {v!r}")
        return v

    if cfg["dim"] not in (1, 2) or isinstance(cfg["dim"], bool):
        fail("dim", f"expected 1 or 2, got {cfg['dim']!r}")
    n = as_int("cells_per_side", 4)
    nb = as_int("blocks_per_side", 1)
    layers = as_int("overlap_layers", 1)
    if n % nb:
        fail(key_of("blocks_per_side"), f"{nb} blocks do not divide {n} cells")
    try:
        build_decomposition(build_grid(cfg["dim"], n), nb, layers)
    except OverlapTooLarge as exc:
        fail(key_of("overlap_layers"), str(exc))
    for name in ("max_iter", "restart", "dense_cap", "wielandt_samples"):
        if name in cfg:
            as_int(name, 1)
    if "seed" in cfg:
        as_int("seed", 0)
    if "tol" in cfg and not (isinstance(cfg["tol"], (int, float)) and 0 < cfg["tol"] < 1):
        fail(key_of("tol"), f"expected a number in (0, 1), got {cfg['tol']!r}")
    if "epsilon" in cfg:
        eps = cfg["epsilon"]
        if not isinstance(eps, list) or not eps or not all(
                isinstance(e, (int, float)) and not isinstance(e, bool) and 0 < e <= 1 for e in eps):
            fail(key_of("epsilon"), "expected a non-empty list of numbers in (0, 1]")
        cfg["epsilon"] = [float(e) for e in eps]
    if "methods" in cfg:
        ms = cfg["methods"]
        if not isinstance(ms, list) or not all(m in DEFAULT_METHODS for m in ms):
            fail(key_of("methods"), f"expected a list drawn from {list(DEFAULT_METHODS)}")
    return ExperimentConfig(**cfg)


def load_config(path, overrides=None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, overrides)


# ---------------------------------------------------------------- run

class StageError(SchwarzLabError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


BOUND_HEADER = ["statement", "method", "measured", "theoretical", "slack", "kind", "passed", "note"]
SOLVER_HEADER = ["method", "solver", "iterations", "converged", "relative_residual", "error_a",
                 "iteration_bound"]


def bound_rows(reports):
    return [[r.statement, r.method, r.measured, r.theoretical, r.slack, r.kind, r.passed, r.note]
            for r in reports]


def spectrum_filename(method: Method) -> str:
    return "spectrum_" + re.sub(r"[^A-Za-z0-9_.]+", "_", method.label).strip("_") + ".csv"


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run every stage and write the reports; returns ``(manifest, exit_code)``."""
    out = Path(out_dir or cfg.output)
    timings, files, bounds = {}, {}, []
    methods = cfg.method_list()

    with _stage("assembly", timings):
        grid = build_grid(cfg.dim, cfg.cells_per_side)
    with _stage("decomposition", timings):
        od = build_decomposition(grid, cfg.blocks_per_side, cfg.overlap_layers)
    with _stage("operators", timings):
        bundle = LocalSolverBundle(grid, od, dense_cap=cfg.dense_cap)
        model = DenseModel(bundle)
    with _stage("constants", timings):
        constants = measure_constants(model, cfg.epsilon)
        bounds += structural_checks(model, constants, seed=cfg.seed)
    spectra = {}
    with _stage("spectra", timings):
        for m in methods:
            spectra[m] = spectrum(model, m)
            bounds += verify_bounds(m, constants, spectra[m])
    positivity, wielandt = {}, {}
    with _stage("positivity", timings):
        eps_small = min(cfg.epsilon)
        for eps in sorted(cfg.epsilon, reverse=True):
            if eps >= 1.0:
                continue
            p = positivity_report(model, eps)
            positivity[eps] = p
            kind = "assert" if eps == eps_small else "report"
            bounds.append(BoundReport(f"positivity: -min fov(FE^T) in c_eps (eps={eps:g})", "FE_T",
                                      -p.fov_min, 1e-10, kind=kind,
                                      note=f"tan_Theta={p.tan_Theta:.6g} alpha_R={p.alpha_R:.6g}"))
            if not math.isnan(p.theorem13_margin):
                bounds.append(BoundReport(f"theorem13_printed: -margin of the (1-alpha_R^2) lower bound (eps={eps:g})",
                                          "FEPS_T", -p.theorem13_margin, 0.0, kind="report",
                                          note=f"printed multiplier {p.multiplier:.6g}; Wielandt gives "
                                               f"{p.multiplier_wielandt:.6g}"))
            w = wielandt_report(model, eps, samples=cfg.wielandt_samples, seed=cfg.seed)
            wielandt[eps] = w
            bounds.append(BoundReport(f"wielandt: sampled ratio <= ((M-m)/(M+m))^2 (eps={eps:g})", "-",
                                      w.worst_ratio, w.bound + 1e-10))
    kappa_as = next((s.kappa_spectral for m, s in spectra.items() if m.kind is MethodKind.AS), None)
    with _stage("solvers", timings):
        rows = solver_table(bundle, methods, tol=cfg.tol, max_iter=cfg.max_iter, restart=cfg.restart,
                            kappa_as=kappa_as)
        for r in rows:
            if r.solver == "CG" and not math.isnan(r.iteration_bound):
                bounds.append(BoundReport("cg_iterations: iterations <= ceil(sqrt(kappa) ln(2/tol)/2)+1",
                                          r.method, float(r.iterations), r.iteration_bound))
            bounds.append(BoundReport(f"solver_error: |u - u*|_a/|u*|_a <= 10 tol ({r.solver})", r.method,
                                      r.error_a, 10 * cfg.tol,
                                      kind="report" if r.method == "NONE" else "assert"))

    with _stage("write", timings):
        out.mkdir(parents=True, exist_ok=True)
        cdict = constants.to_dict()
        cdict["positivity"] = {f"{e:g}": {k: getattr(p, k) for k in
                                          ("m", "M", "tan_Theta", "multiplier", "multiplier_wielandt", "split_ratio",
                                           "alpha_R", "theorem13_margin", "fov_min", "fov_a_form")}
                               for e, p in positivity.items()}
        cdict["wielandt"] = {f"{e:g}": {"m": w.m, "M": w.M, "bound": w.bound, "worst_ratio": w.worst_ratio,
                                        "samples": w.samples} for e, w in wielandt.items()}
        cdict["spectra"] = {m.label: {"kappa_aa": s.kappa_aa, "kappa_spectral": s.kappa_spectral,
                                      "sigma_max": s.sigma_max, "sigma_min": s.sigma_min,
                                      "fov_min_a": s.fov_min_a} for m, s in spectra.items()}
        texts = {"constants.json": json.dumps(_json_safe(cdict), indent=2, sort_keys=True) + "\n",
                 "bounds.csv": _csv_text(BOUND_HEADER, bound_rows(bounds))}
        for m, s in spectra.items():
            texts[spectrum_filename(m)] = _csv_text(["index", "real", "imag"],
                                                    [[i, z.real, z.imag] for i, z in enumerate(s.eigenvalues)])
        texts["solver_table.csv"] = _csv_text(SOLVER_HEADER, [[r.method, r.solver, r.iterations, r.converged,
                                                               r.relative_residual, r.error_a, r.iteration_bound]
                                                              for r in rows])
        for name, text in texts.items():
            data = text.encode()
            (out / name).write_bytes(data)
            files[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}

    failed = [b for b in bounds if b.failed_assertion]
    code = EXIT_BOUND_FAILED if failed else EXIT_OK
    manifest = {
        "config": cfg.echo(),
        "methods": [m.label for m in methods],
        "versions": {"schwarzlab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timings_s": timings,
        "files": files,
        "failed_assertions": [f"{b.method}: {b.statement}" for b in failed],
        "exit_code": code,
    }
    (out / "manifest.json").write_text(json.dumps(_json_safe(manifest), indent=2) + "\n")
    return manifest, code


def _json_safe(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------- summary

PRIMARY_BOUND = {"AS": "kappa_AS", "FE_T": "kappa_limit", "FEPS_T": "kappa_eps"}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_rows(manifest: dict, base: Path) -> list:
    constants = json.loads((base / "constants.json").read_text())
    bounds = _read_csv(base / "bounds.csv")
    solvers = _read_csv(base / "solver_table.csv")
    spectra = constants.get("spectra", {})
    rows = []
    labels = sorted(manifest.get("methods", []), key=lambda s: Method.parse(*_split_label(s)).sort_key)
    for label in labels:
        kind = _split_label(label)[0]
        kappa = float(spectra[label]["kappa_aa"])
        if kind == "AS":
            kappa = float(spectra[label]["kappa_spectral"])
        prefix = PRIMARY_BOUND.get(kind)
        b = next((r for r in bounds if r["method"] == label and prefix and r["statement"].startswith(prefix)), None)
        bound = float(b["theoretical"]) if b else math.nan
        slack = bound / kappa if b else math.nan
        it = next((r["iterations"] for r in solvers if r["method"] == label and r["solver"] == "GMRES"), "-")
        rows.append((label, kappa, bound, slack, it, float(spectra[label]["fov_min_a"])))
    return rows


def _split_label(label):
    m = re.fullmatch(r"(\w+)\(([^)]*)\)", label)
    return (m.group(1), float(m.group(2))) if m else (label, None)


def format_summary(rows) -> str:
    head = f"{'method':<14} {'kappa':>12} {'bound':>12} {'slack':>10} {'iters':>6} {'positivity':>12}"
    lines = [head, "-" * len(head)]
    for label, kappa, bound, slack, it, pos in rows:
        lines.append(f"{label:<14} {kappa:>12.6g} {bound:>12.6g} {slack:>10.4g} {it:>6} {pos:>12.4g}")
    return "\n".join(lines)


def print_summary(manifest_path, stream=None) -> str:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text())
    for name in manifest.get("files", {}):
        if not (path.parent / name).is_file():
            raise FileNotFoundError(f"listed file missing: {path.parent / name}")
    text = format_summary(summary_rows(manifest, path.parent))
    print(text, file=stream or sys.stdout)
    return text


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schwarzlab", description="Overlapping Schwarz diagnostics for Poisson.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run an experiment"), ("check", "validate a config only")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--dense-cap", type=int, default=None)
        s.add_argument("--seed", type=int, default=None)
    s = sub.add_parser("summary", help="print the summary table of a finished run")
    s.add_argument("manifest")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "summary":
            print_summary(args.manifest)
            return EXIT_OK
        cfg = load_config(args.config, {"dense_cap": args.dense_cap, "seed": args.seed, "output": args.out})
        if args.command == "check":
            print(json.dumps(cfg.echo(), indent=2))
            return EXIT_OK
        manifest, code = run_experiment(cfg)
        print_summary(Path(cfg.output) / "manifest.json")
        for line in manifest["failed_assertions"]:
            print(f"FAILED {line}", file=sys.stderr)
        return code
    except (SchwarzLabError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
