"""Command-line front end: ``brokenpde <subcommand> ...``.

Exit codes: 0 success, 1 other numerical failure, 2 configuration or input
error, 3 non-convergence, 4 acceptance failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import classify_order, frequency_profile, vanishing_order
from .config import ExperimentConfig, load_config
from .errors import BrokenPDEError, ConfigError, ExprError, NoConvergence, RadiiTooSmall, WrongRegime
from .experiments import SUITES, Context, run_suite
from .grid import (
    ScalarField,
    read_csv,
    read_vector_csv,
    write_csv,
    write_table,
    write_vector_csv,
)
from .nodal import extract_nodal, frozen_values, nodal_length, normals_along, sign_measures
from .oracles import harmonic_inversion_exact, transmission_1d
from .solver import picard_solve
from .transforms import TransformFields, phi_freeze, w_transform

log = logging.getLogger("brokenpde")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NOCONV, EXIT_ACCEPT = 0, 1, 2, 3, 4


class _NotConverged(Exception):
    pass


def _point(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(c) for c in text.split(","))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from err


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_digest(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        if p is not None:
            h.update(Path(p).read_bytes())
    return h.hexdigest()


def _solve(cfg: ExperimentConfig) -> ScalarField:
    rep = picard_solve(cfg.problem())
    if not rep.converged:
        raise _NotConverged(f"Picard iteration did not converge after {rep.picard_iterations} iterations")
    return rep.u


def _field_for(args, cfg: ExperimentConfig | None) -> ScalarField:
    if getattr(args, "input", None):
        return read_csv(args.input)
    if cfg is None:
        raise ConfigError("need --in or --config")
    return _solve(cfg)


# --------------------------------------------------------------------------
# subcommands; each returns (exit code, config digest)


def cmd_solve(args, out: Path):
    cfg = load_config(args.config)
    rep = picard_solve(cfg.problem())
    write_csv(rep.u, out / "u.csv")
    _dump_json(rep.to_dict(), out / "report.json")
    if not rep.converged:
        print(f"error: Picard iteration did not converge ({rep.picard_iterations} iterations)", file=sys.stderr)
        return EXIT_NOCONV, cfg.digest()
    return EXIT_OK, cfg.digest()


def cmd_transform(args, out: Path):
    cfg = load_config(args.config)
    model = cfg.model()
    u = _field_for(args, cfg)
    z = args.z if args.z is not None else cfg.analysis.z
    if args.kind == "freeze":
        write_csv(phi_freeze(u, z, model), out / "v.csv")
    elif args.kind == "phi_s":
        if model.s == 0:
            raise WrongRegime("phi_s needs s > 0")
        write_csv(u.with_values(frozen_values(model, z, u.values)), out / "v.csv")
    else:
        tf = w_transform(u, model)
        write_csv(tf.v, out / "v.csv")
        write_vector_csv(tf.b_vec, out / "bvec.csv")
        write_csv(tf.c, out / "c.csv")
        _dump_json({"form": tf.form}, out / "transform.json")
    return EXIT_OK, cfg.digest()


def cmd_nodal(args, out: Path):
    cfg = load_config(args.config)
    model = cfg.model()
    u = _field_for(args, cfg)
    ns = extract_nodal(u)
    r_fit = args.r_fit if args.r_fit is not None else 8 * u.grid.h
    radius = cfg.analysis.ball_radius
    if u.grid.dim == 2:
        write_table(out / "segments.csv", ["x1", "y1", "x2", "y2"],
                    (tuple(float(c) for c in seg.ravel()) for seg in ns.segments))
    inner = [p for p in ns.sample_points if u.grid.ball_inside(p, r_fit)]
    normals = [s for s in normals_along(u, model, inner, r_fit) if s is not None] if inner else []
    header = ["x", "y", "nx", "ny", "delta"] if u.grid.dim == 2 else ["x", "nx", "delta"]
    write_table(out / "normals.csv", header,
                ((*map(float, s.z), *map(float, s.nu), float(s.delta)) for s in normals))
    pos, neg = sign_measures(u, (0.0,) * u.grid.dim, 1.0)
    measures = {
        "nodal_length": nodal_length(ns, (0.0,) * u.grid.dim, radius),
        "ball_radius": radius,
        "positive_measure": pos,
        "negative_measure": neg,
        "sample_points": len(ns.sample_points),
        "normals": len(normals),
        "degenerate_points": len(inner) - len(normals),
    }
    _dump_json(measures, out / "measures.json")
    return EXIT_OK, _file_digest(args.config, args.input)


def cmd_order(args, out: Path):
    u = read_csv(args.input)
    rows = []
    points = [np.asarray(args.z)] if args.z is not None else list(extract_nodal(u).sample_points)
    # default: smallest radius exactly 2h
    r_max = args.r_max if args.r_max is not None else 2 * u.grid.h * 2 ** (args.levels - 1)
    for z in points:
        if not u.grid.ball_inside(z, r_max):
            continue
        est = vanishing_order(u, z, r_max, args.levels)
        label, _ = classify_order(est)
        rows.append((*map(float, est.z), est.d_hat, est.nearest_integer_gap, label))
    header = ["x", "y", "d_hat", "gap", "label"] if u.grid.dim == 2 else ["x", "d_hat", "gap", "label"]
    write_table(out / "orders.csv", header, rows)
    return EXIT_OK, _file_digest(args.input)


def cmd_frequency(args, out: Path):
    w = read_csv(args.input)
    u = read_csv(args.u) if args.u else None
    tf = None
    if args.bvec or args.c:
        if not (args.bvec and args.c):
            raise ConfigError("--bvec and --c must be given together")
        form = "u" if u is not None and args.form == "u" else "w"
        tf = TransformFields(w, b_vec=read_vector_csv(args.bvec), c=read_csv(args.c), form=form)
    radii = np.linspace(args.rmin, args.rmax, args.steps)
    prof = frequency_profile(w, u, tf, args.z, radii, workers=args.threads)
    write_table(out / "frequency.csv", ["r", "H", "I", "N", "doubling"], prof.rows())
    _dump_json({str(k): v for k, v in prof.flags.items()}, out / "flags.json")
    return EXIT_OK, _file_digest(args.input, args.u, args.bvec, args.c)


def cmd_oracle_compare(args, out: Path):
    cfg = load_config(args.config)
    model = cfg.model()
    grid = cfg.grid_spec()
    rep = picard_solve(cfg.problem())
    if not rep.converged:
        raise _NotConverged("Picard iteration did not converge")
    u = rep.u
    result = {"n": grid.n, "h": grid.h}
    if grid.dim == 1:
        consts = model.constant_phases()
        if consts is None:
            raise ConfigError("oracle-compare needs constant phase coefficients")
        lo, hi = grid.bounds[0]
        gl, gr = (float(cfg.problem().boundary(x)) for x in (lo, hi))
        oracle = transmission_1d(consts[0], consts[1], gl, gr, lo, hi)
        ref = oracle(grid.axis(0))
        roots = extract_nodal(u).sample_points[:, 0]
        result["interface_offset"] = float(np.min(np.abs(roots - oracle.metadata["interface"])))
    else:
        try:
            ref = harmonic_inversion_exact(model, cfg.boundary, grid).metadata["nodal"].values
        except ValueError as err:
            raise ConfigError(str(err)) from err
    diff = u.values - ref
    result["sup_error"] = float(np.max(np.abs(diff)))
    result["l2_error"] = float(np.sqrt(np.sum(diff**2) * grid.h**grid.dim))
    _dump_json(result, out / "error.json")
    return EXIT_OK, cfg.digest()


def cmd_verify(args, out: Path):
    results = run_suite(args.suite, ctx=Context(args.seed, args.threads))
    for r in results:
        print(r.line())
    passed = all(r.passed for r in results)
    _dump_json({"suite": args.suite, "seed": args.seed, "passed": passed,
                "criteria": [r.to_dict() for r in results]}, out / "report.json")
    digest = hashlib.sha256(f"{args.suite}:{args.seed}".encode()).hexdigest()
    return (EXIT_OK if passed else EXIT_ACCEPT), digest


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brokenpde", description="Broken elliptic PDE laboratory.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=42, help="seed for randomized sweeps")
    p.add_argument("--threads", type=int, default=1, help="maximum worker count")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, out=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            sp.add_argument("--config", required=True, help="YAML experiment config")
        if out:
            sp.add_argument("--out", default=".", help="output directory")
        sp.set_defaults(func=fn)
        return sp

    add("solve", cmd_solve, "solve the broken problem")
    sp = add("transform", cmd_transform, "write a transformed field")
    sp.add_argument("--kind", choices=("freeze", "w", "phi_s"), default="freeze")
    sp.add_argument("--z", type=_point, default=None)
    sp.add_argument("--in", dest="input", default=None, help="u.csv (solved from the config if omitted)")
    sp = add("nodal", cmd_nodal, "extract the nodal set, normals and measures")
    sp.add_argument("--in", dest="input", default=None)
    sp.add_argument("--r-fit", type=float, default=None)
    sp = add("order", cmd_order, "vanishing orders", config=False)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--z", type=_point, default=None, help="single point (default: every nodal point)")
    sp.add_argument("--r-max", type=float, default=None)
    sp.add_argument("--levels", type=int, default=4)
    sp = add("frequency", cmd_frequency, "frequency profile", config=False)
    sp.add_argument("--in", dest="input", required=True, help="w.csv")
    sp.add_argument("--u", default=None)
    sp.add_argument("--bvec", default=None)
    sp.add_argument("--c", default=None)
    sp.add_argument("--form", choices=("w", "u"), default="w")
    sp.add_argument("--z", type=_point, default=(0.0, 0.0))
    sp.add_argument("--rmin", type=float, default=0.1)
    sp.add_argument("--rmax", type=float, default=0.4)
    sp.add_argument("--steps", type=int, default=7)
    add("oracle-compare", cmd_oracle_compare, "solver against the exact oracle")
    sp = add("verify", cmd_verify, "run the acceptance suite", config=False)
    sp.add_argument("--suite", choices=sorted(SUITES), default="all")
    return p


def _configure_logging():
    level = os.environ.get("BROKENPDE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    out = Path(getattr(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    digest = None
    try:
        code, digest = args.func(args, out)
    except (ConfigError, ExprError, WrongRegime, RadiiTooSmall, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        code = EXIT_CONFIG
    except (_NotConverged, NoConvergence) as err:
        print(f"error: {err}", file=sys.stderr)
        code = EXIT_NOCONV
    except (BrokenPDEError, ValueError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        code = EXIT_FAIL
    _dump_json({
        "command": args.command,
        "config_hash": digest,
        "version": __version__,
        "wall_time": time.perf_counter() - start,
        "seed": args.seed,
        "threads": args.threads,
        "exit_code": code,
    }, out / "manifest.json")
    return code


def main() -> None:
    sys.exit(run())
