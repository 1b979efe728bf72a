"""Command-line interface.

Exit codes: 0 success, 1 failed self-check, 2 configuration error,
3 solver failure (the partial table is still written).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .exceptions import DBControlError, ParameterError
from .experiments import (ExperimentConfig, RunAborted, config_from_mapping, emit_table,
                          read_config_file, richardson_limit, run_convergence)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with status 2 on usage errors, matching EXIT_CONFIG
    p = argparse.ArgumentParser(prog="dbcontrol", description="Energy-regularized Dirichlet control on graded L-shape meshes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a convergence study and print its table")
    s.add_argument("--config", help="key=value file with defaults (flags take precedence)")
    s.add_argument("--example", choices=["1", "2"])
    s.add_argument("--mu", type=float, help="grading exponent at the re-entrant corner")
    s.add_argument("--levels", help="level range A..B (default 1..7)")
    s.add_argument("--kappa", type=float)
    s.add_argument("--pcg-tol", type=float, dest="pcg_tol")
    s.add_argument("--solver", choices=["reduced", "monolithic", "both"])
    s.add_argument("--format", choices=["csv", "md", "markdown"])
    s.add_argument("--error-mode", choices=["exact", "consecutive"], dest="error_mode")
    s.add_argument("--out", help="write the table here instead of stdout")

    m = sub.add_parser("mesh", help="mesh utilities")
    msub = m.add_subparsers(dest="mesh_command", required=True)
    e = msub.add_parser("export", help="write a graded L-shape mesh in text format")
    e.add_argument("--mu", type=float, default=0.5)
    e.add_argument("--level", type=int, default=4)
    e.add_argument("--out", required=True)

    c = sub.add_parser("check", help="run the invariant self-checks")
    c.add_argument("--max-level", type=int, default=4, dest="max_level")
    return p


def _solve(args) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k) for k in ("example", "mu", "levels", "kappa", "pcg_tol",
                                           "solver", "error_mode")}
    flags["format"] = args.format
    flags["out"] = args.out
    config: ExperimentConfig = config_from_mapping(file_values, flags)
    try:
        rows = run_convergence(config)
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.rows:
            _write(exc.rows, config)
        return EXIT_SOLVER
    _write(rows, config)
    lim = richardson_limit(rows)
    if lim is not None:
        logging.getLogger("dbcontrol").info("extrapolated J = %.8f", lim)
    return EXIT_OK


def _write(rows, config):
    text = emit_table(rows, config.output_format, config.output_path)
    if config.output_path is None:
        sys.stdout.write(text)


def _mesh_export(args) -> int:
    from .geometry import make_lshape
    from .mesh import build_mesh, export_mesh

    if not 0 <= args.level <= 12:
        raise ParameterError(f"level must lie in [0, 12], got {args.level}")
    mesh = build_mesh(make_lshape(args.mu), args.level)
    export_mesh(mesh, args.out)
    print(f"wrote {mesh.n_nodes} nodes, {mesh.n_tris} triangles to {args.out}")
    return EXIT_OK


def _check(args) -> int:
    from .checks import run_checks

    if not 1 <= args.max_level <= 8:
        raise ParameterError("--max-level must lie in [1, 8]")
    results = run_checks(max_level=args.max_level)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "solve":
            return _solve(args)
        if args.command == "mesh":
            return _mesh_export(args)
        return _check(args)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DBControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
