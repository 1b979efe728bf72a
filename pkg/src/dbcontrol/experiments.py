"""Convergence studies over a mesh hierarchy and their tabular output.

A run builds the finest requested mesh once and walks its hierarchy, so
consecutive levels are nested and solutions can be prolongated.  Rows carry
``j, dim(Y_h), J_h, n_j, e_j, s_j`` where ``n_j = dim Y_h + |B| + |I|``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

from .control import (DEFAULT_PCG_TOL, build_context, solve_kkt_monolithic,
                      solve_reduced)
from .error_analysis import consecutive_error, eoc, exact_error
from .exceptions import (DBControlError, FactorizationError, NumericalBreakdownError,
                         ParameterError, SolverError)
from .problems import KAPPA, lshape_mesh, setup_example1, setup_example2

__all__ = [
    "ExperimentConfig", "ConvergenceRow", "RunAborted", "run_convergence", "emit_table",
    "parse_table", "parse_levels", "read_config_file", "config_from_mapping",
    "richardson_limit", "setup_example1", "setup_example2",
]

log = logging.getLogger(__name__)

MAX_LEVEL = 12
SOLVERS = ("reduced", "monolithic", "both")
FORMATS = ("csv", "markdown")
#: |J_reduced - J_monolithic| allowed when ``solver="both"``
CROSS_CHECK_TOL = 1e-9


def parse_levels(text) -> tuple:
    """``"A..B"`` or ``"A"`` to an inclusive ``(A, B)`` pair."""
    if isinstance(text, (tuple, list)):
        lo, hi = text
    else:
        m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", str(text))
        if not m:
            raise ParameterError(f"levels must look like 'A..B', got {text!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
    return int(lo), int(hi)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one convergence study.

    ``example`` is 1, 2 or ``"custom"``; a custom study supplies
    ``problem_factory(mesh) -> (ControlProblem, ExactTriple or None)``.
    ``error_mode=None`` picks ``"exact"`` for example 1 and
    ``"consecutive"`` otherwise; example 2 has no exact solution and always
    uses consecutive differences.
    """

    example: object = 1
    mu: float = 0.5
    levels: tuple = (1, 7)
    kappa: float = KAPPA
    pcg_tol: float = DEFAULT_PCG_TOL
    solver: str = "reduced"
    output_format: str = "csv"
    output_path: Optional[str] = None
    error_mode: Optional[str] = None
    problem_factory: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        ex = self.example
        if isinstance(ex, str) and ex.isdigit():
            ex = int(ex)
        if ex not in (1, 2, "custom"):
            raise ParameterError(f"example must be 1, 2 or 'custom', got {self.example!r}")
        object.__setattr__(self, "example", ex)
        object.__setattr__(self, "levels", parse_levels(self.levels))
        lo, hi = self.levels
        if not (1 <= lo <= hi <= MAX_LEVEL):
            raise ParameterError(f"levels must satisfy 1 <= A <= B <= {MAX_LEVEL}, got {lo}..{hi}")
        if not (0.0 < self.mu <= 1.0):
            raise ParameterError(f"mu must lie in (0, 1], got {self.mu}")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if not (self.pcg_tol > 0):
            raise ParameterError(f"pcg_tol must be positive, got {self.pcg_tol}")
        if self.solver not in SOLVERS:
            raise ParameterError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        fmt = "markdown" if self.output_format == "md" else self.output_format
        if fmt not in FORMATS:
            raise ParameterError(f"format must be csv or markdown, got {self.output_format!r}")
        object.__setattr__(self, "output_format", fmt)
        mode = self.error_mode
        if mode is None:
            mode = "exact" if ex == 1 else "consecutive"
        if mode not in ("exact", "consecutive"):
            raise ParameterError(f"error_mode must be exact or consecutive, got {mode!r}")
        if ex == 2 and mode == "exact":
            raise ParameterError("example 2 has no exact solution; use error_mode=consecutive")
        if ex == "custom" and self.problem_factory is None:
            raise ParameterError("a custom example needs a problem_factory")
        object.__setattr__(self, "error_mode", mode)

    @property
    def level_range(self) -> range:
        return range(self.levels[0], self.levels[1] + 1)


@dataclass(frozen=True)
class ConvergenceRow:
    j: int
    dimYh: int
    Jh: float
    nj: int
    ej: Optional[float] = None
    sj: Optional[float] = None
    #: not part of the table
    iterations: Optional[int] = field(default=None, compare=False)
    Jh_monolithic: Optional[float] = field(default=None, compare=False)


class RunAborted(SolverError):
    """A level failed; ``rows`` holds every row completed before the failure."""

    def __init__(self, message, rows, level):
        super().__init__(message)
        self.rows = rows
        self.level = level


def _problem_for(config: ExperimentConfig, mesh):
    if config.example == 1:
        return setup_example1(config.mu, kappa=config.kappa, mesh=mesh)
    if config.example == 2:
        return setup_example2(config.mu, kappa=config.kappa, mesh=mesh), None
    return config.problem_factory(mesh)


def _solve_level(config, ctx):
    if config.solver == "monolithic":
        return solve_kkt_monolithic(ctx), None
    sol = solve_reduced(ctx, tol=config.pcg_tol)
    if config.solver == "reduced":
        return sol, None
    mono = solve_kkt_monolithic(ctx)
    if abs(mono.objective - sol.objective) > CROSS_CHECK_TOL:
        raise SolverError(f"reduced and monolithic objectives differ by "
                          f"{abs(mono.objective - sol.objective):.3e}")
    return sol, mono.objective


def run_convergence(config: ExperimentConfig, on_row: Optional[Callable] = None) -> list:
    """Solve on every requested level and return the table rows in level order.

    In consecutive mode ``e_j`` compares levels ``j`` and ``j + 1``, so the
    last row has no error.  ``on_row`` is called with each finished row.
    A failure at some level raises :class:`RunAborted` carrying the rows
    computed so far.
    """
    lo, hi = config.levels
    finest = lshape_mesh(config.mu, hi)
    meshes = finest.hierarchy()
    rows = []
    pending = None   # consecutive mode: (level, mesh, solution, J_h, dims, iterations, J_mono)

    def emit(row):
        rows.append(row)
        if on_row is not None:
            on_row(row)

    def prev_error():
        return rows[-1].ej if rows else None

    for j in config.level_range:
        mesh = meshes[j]
        try:
            problem, exact = _problem_for(config, mesh)
            ctx = build_context(problem)
            sol, j_mono = _solve_level(config, ctx)
            it = sol.pcg.iterations if sol.pcg is not None else None
            log.info("level %d: %d nodes, J_h = %.10g, %s PCG iterations", j, mesh.n_nodes,
                     sol.objective, it)
            if config.error_mode == "exact":
                if exact is None:
                    raise ParameterError("error_mode=exact needs an exact solution")
                e = exact_error(ctx, sol, exact)["total"]
                ep = prev_error()
                emit(ConvergenceRow(j, mesh.n_nodes, sol.objective, 2 * mesh.n_nodes, e,
                                    eoc(ep, e) if ep is not None else None, it, j_mono))
            else:
                if pending is not None:
                    pj, pmesh, psol, pit, pmono = pending
                    e = consecutive_error(pmesh, psol, ctx, sol)["total"]
                    ep = prev_error()
                    emit(ConvergenceRow(pj, pmesh.n_nodes, psol.objective, 2 * pmesh.n_nodes, e,
                                        eoc(ep, e) if ep is not None else None, pit, pmono))
                pending = (j, mesh, sol, it, j_mono)
        except (SolverError, FactorizationError, NumericalBreakdownError) as exc:
            raise RunAborted(f"level {j}: {exc}", rows, j) from exc
        del ctx
    if pending is not None:
        pj, pmesh, psol, pit, pmono = pending
        emit(ConvergenceRow(pj, pmesh.n_nodes, psol.objective, 2 * pmesh.n_nodes, None, None,
                            pit, pmono))
    return rows


def richardson_limit(rows, order: float = 2.0) -> Optional[float]:
    """Extrapolated ``J_h`` limit from the last two rows, assuming
    ``J - J_h = O(h^order)``."""
    if len(rows) < 2:
        return None
    a, b = rows[-2].Jh, rows[-1].Jh
    f = 2.0 ** order
    return (f * b - a) / (f - 1.0)


COLUMNS = ("j", "dimYh", "Jh", "nj", "ej", "sj")


def _cells(row: ConvergenceRow) -> list:
    return [
        str(row.j),
        str(row.dimYh),
        f"{row.Jh:.8g}",
        str(row.nj),
        "" if row.ej is None else f"{row.ej:.2e}",
        "" if row.sj is None else f"{row.sj:#.3g}",
    ]


def format_table(rows, fmt: str = "csv") -> str:
    if not rows:
        raise ParameterError("cannot emit an empty table")
    fmt = "markdown" if fmt == "md" else fmt
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in rows:
            writer.writerow(_cells(r))
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(COLUMNS) + " |", "|" + "---:|" * len(COLUMNS)]
        for r in rows:
            lines.append("| " + " | ".join(c if c else " " for c in _cells(r)) + " |")
        return "\n".join(lines) + "\n"
    raise ParameterError(f"unknown table format {fmt!r}")


def emit_table(rows, fmt: str = "csv", path=None) -> str:
    """Render ``rows`` and write them to ``path`` when given; returns the text."""
    text = format_table(rows, fmt)
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write table to {path}: {exc}") from exc
    return text


def _row_from_cells(cells) -> ConvergenceRow:
    cells = [c.strip() for c in cells]
    if len(cells) != len(COLUMNS):
        raise ParameterError(f"expected {len(COLUMNS)} columns, got {len(cells)}")
    opt = [float(c) if c else None for c in cells[4:]]
    return ConvergenceRow(int(cells[0]), int(cells[1]), float(cells[2]), int(cells[3]), *opt)


def parse_table(text: str) -> list:
    """Inverse of :func:`format_table` for either format."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("empty table")
    if lines[0].lstrip().startswith("|"):
        body = [ln for ln in lines[1:] if not re.fullmatch(r"\s*\|[\s\-:|]*\|\s*", ln)]
        return [_row_from_cells(ln.strip().strip("|").split("|")) for ln in body
                if ln.lstrip().startswith("|")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(h.strip() for h in header) != COLUMNS:
        raise ParameterError(f"unexpected header {header}")
    return [_row_from_cells(r) for r in reader]


# key=value configuration files -------------------------------------------------

_CONFIG_KEYS = {
    "example": str,
    "mu": float,
    "levels": str,
    "kappa": float,
    "pcg_tol": float,
    "solver": str,
    "format": str,
    "out": str,
    "error_mode": str,
}

_FIELD_OF_KEY = {"format": "output_format", "out": "output_path"}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"{path}:{n}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ParameterError(f"{path}:{n}: bad value for {key}: {value!r}") from exc
    return values


def config_from_mapping(*layers: dict) -> ExperimentConfig:
    """Build a config from key=value style mappings; later layers win and
    ``None`` values are ignored."""
    merged = {}
    for layer in layers:
        for k, v in layer.items():
            if v is not None:
                merged[_FIELD_OF_KEY.get(k, k)] = v
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(merged) - names
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**merged)
    except DBControlError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParameterError(str(exc)) from exc


def with_levels(config: ExperimentConfig, lo: int, hi: int) -> ExperimentConfig:
    return replace(config, levels=(lo, hi))
