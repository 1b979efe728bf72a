"""Discrete reduced optimality system for energy-regularized Dirichlet control.

With ``I``/``B`` the interior/boundary node sets, a control is a vector ``u``
over ``B``.  For a given ``u``

* state:      ``A_II y_I = -A_IB u``,  ``y_B = u``
* adjoint:    ``A_II^T phi_I = M_II y_I + M_IB u - ytilde_I``
* harmonic:   ``K_II z_I = -K_IB u``,  ``z_B = u``

and the discrete objective is a quadratic ``1/2 u^T T u - w^T u + c`` with
``T = S^T M S + kappa H^T K H``.  ``T`` is never formed: ``apply_T`` costs one
solve with each of ``A_II``, ``A_II^T`` and ``K_II``.  The first-order system
``T u = w`` is solved by PCG preconditioned with ``(A_BB A_BB^T)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (CoefficientSet, assemble_load, assemble_mass, assemble_operator,
                       assemble_stiffness, element_geometry)
from .exceptions import FactorizationError, ParameterError, SolverError
from .mesh import TriMesh
from .quadrature import GAUSS7
from .solvers import FactorizationHandle, PcgReport, extract_submatrix, factorize, pcg

DEFAULT_PCG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ControlProblem:
    mesh: TriMesh
    coeffs: CoefficientSet
    y_d: Callable[[np.ndarray], np.ndarray]
    u_d: Callable[[np.ndarray], np.ndarray]
    kappa: float = 0.1
    #: "interpolant": y_d enters through its nodal interpolant I_h y_d, both in
    #: the load vector (M I_h y_d) and in the tracking term;
    #: "pointwise": y_d is sampled at quadrature points in both places.
    tracking: str = "interpolant"

    def __post_init__(self):
        if self.tracking not in ("interpolant", "pointwise"):
            raise ParameterError(f"unknown tracking mode {self.tracking!r}")
        if not self.kappa > 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        ud = np.asarray(self.u_d(self.mesh.coords[self.mesh.boundary]), dtype=np.float64)
        if not np.all(np.isfinite(ud)):
            raise ParameterError("u_d is not finite at every boundary node")


@dataclass(eq=False)
class ReducedOperatorContext:
    """Assembled blocks, factorizations and the data-dependent vectors."""

    problem: ControlProblem
    I: np.ndarray
    B: np.ndarray
    M: sp.csr_matrix
    K: sp.csr_matrix
    A: sp.csr_matrix
    blocks: dict
    lu_A: FactorizationHandle     # A_II, also used transposed
    chol_K: FactorizationHandle   # K_II
    lu_Abb: FactorizationHandle   # A_BB, preconditioner
    ytilde: np.ndarray            # (y_d, psi_k)
    ud_B: np.ndarray              # nodal interpolant of u_d
    ztilde: np.ndarray            # discrete harmonic extension of ud_B
    phitilde_I: np.ndarray        # A_II^T phitilde_I = -ytilde_I
    w: np.ndarray
    yd_quad: np.ndarray           # y_d at quadrature points, (T, q)
    quad_weights: np.ndarray      # area-scaled weights, (T, q)

    @property
    def kappa(self) -> float:
        return self.problem.kappa

    @property
    def mesh(self) -> TriMesh:
        return self.problem.mesh

    @property
    def n_solves(self) -> int:
        return self.lu_A.n_solves + self.chol_K.n_solves + self.lu_Abb.n_solves


@dataclass(eq=False)
class ControlSolution:
    u: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    objective: float
    pcg: Optional[PcgReport]


def build_context(problem: ControlProblem) -> ReducedOperatorContext:
    mesh = problem.mesh
    if mesh.level < 1 or len(mesh.interior) == 0:
        raise ParameterError("the control solver needs a mesh with interior nodes (level >= 1)")
    I, B = mesh.interior, mesh.boundary
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)
    A = assemble_operator(mesh, problem.coeffs)

    blk = {}
    for name, mat in (("A", A), ("M", M), ("K", K)):
        for r, ri in (("I", I), ("B", B)):
            for c, ci in (("I", I), ("B", B)):
                blk[name + r + c] = extract_submatrix(mat, ri, ci)
    blk["K_B:"] = extract_submatrix(K, B, None)
    # (A^T)_BI
    blk["AtBI"] = sp.csr_matrix(blk["AIB"].T)

    lu_A = factorize(blk["AII"], "general", source="A_II")
    chol_K = factorize(blk["KII"], "spd", source="K_II")
    lu_Abb = factorize(blk["ABB"], "general", source="A_BB")

    if problem.tracking == "interpolant":
        yd_nodal = np.asarray(problem.y_d(mesh.coords), dtype=np.float64)
        ytilde = M @ yd_nodal
    else:
        yd_nodal = None
        ytilde = assemble_load(mesh, problem.y_d)
    ud_B = np.asarray(problem.u_d(mesh.coords[B]), dtype=np.float64)
    ztilde = np.empty(mesh.n_nodes)
    ztilde[B] = ud_B
    ztilde[I] = chol_K.solve(-(blk["KIB"] @ ud_B))
    phitilde_I = lu_A.solve_transpose(-ytilde[I])
    w = blk["AtBI"] @ phitilde_I + ytilde[B] + problem.kappa * (blk["K_B:"] @ ztilde)

    area, _ = element_geometry(mesh.coords, mesh.tris)
    qw = GAUSS7.weights[None, :] * area[:, None]
    if yd_nodal is None:
        xq = GAUSS7.map_points(mesh.coords, mesh.tris)
        yd_quad = np.broadcast_to(np.asarray(problem.y_d(xq), dtype=np.float64), xq.shape[:-1]).copy()
    else:
        yd_quad = yd_nodal[mesh.tris] @ GAUSS7.points.T

    # reset counters so callers can audit per-operation solve counts
    for h in (lu_A, chol_K, lu_Abb):
        h.n_solves = 0
    return ReducedOperatorContext(problem, I, B, M, K, A, blk, lu_A, chol_K, lu_Abb,
                                  ytilde, ud_B, ztilde, phitilde_I, w, yd_quad, qw)


def _full(ctx, interior, boundary):
    v = np.empty(ctx.mesh.n_nodes)
    v[ctx.I] = interior
    v[ctx.B] = boundary
    return v


def harmonic_extend(ctx: ReducedOperatorContext, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return _full(ctx, ctx.chol_K.solve(-(ctx.blocks["KIB"] @ u)), u)


def solve_state(ctx: ReducedOperatorContext, u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return _full(ctx, ctx.lu_A.solve(-(ctx.blocks["AIB"] @ u)), u)


def _adjoint_hat(ctx, y_I, u):
    b = ctx.blocks
    return ctx.lu_A.solve_transpose(b["MII"] @ y_I + b["MIB"] @ u)


def apply_T(ctx: ReducedOperatorContext, u) -> np.ndarray:
    """Matrix-free product with the reduced Hessian."""
    b = ctx.blocks
    u = np.asarray(u, dtype=np.float64)
    y_I = ctx.lu_A.solve(-(b["AIB"] @ u))
    phi_I = _adjoint_hat(ctx, y_I, u)
    z_I = ctx.chol_K.solve(-(b["KIB"] @ u))
    return (-(b["AtBI"] @ phi_I) + b["MBI"] @ y_I + b["MBB"] @ u
            + ctx.kappa * (b["KBI"] @ z_I + b["KBB"] @ u))


def gradient(ctx: ReducedOperatorContext, u) -> np.ndarray:
    """Derivative of the discrete objective w.r.t. the boundary nodal values."""
    return apply_T(ctx, u) - ctx.w


def tracking_term(ctx: ReducedOperatorContext, y) -> float:
    """``1/2 |y_h - y_d|^2_{L2}`` by quadrature (exact in interpolant mode)."""
    yq = y[ctx.mesh.tris] @ GAUSS7.points.T
    return 0.5 * float(np.sum(ctx.quad_weights * (yq - ctx.yd_quad) ** 2))


def objective(ctx: ReducedOperatorContext, u, y=None) -> float:
    u = np.asarray(u, dtype=np.float64)
    if y is None:
        y = solve_state(ctx, u)
    z = harmonic_extend(ctx, u - ctx.ud_B)
    return tracking_term(ctx, y) + 0.5 * ctx.kappa * float(z @ (ctx.K @ z))


def preconditioner(ctx: ReducedOperatorContext):
    """``r -> (A_BB A_BB^T)^{-1} r`` using the one LU of ``A_BB``."""
    def apply(r):
        return ctx.lu_Abb.solve_transpose(ctx.lu_Abb.solve(r))
    return apply


def _assemble_solution(ctx, u, report):
    y = solve_state(ctx, u)
    phi = np.zeros(ctx.mesh.n_nodes)
    phi[ctx.I] = _adjoint_hat(ctx, y[ctx.I], u) + ctx.phitilde_I
    z = harmonic_extend(ctx, u)
    return ControlSolution(u=u, y=y, phi=phi, z=z, objective=objective(ctx, u, y), pcg=report)


def solve_reduced(ctx: ReducedOperatorContext, tol: float = DEFAULT_PCG_TOL, maxit=None,
                  precondition: bool = True) -> ControlSolution:
    maxit = 10 * len(ctx.B) if maxit is None else maxit
    prec = preconditioner(ctx) if precondition else None
    u, report = pcg(lambda v: apply_T(ctx, v), ctx.w, prec, tol=tol, maxit=maxit)
    if not report.converged:
        raise SolverError(f"PCG did not converge in {report.iterations} iterations "
                          f"(relative residual {report.relative_residual:.3e})", report)
    return _assemble_solution(ctx, u, report)


def kkt_system(ctx: ReducedOperatorContext):
    """Monolithic system in ``(z_I, y_I, phi_I, u)`` and its right-hand side."""
    b = ctx.blocks
    k = ctx.kappa
    AII_T = sp.csr_matrix(b["AII"].T)
    mat = sp.bmat([
        [b["KII"], None, None, b["KIB"]],
        [None, -b["MII"], AII_T, -b["MIB"]],
        [None, b["AII"], None, b["AIB"]],
        [k * b["KBI"], b["MBI"], -b["AtBI"], b["MBB"] + k * b["KBB"]],
    ], format="csc")
    nI = len(ctx.I)
    rhs = np.concatenate([
        np.zeros(nI),
        -ctx.ytilde[ctx.I],
        np.zeros(nI),
        ctx.ytilde[ctx.B] + k * (b["K_B:"] @ ctx.ztilde),
    ])
    return mat, rhs


def solve_kkt_monolithic(ctx: ReducedOperatorContext) -> ControlSolution:
    mat, rhs = kkt_system(ctx)
    try:
        sol = spla.spsolve(mat, rhs, permc_spec="COLAMD")
    except (RuntimeError, MemoryError) as exc:
        raise FactorizationError(f"monolithic solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise FactorizationError("monolithic system is singular")
    nI = len(ctx.I)
    z_I, y_I, phi_I, u = sol[:nI], sol[nI:2 * nI], sol[2 * nI:3 * nI], sol[3 * nI:]
    y = _full(ctx, y_I, u)
    phi = _full(ctx, phi_I, np.zeros(len(ctx.B)))
    z = _full(ctx, z_I, u)
    return ControlSolution(u=u, y=y, phi=phi, z=z, objective=objective(ctx, u, y), pcg=None)
