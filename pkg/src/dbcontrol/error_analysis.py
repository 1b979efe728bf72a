"""Error norms and experimental orders of convergence."""

from __future__ import annotations

import math

import numpy as np

from .assembly import element_geometry
from .control import harmonic_extend
from .exceptions import AssemblyError, ParameterError
from .mesh import prolong_nodal
from .quadrature import GAUSS7


def _eval_exact(field, x, name):
    with np.errstate(all="ignore"):
        val = np.asarray(field(x), dtype=np.float64)
    bad = ~np.isfinite(val).reshape(val.shape[0], -1).all(axis=1)
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"exact {name} not finite on element {t}", element=t)
    return val


def h1_error(mesh, fe, exact_val=None, exact_grad=None, *, quad=GAUSS7, seminorm=False) -> float:
    """H1 norm of ``fe - exact`` with ``quad`` on every element.

    ``exact_val``/``exact_grad`` default to zero; ``seminorm=True`` drops
    the L2 part.
    """
    fe = np.asarray(fe, dtype=np.float64)
    area, g = element_geometry(mesh.coords, mesh.tris)
    x = quad.map_points(mesh.coords, mesh.tris)
    wa = quad.weights[None, :] * area[:, None]
    local = fe[mesh.tris]
    grad_h = np.einsum("ti,tid->td", local, g)[:, None, :]
    dg = grad_h - (_eval_exact(exact_grad, x, "gradient") if exact_grad is not None else 0.0)
    total = np.sum(wa * np.sum(dg ** 2, axis=-1))
    if not seminorm:
        val_h = local @ quad.points.T
        dv = val_h - (_eval_exact(exact_val, x, "value") if exact_val is not None else 0.0)
        total += np.sum(wa * dv ** 2)
    return math.sqrt(total)


def discrete_h1_norm(M, K, v, seminorm=False) -> float:
    """Exact H1 norm of a P1 function from its nodal vector."""
    val = v @ (K @ v)
    if not seminorm:
        val += v @ (M @ v)
    return math.sqrt(max(val, 0.0))


def h12_control_error(ctx, u_h, exact_harmonic) -> float:
    """Control error measured as ``|H_h u_h - H u|_{H1}``."""
    val, grad = exact_harmonic
    return h1_error(ctx.mesh, harmonic_extend(ctx, u_h), val, grad)


def exact_error(ctx, sol, exact) -> dict:
    """Composite error against a known solution; keys ``y``, ``u``, ``phi``, ``total``."""
    mesh = ctx.mesh
    ey = h1_error(mesh, sol.y, *exact.y)
    eu = h12_control_error(ctx, sol.u, exact.harmonic_of_u)
    ephi = h1_error(mesh, sol.phi, *exact.phi, seminorm=True)
    return {"y": ey, "u": eu, "phi": ephi, "total": ey + eu + ephi}


def consecutive_error(coarse_mesh, sol_coarse, ctx_fine, sol_fine) -> dict:
    """Composite difference between solutions on consecutive nested meshes.

    State and adjoint are prolongated to the fine mesh; the control
    difference is measured through the fine discrete harmonic extension.
    """
    fine = ctx_fine.mesh
    M, K = ctx_fine.M, ctx_fine.K
    dy = prolong_nodal(coarse_mesh, fine, sol_coarse.y) - sol_fine.y
    dphi = prolong_nodal(coarse_mesh, fine, sol_coarse.phi) - sol_fine.phi
    du = dy[ctx_fine.B]  # y_B = u on both levels
    dz = harmonic_extend(ctx_fine, du)
    ey = discrete_h1_norm(M, K, dy)
    eu = discrete_h1_norm(M, K, dz)
    ephi = discrete_h1_norm(M, K, dphi, seminorm=True)
    return {"y": ey, "u": eu, "phi": ephi, "total": ey + eu + ephi}


def eoc(e_prev: float, e_curr: float) -> float:
    """``-(log2 e_curr - log2 e_prev)`` for mesh sizes halving per level."""
    if not (e_prev > 0 and e_curr > 0):
        raise ParameterError(f"errors must be positive, got {e_prev!r}, {e_curr!r}")
    # log of the ratio avoids cancellation between two nearby logarithms
    return math.log2(e_prev / e_curr)


def eoc_sequence(errors) -> list:
    """EOC for each entry after the first; ``None`` in front."""
    return [None] + [eoc(a, b) for a, b in zip(errors[:-1], errors[1:])]
