"""The two L-shape test problems.

Example 1 has a manufactured solution: the optimal state is the corner
singular function ``r^(2/3) sin(2 theta/3)``, the adjoint a smooth bump that
vanishes to second order on the boundary, and the optimal control equals
``u_d``.  Example 2 uses coefficients that blow up at the re-entrant corner
and make the operator non-coercive; no exact solution is known.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import CoefficientSet
from .control import ControlProblem
from .geometry import make_lshape
from .mesh import TriMesh, build_mesh

KAPPA = 0.1
EX2_DELTA = 6.0
EX2_ALPHA = -1.25


def polar_angle(x: np.ndarray) -> np.ndarray:
    """Angle in ``[0, 2 pi)`` from the positive x1-axis; the L-shape only
    uses ``[0, 3 pi / 2]``."""
    th = np.arctan2(x[..., 1], x[..., 0])
    return np.where(th < 0.0, th + 2.0 * np.pi, th)


def corner_singular(x):
    r = np.hypot(x[..., 0], x[..., 1])
    return r ** (2.0 / 3.0) * np.sin(2.0 * polar_angle(x) / 3.0)


def corner_singular_grad(x):
    r = np.hypot(x[..., 0], x[..., 1])
    th = polar_angle(x)
    with np.errstate(divide="ignore"):
        s = np.where(r > 0, (2.0 / 3.0) * r ** (-1.0 / 3.0), 0.0)
    return np.stack([-s * np.sin(th / 3.0), s * np.cos(th / 3.0)], axis=-1)


def _p(t):
    return t ** 2 * (1.0 - t ** 2) ** 2


def _dp(t):
    return 2.0 * t - 8.0 * t ** 3 + 6.0 * t ** 5


def _ddp(t):
    return 2.0 - 24.0 * t ** 2 + 30.0 * t ** 4


def bump(x):
    return _p(x[..., 0]) * _p(x[..., 1])


def bump_grad(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([_dp(x1) * _p(x2), _p(x1) * _dp(x2)], axis=-1)


def bump_laplacian(x):
    x1, x2 = x[..., 0], x[..., 1]
    return _ddp(x1) * _p(x2) + _p(x1) * _ddp(x2)


def ex1_b(x):
    return -2.0 * np.asarray(x, dtype=np.float64)


def ex1_a0(x):
    return np.full(np.shape(x)[:-1], 4.0 / 3.0)


def ex1_adjoint_operator_of_bump(x):
    """``-lap(phi) - div(b phi) + a0 phi`` for the Example 1 coefficients."""
    g = bump_grad(x)
    phi = bump(x)
    # div(b) = -4 for b = -2x
    div_b_phi = -4.0 * phi - 2.0 * (x[..., 0] * g[..., 0] + x[..., 1] * g[..., 1])
    return -bump_laplacian(x) - div_b_phi + (4.0 / 3.0) * phi


def ex1_yd(x):
    return corner_singular(x) - ex1_adjoint_operator_of_bump(x)


@dataclass(frozen=True)
class ExactTriple:
    """Closed-form optimal state, adjoint and control (value, gradient pairs)."""

    y: tuple
    phi: tuple
    u_trace: Callable
    harmonic_of_u: tuple


EX1_EXACT = ExactTriple(
    y=(corner_singular, corner_singular_grad),
    phi=(bump, bump_grad),
    u_trace=corner_singular,
    # the exact state is harmonic, so it is its own harmonic extension
    harmonic_of_u=(corner_singular, corner_singular_grad),
)

EX1_COEFFS = CoefficientSet(b=ex1_b, a0=ex1_a0)


def _radius_power(x):
    r = np.hypot(x[..., 0], x[..., 1])
    return r ** EX2_ALPHA


def ex2_b(x):
    return EX2_DELTA * _radius_power(x)[..., None] * np.asarray(x, dtype=np.float64)


def ex2_a0(x):
    return _radius_power(x)


EX2_COEFFS = CoefficientSet(b=ex2_b, a0=ex2_a0, singular_corner=(0.0, 0.0))


def _one(x):
    return np.ones(np.shape(x)[:-1])


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def lshape_mesh(mu: float, level: int, *, kernel=None) -> TriMesh:
    return build_mesh(make_lshape(mu), level, kernel=kernel)


def setup_example1(mu: float = 0.5, level: int = 1, kappa: float = KAPPA, mesh=None):
    """Example 1 on the graded L-shape mesh; returns ``(problem, exact)``."""
    mesh = lshape_mesh(mu, level) if mesh is None else mesh
    prob = ControlProblem(mesh=mesh, coeffs=EX1_COEFFS, y_d=ex1_yd, u_d=corner_singular, kappa=kappa)
    return prob, EX1_EXACT


def setup_example2(mu: float = 0.5, level: int = 1, kappa: float = KAPPA, mesh=None) -> ControlProblem:
    """Example 2: ``b = 6 r^-1.25 x``, ``a0 = r^-1.25``, ``y_d = 1``, ``u_d = 0``."""
    mesh = lshape_mesh(mu, level) if mesh is None else mesh
    return ControlProblem(mesh=mesh, coeffs=EX2_COEFFS, y_d=_one, u_d=_zero, kappa=kappa)
