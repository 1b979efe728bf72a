"""P1 finite-element matrices and load vectors.

Matrices are returned as ``scipy.sparse.csr_matrix`` with sorted indices.
The operator matrix follows the row/column convention
``a[i, j] = a(psi_j, psi_i)`` (row = test function, column = trial function)
for the bilinear form ``a(y, z) = (A grad y, grad z) + (b . grad y, z) + (a0 y, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import AssemblyError
from .quadrature import GAUSS7, QuadRule

Field = Callable[[np.ndarray], np.ndarray]


def _identity_tensor(x):
    out = np.zeros(x.shape[:-1] + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    return out


def _zero_vector(x):
    return np.zeros(x.shape)


def _zero_scalar(x):
    return np.zeros(x.shape[:-1])


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficient fields of the elliptic operator.

    Every field is vectorised: it receives points of shape ``(..., 2)`` and
    returns ``(..., 2, 2)`` for ``A``, ``(..., 2)`` for ``b`` and ``(...)``
    for ``a0``.
    """

    A: Field = _identity_tensor
    b: Field = _zero_vector
    a0: Field = _zero_scalar
    ellipticity: float = 1.0
    singular_corner: Optional[tuple] = None

    def check(self, points: np.ndarray, rng=None, tol: float = 1e-12) -> None:
        """Spot-check symmetry and ellipticity of ``A`` and the sign of ``a0``."""
        rng = np.random.default_rng(0) if rng is None else rng
        A = np.asarray(self.A(points))
        if np.max(np.abs(A - np.swapaxes(A, -1, -2))) > tol * max(1.0, np.max(np.abs(A))):
            raise ValueError("A(x) is not symmetric")
        xi = rng.standard_normal(points.shape)
        quad = np.einsum("...i,...ij,...j->...", xi, A, xi)
        if np.any(quad < self.ellipticity * np.einsum("...i,...i->...", xi, xi) * (1 - tol)):
            raise ValueError("A(x) violates the declared ellipticity constant")
        if np.any(np.asarray(self.a0(points)) < 0):
            raise ValueError("a0(x) must be nonnegative")


LAPLACE = CoefficientSet()


def element_geometry(coords: np.ndarray, tris: np.ndarray):
    """Areas ``(T,)`` and barycentric gradients ``(T, 3, 2)`` of each element."""
    p = coords[tris]
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    area = 0.5 * (e2[:, 0] * (-e1[:, 1]) - e2[:, 1] * (-e1[:, 0]))
    # grad lambda_k = rot90(edge opposite k) / (2 area), rot90(x, y) = (-y, x)
    edges = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    return area, grads


def _to_csr(tris, local, n):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh) -> sp.csr_matrix:
    area, _ = element_geometry(mesh.coords, mesh.tris)
    local = area[:, None, None] * _MASS_REF[None]
    return _to_csr(mesh.tris, local, mesh.n_nodes)


def assemble_stiffness(mesh) -> sp.csr_matrix:
    area, g = element_geometry(mesh.coords, mesh.tris)
    local = area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _to_csr(mesh.tris, local, mesh.n_nodes)


def _evaluate(field, x, shape_tail, name):
    try:
        with np.errstate(all="ignore"):
            val = np.asarray(field(x), dtype=np.float64)
    except Exception as exc:  # noqa: BLE001
        raise AssemblyError(f"evaluation of {name} failed: {exc}") from exc
    val = np.broadcast_to(val, x.shape[:-1] + shape_tail)
    bad = ~np.isfinite(val).reshape(val.shape[0], -1).all(axis=1)
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"{name} is not finite on element {t}", element=t)
    return val


def assemble_operator(mesh, coeffs: CoefficientSet, quad: QuadRule = GAUSS7) -> sp.csr_matrix:
    """Non-symmetric matrix of the full bilinear form, integrated with ``quad``."""
    area, g = element_geometry(mesh.coords, mesh.tris)
    x = quad.map_points(mesh.coords, mesh.tris)
    A = _evaluate(coeffs.A, x, (2, 2), "A")
    b = _evaluate(coeffs.b, x, (2,), "b")
    a0 = _evaluate(coeffs.a0, x, (), "a0")
    wa = quad.weights[None, :] * area[:, None]        # (T, q)
    lam = quad.points                                 # (q, 3)
    # gradients are constant per element, so A and b are integrated first
    A_int = np.einsum("tq,tqde->tde", wa, A)
    diff = np.einsum("tid,tde,tje->tij", g, A_int, g)
    b_int = np.einsum("tq,qi,tqd->tid", wa, lam, b)
    conv = np.einsum("tid,tjd->tij", b_int, g)
    lamlam = np.einsum("qi,qj->qij", lam, lam).reshape(len(lam), 9)
    react = ((wa * a0) @ lamlam).reshape(-1, 3, 3)
    return _to_csr(mesh.tris, diff + conv + react, mesh.n_nodes)


def assemble_load(mesh, f: Field, quad: QuadRule = GAUSS7) -> np.ndarray:
    """Vector of ``(f, psi_k)`` computed with ``quad``."""
    area, _ = element_geometry(mesh.coords, mesh.tris)
    x = quad.map_points(mesh.coords, mesh.tris)
    fx = _evaluate(f, x, (), "f")
    local = np.einsum("tq,tq,qi->ti", quad.weights[None, :] * area[:, None], fx, quad.points)
    return np.bincount(mesh.tris.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def export_coo(matrix, path) -> None:
    """Write ``i j value`` triplets (0-based, 17 significant digits)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="ascii") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
