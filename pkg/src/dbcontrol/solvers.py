"""Sparse factorizations (factor once, solve many) and preconditioned CG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import FactorizationError, NumericalBreakdownError

try:
    from cvxopt import amd as _amd, spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover - exercised only without cvxopt
    _amd = None

ALL = None


def extract_submatrix(matrix, rows=ALL, cols=ALL) -> sp.csr_matrix:
    """``matrix[rows][:, cols]`` in the order of the given index arrays.

    ``None`` selects every row (column).
    """
    m = sp.csr_matrix(matrix)
    n_rows, n_cols = m.shape
    for idx, n, what in ((rows, n_rows, "row"), (cols, n_cols, "column")):
        if idx is not None and len(idx) and (np.min(idx) < 0 or np.max(idx) >= n):
            raise IndexError(f"{what} index out of range [0, {n})")
    if rows is not None:
        m = m[np.asarray(rows)]
    if cols is not None:
        m = m[:, np.asarray(cols)]
    m = sp.csr_matrix(m)
    m.sort_indices()
    return m


def fill_reducing_order(matrix):
    """Approximate minimum degree ordering of the pattern of ``|A| + |A^T|``.

    Returns ``None`` when no AMD implementation is importable; callers then
    fall back to SuperLU's own (much slower on large meshes) MMD ordering.
    """
    if _amd is None:
        return None
    m = sp.csc_matrix(matrix)
    pattern = sp.tril(abs(m) + abs(m.T), format="coo")
    n = m.shape[0]
    rows = pattern.row.tolist() + list(range(n))
    cols = pattern.col.tolist() + list(range(n))
    # explicit unit diagonal so empty rows still appear in the pattern
    A = _cvx_spmatrix(1.0, rows, cols, (n, n))
    return np.asarray(_amd.order(A), dtype=np.int64).ravel()


def is_symmetric(matrix, rtol: float = 1e-13) -> bool:
    m = sp.csr_matrix(matrix)
    if m.shape[0] != m.shape[1]:
        return False
    scale = abs(m).max() if m.nnz else 0.0
    diff = abs(m - m.T)
    return (diff.max() if diff.nnz else 0.0) <= rtol * scale


class FactorizationHandle:
    """Reusable sparse factorization of a square matrix.

    Both kinds use a symmetric fill-reducing ordering of ``|A| + |A^T|``.
    ``kind="general"`` is an LU with threshold partial pivoting;
    ``kind="spd"`` factors a symmetric positive definite matrix without
    pivoting and rejects non-positive pivots.  ``n_solves`` counts forward+backward pairs.
    """

    def __init__(self, matrix, kind: str = "general", source=None):
        if kind not in ("general", "spd"):
            raise ValueError(f"unknown factorization kind {kind!r}")
        m = sp.csc_matrix(matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise FactorizationError(f"matrix must be square, got {m.shape}")
        self.kind = kind
        self.n = m.shape[0]
        self.source = source
        self.n_solves = 0
        self._norm_inf = spla.norm(m, np.inf) if m.nnz else 0.0
        if self.n == 0:
            self._lu = None
            return
        perm = fill_reducing_order(m)
        self._perm = perm
        if perm is not None:
            m = m[perm][:, perm].tocsc()
            permc = "NATURAL"
        else:
            permc = "MMD_AT_PLUS_A"
        # threshold 0 keeps the symmetric pivot order (spd); 0.1 allows row
        # pivoting where a diagonal entry is small relative to its column
        thresh = 0.0 if kind == "spd" else 0.1
        try:
            if kind == "spd" and not is_symmetric(m):
                raise FactorizationError("spd factorization requested for a non-symmetric matrix")
            self._lu = spla.splu(m, permc_spec=permc, diag_pivot_thresh=thresh,
                                 options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise FactorizationError(f"factorization failed: {exc}") from exc
        if kind == "spd":
            piv = self._lu.U.diagonal()
            if not np.array_equal(self._lu.perm_r, self._lu.perm_c) or np.any(piv <= 0):
                raise FactorizationError("matrix is not positive definite (non-positive pivot)")

    def _apply(self, rhs, trans):
        self.n_solves += 1
        rhs = np.asarray(rhs, dtype=np.float64)
        if self.n == 0:
            return rhs.copy()
        if self._perm is None:
            return self._lu.solve(rhs, trans=trans)
        y = self._lu.solve(rhs[self._perm], trans=trans)
        out = np.empty_like(y)
        out[self._perm] = y
        return out

    def solve(self, rhs) -> np.ndarray:
        return self._apply(rhs, "N")

    def solve_transpose(self, rhs) -> np.ndarray:
        return self._apply(rhs, "T")

    @property
    def norm_inf(self) -> float:
        return self._norm_inf


def factorize(matrix, kind: str = "general", source=None) -> FactorizationHandle:
    return FactorizationHandle(matrix, kind=kind, source=source)


def residual_within_contract(matrix, x, rhs, rtol: float = 1e-10) -> bool:
    """``|A x - rhs|_inf <= rtol (|A|_inf |x|_inf + |rhs|_inf)``."""
    m = sp.csr_matrix(matrix)
    r = m @ x - rhs
    bound = rtol * (spla.norm(m, np.inf) * np.max(np.abs(x), initial=0.0) + np.max(np.abs(rhs), initial=0.0))
    return np.max(np.abs(r), initial=0.0) <= bound


@dataclass
class PcgReport:
    iterations: int
    relative_residual: float
    converged: bool
    history: list = field(default_factory=list, repr=False)


def pcg(apply_op, rhs, apply_prec=None, tol: float = 1e-10, maxit: int = 1000,
        x0=None, callback=None):
    """Preconditioned conjugate gradients for an SPD map.

    Stops when the true residual satisfies ``|rhs - op(x)|_2 <= tol |rhs|_2``.
    Returns ``(x, PcgReport)``; ``history`` lists relative recurrence
    residuals, one per iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(rhs, dtype=np.float64)
    prec = apply_prec if apply_prec is not None else (lambda v: v.copy())
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return np.zeros_like(b), PcgReport(0, 0.0, True, [])
    r = b - apply_op(x) if x0 is not None else b.copy()
    history = []
    it = 0
    rel = np.linalg.norm(r) / bnorm
    while True:
        if rel <= tol:
            # confirm with the true residual before stopping
            r = b - apply_op(x)
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol or it >= maxit:
                break
        if it >= maxit:
            break
        z = prec(r)
        rz = float(r @ z)
        p = z
        # inner loop restarts the search direction whenever the residual is recomputed
        while it < maxit:
            q = apply_op(p)
            pq = float(p @ q)
            if not np.isfinite(pq) or not np.isfinite(rz):
                raise NumericalBreakdownError(f"non-finite value in PCG at iteration {it}")
            if pq <= 0.0:
                raise NumericalBreakdownError(f"operator not positive definite (p.Ap = {pq:.3e})")
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            it += 1
            rel = np.linalg.norm(r) / bnorm
            history.append(rel)
            if callback is not None:
                callback(x)
            if not np.isfinite(rel):
                raise NumericalBreakdownError(f"non-finite residual in PCG at iteration {it}")
            if rel <= tol:
                break
            z = prec(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
    return x, PcgReport(it, float(rel), bool(rel <= tol), history)
