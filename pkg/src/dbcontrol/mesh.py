"""Conforming triangulations and the graded bisection hierarchy.

Meshes are built from a structured level-0 triangulation of a rectilinear
polygon and refined by newest-vertex bisection.  Node numbering is
persistent: the nodes of level ``j`` are the first nodes of level ``j + 1``,
which makes nesting and prolongation trivial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .exceptions import HierarchyError, UnsupportedGeometryError
from .geometry import PolygonSpec, segment_distances

BOUNDARY_TOL = 1e-12


def nominal_h(level: int) -> float:
    return math.sqrt(2.0) * 2.0 ** (-level)


def edge_table(tris: np.ndarray, n_nodes: int):
    """Unique edges of a triangulation.

    Returns ``(tri_edges, edge_verts, counts)``: local edge ``k`` of triangle
    ``t`` (opposite local vertex ``k``) is global edge ``tri_edges[t, k]``;
    ``edge_verts`` holds sorted endpoint pairs ordered by ``(min, max)``;
    ``counts`` the number of incident triangles.
    """
    a = tris[:, [1, 2, 0]]
    b = tris[:, [2, 0, 1]]
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    keys = (lo * n_nodes + hi).ravel()
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    edge_verts = np.stack([uniq // n_nodes, uniq % n_nodes], axis=1)
    return inverse.reshape(-1, 3).astype(np.int64), edge_verts, counts


def signed_areas(coords: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p0, p1, p2 = coords[tris[:, 0]], coords[tris[:, 1]], coords[tris[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def diameters(coords: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = coords[tris]
    lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
    return lengths.max(axis=1)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """One level of the bisection hierarchy.

    ``tris`` are counterclockwise and stored as ``(newest, a, b)`` with the
    refinement edge ``(a, b)``.  ``new_node_parents[i]`` gives the two
    endpoints of the edge whose midpoint is node ``n_coarse + i``;
    ``round_starts`` splits the new nodes into batches whose parents all
    precede the batch.
    """

    level: int
    coords: np.ndarray
    tris: np.ndarray
    spec: PolygonSpec
    boundary_edges: np.ndarray
    boundary_segments: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    parent: Optional["TriMesh"] = None
    new_node_parents: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    round_starts: tuple = ()

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_tris(self) -> int:
        return len(self.tris)

    @property
    def h(self) -> float:
        return nominal_h(self.level)

    @property
    def n_coarse(self) -> int:
        return self.parent.n_nodes if self.parent is not None else self.n_nodes

    @property
    def is_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_nodes, dtype=bool)
        flag[self.boundary] = True
        return flag

    def areas(self) -> np.ndarray:
        return signed_areas(self.coords, self.tris)

    def diameters(self) -> np.ndarray:
        return diameters(self.coords, self.tris)

    def min_angles(self) -> np.ndarray:
        p = self.coords[self.tris]
        ang = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return np.min(ang, axis=0)

    def hierarchy(self):
        """Meshes from level 0 up to this one."""
        chain = []
        m = self
        while m is not None:
            chain.append(m)
            m = m.parent
        return chain[::-1]

    def segment_of_node(self) -> np.ndarray:
        """Lowest boundary-segment index containing each node, -1 for interior nodes."""
        dist = segment_distances(self.coords, self.spec.segments())
        on = dist <= BOUNDARY_TOL
        seg = np.where(on.any(axis=1), on.argmax(axis=1), -1)
        return seg


def _finalize(level, coords, tris, spec, parent=None, new_node_parents=None, round_starts=()):
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    tri_edges, edge_verts, counts = edge_table(tris, len(coords))
    bedges = edge_verts[counts == 1]
    segs = spec.segments()
    mids = 0.5 * (coords[bedges[:, 0]] + coords[bedges[:, 1]])
    dist = segment_distances(np.concatenate([coords[bedges[:, 0]], coords[bedges[:, 1]], mids]), segs)
    nb = len(bedges)
    on = (dist[:nb] <= BOUNDARY_TOL) & (dist[nb:2 * nb] <= BOUNDARY_TOL) & (dist[2 * nb:] <= BOUNDARY_TOL)
    if not on.any(axis=1).all():
        raise UnsupportedGeometryError("a boundary edge of the mesh does not lie on the polygon")
    bseg = on.argmax(axis=1)
    is_b = spec.boundary_distance(coords) <= BOUNDARY_TOL
    on_edges = np.zeros(len(coords), dtype=bool)
    on_edges[bedges.ravel()] = True
    if not np.array_equal(is_b, on_edges):
        raise UnsupportedGeometryError("geometric and topological boundary disagree")
    for a in (coords, tris, bedges, bseg):
        a.setflags(write=False)
    if new_node_parents is None:
        new_node_parents = np.zeros((0, 2), dtype=np.int64)
    return TriMesh(
        level=level, coords=coords, tris=tris, spec=spec,
        boundary_edges=bedges, boundary_segments=bseg,
        interior=np.flatnonzero(~is_b), boundary=np.flatnonzero(is_b),
        parent=parent, new_node_parents=new_node_parents, round_starts=tuple(round_starts),
    )


def initial_mesh(spec: PolygonSpec) -> TriMesh:
    """Level-0 mesh: every unit square of the polygon cut into two right
    isosceles triangles.

    The diagonal of each square passes through the square corner nearest to
    a graded (or, failing that, re-entrant) polygon corner, so all
    hypotenuses meet the singular point.
    """
    v = spec.vertices
    if not np.allclose(v, np.round(v), atol=0.0, rtol=0.0):
        raise UnsupportedGeometryError("initial mesher needs integer vertex coordinates")
    nxt = np.roll(v, -1, axis=0)
    if not np.all((v[:, 0] == nxt[:, 0]) | (v[:, 1] == nxt[:, 1])):
        raise UnsupportedGeometryError("initial mesher needs an axis-aligned polygon")

    targets = [p for _, p, _ in spec.graded_corners()]
    if not targets:
        targets = [spec.vertices[k] for k in range(spec.n_vertices) if spec.angles[k] > np.pi + 1e-12]
    targets = np.array(targets).reshape(-1, 2)

    x0, y0 = v.min(axis=0).astype(int)
    x1, y1 = v.max(axis=0).astype(int)
    squares = []
    for y in range(y0, y1):
        for x in range(x0, x1):
            if _point_in_polygon((x + 0.5, y + 0.5), v):
                squares.append((x, y))

    nodes = {}
    pts = sorted({(x + dx, y + dy) for x, y in squares for dx in (0, 1) for dy in (0, 1)},
                 key=lambda p: (p[1], p[0]))
    for i, p in enumerate(pts):
        nodes[p] = i
    tris = []
    for x, y in squares:
        p00, p10, p11, p01 = (x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)
        use_main = True
        if len(targets):
            corners = np.array([p00, p10, p11, p01], dtype=float)
            d = np.linalg.norm(corners[:, None, :] - targets[None], axis=2).min(axis=1)
            use_main = int(np.argmin(d)) in (0, 2)
        if use_main:
            tris.append((nodes[p10], nodes[p11], nodes[p00]))
            tris.append((nodes[p01], nodes[p00], nodes[p11]))
        else:
            tris.append((nodes[p00], nodes[p10], nodes[p01]))
            tris.append((nodes[p11], nodes[p01], nodes[p10]))
    coords = np.array(pts, dtype=np.float64)
    return _finalize(0, coords, np.array(tris, dtype=np.int64), spec)


def _point_in_polygon(p, v) -> bool:
    x, y = p
    inside = False
    n = len(v)
    for i in range(n):
        xa, ya = v[i]
        xb, yb = v[(i + 1) % n]
        if (ya > y) != (yb > y):
            xc = xa + (y - ya) * (xb - xa) / (yb - ya)
            if x < xc:
                inside = not inside
    return inside


@dataclass(frozen=True)
class GradingRule:
    """Admissible element diameter near graded corners.

    An element at level ``j`` (``h = 2**-j sqrt 2``) is bisected while its
    diameter exceeds ``h**(1/mu)`` if it touches the graded corner and
    ``scale * h * max(r_T, h**(1/mu))**(1 - mu)`` otherwise, where ``r_T`` is
    the distance from the corner to the element's nearest vertex
    (``distance="vertex"``) or to its centroid (``distance="centroid"``).
    Elements are never allowed to exceed ``h``.
    """

    distance: str = "vertex"
    scale: float = 1.0

    def __post_init__(self):
        if self.distance not in ("vertex", "centroid"):
            raise ValueError(f"unknown distance measure {self.distance!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def threshold(self, coords, tris, spec: PolygonSpec, h: float) -> np.ndarray:
        thresh = np.full(len(tris), h)
        p = coords[tris]
        for _, c, mu in spec.graded_corners():
            d = np.linalg.norm(p - c, axis=2)
            r_min = d.min(axis=1)
            r = r_min if self.distance == "vertex" else np.linalg.norm(p.mean(axis=1) - c, axis=1)
            hc = h ** (1.0 / mu)
            t = np.where(r_min <= BOUNDARY_TOL, hc, self.scale * h * np.maximum(r, hc) ** (1.0 - mu))
            np.minimum(thresh, t, out=thresh)
        return thresh


#: literal rule: nearest-vertex distance, unit constant
VERTEX_RULE = GradingRule("vertex", 1.0)
#: default rule; reproduces the reference node counts 24, 81, 294 for mu = 0.5
DEFAULT_RULE = GradingRule("centroid", 1.5)


def grading_threshold(coords, tris, spec: PolygonSpec, h: float, rule: GradingRule = DEFAULT_RULE):
    return rule.threshold(coords, tris, spec, h)


def _refine_one_level(mesh: TriMesh, spec: PolygonSpec, level: int, kernel, rule) -> TriMesh:
    h = nominal_h(level)
    coords = mesh.coords
    tris = mesh.tris
    n_coarse = len(coords)
    parents = []
    round_starts = []
    n = n_coarse
    while True:
        diam = diameters(coords, tris)
        marked = diam > rule.threshold(coords, tris, spec, h) * (1.0 + 1e-12)
        if not marked.any():
            break
        tri_edges, edge_verts, _ = edge_table(tris, n)
        tris, mp = kernel(np.ascontiguousarray(tris), tri_edges, np.ascontiguousarray(edge_verts), marked, n)
        round_starts.append(n - n_coarse)
        mid = 0.5 * (coords[mp[:, 0]] + coords[mp[:, 1]])
        coords = np.concatenate([coords, mid])
        parents.append(mp)
        n = len(coords)
    npar = np.concatenate(parents) if parents else np.zeros((0, 2), dtype=np.int64)
    return _finalize(level, coords, tris, spec, parent=mesh,
                     new_node_parents=npar, round_starts=round_starts)


def refine_graded(mesh: TriMesh, spec: PolygonSpec, target_level: int, *, kernel=None,
                  rule: GradingRule = DEFAULT_RULE) -> TriMesh:
    """Refine ``mesh`` level by level up to ``target_level``.

    Each level repeats marking (see :class:`GradingRule`) and conforming
    newest-vertex bisection until no element is marked.  ``kernel``
    overrides the bisection backend.
    """
    if target_level < mesh.level:
        raise ValueError(f"target_level {target_level} below mesh level {mesh.level}")
    kernel = kernel or _kernels.bisect_round
    cur = mesh
    for level in range(mesh.level + 1, target_level + 1):
        cur = _refine_one_level(cur, spec, level, kernel, rule)
    return cur


def build_mesh(spec: PolygonSpec, level: int, *, kernel=None, rule: GradingRule = DEFAULT_RULE) -> TriMesh:
    return refine_graded(initial_mesh(spec), spec, level, kernel=kernel, rule=rule)


def prolong_nodal(coarse: TriMesh, fine: TriMesh, values) -> np.ndarray:
    """Interpolate a P1 function from ``coarse`` onto the nodes of ``fine``.

    Kept nodes copy their value, each new node averages the endpoints of the
    edge it bisected.  The result represents the same function.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != coarse.n_nodes:
        raise ValueError("values do not match the coarse mesh")
    chain = []
    m = fine
    while m is not None and m is not coarse:
        chain.append(m)
        m = m.parent
    if m is None:
        raise HierarchyError("fine mesh is not a descendant of coarse mesh")
    out = values
    for mesh in reversed(chain):
        w = np.empty(mesh.n_nodes, dtype=np.float64)
        nc = mesh.n_coarse
        w[:nc] = out
        starts = list(mesh.round_starts) + [mesh.n_nodes - nc]
        p = mesh.new_node_parents
        for s, e in zip(starts[:-1], starts[1:]):
            w[nc + s:nc + e] = 0.5 * (w[p[s:e, 0]] + w[p[s:e, 1]])
        out = w
    return out


def export_mesh(mesh: TriMesh, path) -> None:
    """Plain-text mesh dump: header, ``x y flag`` node lines, triangle lines."""
    seg = mesh.segment_of_node()
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"nodes {mesh.n_nodes} tris {mesh.n_tris} level {mesh.level}\n")
        for (x, y), s in zip(mesh.coords, seg):
            flag = "I" if s < 0 else f"B:{s}"
            fh.write(f"{x:.17g} {y:.17g} {flag}\n")
        for a, b, c in mesh.tris:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path):
    """Parse an exported mesh; returns ``(level, coords, tris, flags)``."""
    with open(path, encoding="ascii") as fh:
        head = fh.readline().split()
        n, m, level = int(head[1]), int(head[3]), int(head[5])
        coords = np.empty((n, 2))
        flags = []
        for i in range(n):
            x, y, f = fh.readline().split()
            coords[i] = float(x), float(y)
            flags.append(f)
        tris = np.array([[int(t) for t in fh.readline().split()] for _ in range(m)], dtype=np.int64)
    return level, coords, tris.reshape(-1, 3), flags
