"""Polygonal domains with per-corner grading exponents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

ANGLE_TOL = 1e-12


def _interior_angles(vertices: np.ndarray) -> np.ndarray:
    """Interior angle at every vertex of a counterclockwise polygon."""
    prev = np.roll(vertices, 1, axis=0)
    nxt = np.roll(vertices, -1, axis=0)
    e_in = vertices - prev
    e_out = nxt - vertices
    turn = np.arctan2(
        e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0],
        np.einsum("ij,ij->i", e_in, e_out),
    )
    return np.pi - turn


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    # collinear overlap
    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))
    for d, a, b, c in ((d1, q1, q2, p1), (d2, q1, q2, p2), (d3, p1, p2, q1), (d4, p1, p2, q2)):
        if d == 0 and on_seg(a, b, c):
            return True
    return False


@dataclass(frozen=True)
class PolygonSpec:
    """Simple counterclockwise polygon.

    Attributes
    ----------
    vertices : (m, 2) array
        Corners in counterclockwise order; the polygon is implicitly closed.
    grading : (m,) array
        Grading exponent ``mu_j`` in (0, 1] attached to each corner.
    angles : (m,) array
        Interior angle at each corner, derived from the edges.
    """

    vertices: np.ndarray
    grading: np.ndarray
    angles: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        g = np.array(self.grading, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ParameterError("vertices must be an (m, 2) array with m >= 3")
        if g.shape != (len(v),):
            raise ParameterError("one grading exponent per vertex is required")
        if np.any(~(g > 0)) or np.any(g > 1):
            raise ParameterError(f"grading exponents must lie in (0, 1], got {g}")
        x, y = v[:, 0], v[:, 1]
        area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
        if area2 <= 0:
            raise ParameterError("polygon must be counterclockwise with positive area")
        m = len(v)
        for i in range(m):
            for k in range(i + 1, m):
                if k == i + 1 or (i == 0 and k == m - 1):
                    continue
                if _segments_cross(v[i], v[(i + 1) % m], v[k], v[(k + 1) % m]):
                    raise ParameterError("polygon is not simple")
        v.setflags(write=False)
        g.setflags(write=False)
        ang = _interior_angles(v)
        ang.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "grading", g)
        object.__setattr__(self, "angles", ang)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def segments(self) -> np.ndarray:
        """Boundary segments as an (m, 2, 2) array; segment k joins vertex k to k+1."""
        return np.stack([self.vertices, np.roll(self.vertices, -1, axis=0)], axis=1)

    def graded_corners(self):
        """``(index, point, mu)`` for every corner with ``mu < 1``."""
        return [(k, self.vertices[k], float(self.grading[k]))
                for k in range(self.n_vertices) if self.grading[k] < 1.0]

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the polygon boundary."""
        return segment_distances(points, self.segments()).min(axis=1)


def segment_distances(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance matrix (n_points, n_segments) between points and closed segments."""
    p = np.asarray(points, dtype=np.float64)[:, None, :]
    a = segments[None, :, 0, :]
    d = segments[None, :, 1, :] - a
    t = np.einsum("ijk,ijk->ij", p - a, np.broadcast_to(d, (p.shape[0],) + d.shape[1:]))
    t = np.clip(t / np.einsum("ijk,ijk->ij", d, d), 0.0, 1.0)
    closest = a + t[..., None] * d
    return np.linalg.norm(p - closest, axis=-1)


def make_polygon(vertices, grading=None) -> PolygonSpec:
    v = np.asarray(vertices, dtype=np.float64)
    if grading is None:
        grading = np.ones(len(v))
    return PolygonSpec(v, np.asarray(grading, dtype=np.float64))


def make_lshape(mu_reentrant: float = 0.5) -> PolygonSpec:
    """L-shaped domain ``(-1, 1)^2 minus [0, 1] x [-1, 0]``.

    Only the re-entrant corner at the origin (interior angle 3*pi/2) carries
    the grading exponent; the five convex corners get ``mu = 1``.
    """
    mu = float(mu_reentrant)
    if not 0.0 < mu <= 1.0:
        raise ParameterError(f"mu_reentrant must lie in (0, 1], got {mu_reentrant!r}")
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (0.0, -1.0)]
    grading = [mu, 1.0, 1.0, 1.0, 1.0, 1.0]
    return PolygonSpec(np.array(vertices), np.array(grading))


def make_unit_square() -> PolygonSpec:
    return make_polygon([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
