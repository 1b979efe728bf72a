"""Seven-point degree-5 quadrature on triangles."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Barycentric quadrature rule; ``weights`` sum to one (area-normalised)."""

    points: np.ndarray   # (q, 3) barycentric coordinates
    weights: np.ndarray  # (q,)
    degree: int

    def map_points(self, coords: np.ndarray, tris: np.ndarray) -> np.ndarray:
        """Physical quadrature points, shape (n_tris, q, 2)."""
        return np.einsum("qk,tkd->tqd", self.points, coords[tris])


def _seven_point_rule() -> QuadRule:
    s15 = np.sqrt(15.0)
    a1 = (6.0 - s15) / 21.0
    a2 = (6.0 + s15) / 21.0
    w1 = (155.0 - s15) / 1200.0
    w2 = (155.0 + s15) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    p = np.array(pts)
    w = np.array(wts)
    p.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(points=p, weights=w, degree=5)


GAUSS7 = _seven_point_rule()


def default_rule() -> QuadRule:
    return GAUSS7
