"""Pure-Python (numpy) newest-vertex bisection round.

Triangles are stored as ``(newest, a, b)``: the refinement edge is ``(a, b)``,
opposite the newest vertex.  Local edge ``k`` of a triangle is the edge
opposite local vertex ``k``, so local edge 0 is always the refinement edge.

``bisect_round`` is the reference implementation; the compiled kernel in
``_bisect.pyx`` must reproduce its output bit for bit.
"""

import numpy as np


def edge_closure(tri_edges, n_edges, marked):
    """Smallest edge set containing the refinement edges of ``marked`` and
    closed under: any marked edge of a triangle marks its refinement edge."""
    emark = np.zeros(n_edges, dtype=bool)
    emark[tri_edges[marked, 0]] = True
    while True:
        touched = emark[tri_edges].any(axis=1)
        need = touched & ~emark[tri_edges[:, 0]]
        if not need.any():
            return emark
        emark[tri_edges[need, 0]] = True


def bisect_round(tris, tri_edges, edge_verts, marked, n_nodes):
    """Bisect every marked triangle once, plus whatever conformity requires.

    Returns ``(new_tris, mid_parents)``; new node ``n_nodes + i`` is the
    midpoint of ``mid_parents[i]``.  Children replace their parent in place,
    so the output order is parent-major.
    """
    emark = edge_closure(tri_edges, len(edge_verts), np.asarray(marked, dtype=bool))
    idx = np.flatnonzero(emark)
    mid = np.full(len(edge_verts), -1, dtype=np.int64)
    mid[idx] = n_nodes + np.arange(len(idx), dtype=np.int64)
    mid_parents = edge_verts[idx].copy()

    v0, v1, v2 = tris[:, 0], tris[:, 1], tris[:, 2]
    m0, m1, m2 = mid[tri_edges[:, 0]], mid[tri_edges[:, 1]], mid[tri_edges[:, 2]]
    T = len(tris)
    slots = np.zeros((T, 4, 3), dtype=np.int64)
    valid = np.zeros((T, 4), dtype=bool)

    keep = m0 < 0
    slots[keep, 0] = tris[keep]
    valid[keep, 0] = True

    left1 = ~keep & (m2 < 0)
    slots[left1, 0] = np.stack([m0, v0, v1], axis=1)[left1]
    valid[left1, 0] = True
    left2 = ~keep & (m2 >= 0)
    slots[left2, 0] = np.stack([m2, m0, v0], axis=1)[left2]
    slots[left2, 1] = np.stack([m2, v1, m0], axis=1)[left2]
    valid[left2, :2] = True

    right1 = ~keep & (m1 < 0)
    slots[right1, 2] = np.stack([m0, v2, v0], axis=1)[right1]
    valid[right1, 2] = True
    right2 = ~keep & (m1 >= 0)
    slots[right2, 2] = np.stack([m1, m0, v2], axis=1)[right2]
    slots[right2, 3] = np.stack([m1, v0, m0], axis=1)[right2]
    valid[right2, 2:] = True

    return slots[valid], mid_parents
