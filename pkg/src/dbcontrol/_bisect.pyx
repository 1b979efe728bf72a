# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled newest-vertex bisection round.

Same contract and output as ``_bisect_py.bisect_round``; the closure uses a
worklist instead of repeated sweeps over all triangles.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def bisect_round(const cnp.int64_t[:, ::1] tris, const cnp.int64_t[:, ::1] tri_edges,
                 const cnp.int64_t[:, ::1] edge_verts, marked, cnp.int64_t n_nodes):
    cdef Py_ssize_t T = tris.shape[0]
    cdef Py_ssize_t E = edge_verts.shape[0]
    cdef Py_ssize_t t, k, e, top, i, n_mid, n_out
    cdef cnp.uint8_t[::1] mk = np.ascontiguousarray(marked, dtype=np.uint8)
    cdef cnp.uint8_t[::1] emark = np.zeros(E, dtype=np.uint8)
    cdef cnp.int64_t[::1] mid = np.full(E, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = np.empty(E, dtype=np.int64)

    # edge -> incident triangles (at most two) for closure propagation
    cdef cnp.int64_t[:, ::1] e2t = np.full((E, 2), -1, dtype=np.int64)
    for t in range(T):
        for k in range(3):
            e = tri_edges[t, k]
            if e2t[e, 0] < 0:
                e2t[e, 0] = t
            else:
                e2t[e, 1] = t

    top = 0
    for t in range(T):
        if mk[t]:
            e = tri_edges[t, 0]
            if not emark[e]:
                emark[e] = 1
                stack[top] = e
                top += 1
    while top > 0:
        top -= 1
        e = stack[top]
        for i in range(2):
            t = e2t[e, i]
            if t < 0:
                continue
            k = tri_edges[t, 0]
            if not emark[k]:
                emark[k] = 1
                stack[top] = k
                top += 1

    n_mid = 0
    for e in range(E):
        if emark[e]:
            n_mid += 1
    mid_parents_arr = np.empty((n_mid, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] mid_parents = mid_parents_arr
    i = 0
    for e in range(E):
        if emark[e]:
            mid[e] = n_nodes + i
            mid_parents[i, 0] = edge_verts[e, 0]
            mid_parents[i, 1] = edge_verts[e, 1]
            i += 1

    n_out = 0
    for t in range(T):
        if mid[tri_edges[t, 0]] < 0:
            n_out += 1
        else:
            n_out += 2 + (mid[tri_edges[t, 1]] >= 0) + (mid[tri_edges[t, 2]] >= 0)
    out_arr = np.empty((n_out, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef cnp.int64_t v0, v1, v2, m0, m1, m2
    i = 0
    for t in range(T):
        v0 = tris[t, 0]
        v1 = tris[t, 1]
        v2 = tris[t, 2]
        m0 = mid[tri_edges[t, 0]]
        if m0 < 0:
            out[i, 0] = v0; out[i, 1] = v1; out[i, 2] = v2
            i += 1
            continue
        m1 = mid[tri_edges[t, 1]]
        m2 = mid[tri_edges[t, 2]]
        if m2 < 0:
            out[i, 0] = m0; out[i, 1] = v0; out[i, 2] = v1
            i += 1
        else:
            out[i, 0] = m2; out[i, 1] = m0; out[i, 2] = v0
            out[i + 1, 0] = m2; out[i + 1, 1] = v1; out[i + 1, 2] = m0
            i += 2
        if m1 < 0:
            out[i, 0] = m0; out[i, 1] = v2; out[i, 2] = v0
            i += 1
        else:
            out[i, 0] = m1; out[i, 1] = m0; out[i, 2] = v2
            out[i + 1, 0] = m1; out[i + 1, 1] = v0; out[i + 1, 2] = m0
            i += 2
    return out_arr, mid_parents_arr
