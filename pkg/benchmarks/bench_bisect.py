"""Compare the compiled and numpy bisection kernels.

Times (a) the bisection rounds alone, replayed from recorded inputs, and
(b) a full graded mesh build, for each backend.  Also asserts that both
backends produce identical meshes.

    python3 benchmarks/bench_bisect.py --levels 6 7 8 --mu 0.5 --repeat 3
"""

import argparse
import time

import numpy as np

from dbcontrol import _kernels
from dbcontrol.geometry import make_lshape
from dbcontrol.mesh import build_mesh


class Recorder:
    """Kernel wrapper that stores every call's inputs."""

    def __init__(self, kernel):
        self.kernel = kernel
        self.calls = []

    def __call__(self, tris, tri_edges, edge_verts, marked, n_nodes):
        self.calls.append((tris.copy(), tri_edges.copy(), edge_verts.copy(), marked.copy(), n_nodes))
        return self.kernel(tris, tri_edges, edge_verts, marked, n_nodes)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[6, 7, 8])
    ap.add_argument("--mu", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if _kernels.bisect_round_ext is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation`")
    ext, py = _kernels.bisect_round_ext, _kernels.bisect_round_py
    spec = make_lshape(args.mu)

    print(f"{'level':>5} {'nodes':>8} {'rounds':>6} {'kernel py':>10} {'kernel ext':>10} "
          f"{'speedup':>7} {'mesh py':>8} {'mesh ext':>8} {'speedup':>7}")
    for level in args.levels:
        rec = Recorder(ext)
        mesh_ext = build_mesh(spec, level, kernel=rec)
        mesh_py = build_mesh(spec, level, kernel=py)
        assert np.array_equal(mesh_ext.tris, mesh_py.tris)
        assert np.array_equal(mesh_ext.coords, mesh_py.coords)

        def replay(kernel):
            for call in rec.calls:
                kernel(*call)

        k_py = best_of(lambda: replay(py), args.repeat)
        k_ext = best_of(lambda: replay(ext), args.repeat)
        m_py = best_of(lambda: build_mesh(spec, level, kernel=py), args.repeat)
        m_ext = best_of(lambda: build_mesh(spec, level, kernel=ext), args.repeat)
        print(f"{level:5d} {mesh_ext.n_nodes:8d} {len(rec.calls):6d} {k_py:10.4f} {k_ext:10.4f} "
              f"{k_py / k_ext:7.2f} {m_py:8.3f} {m_ext:8.3f} {m_py / m_ext:7.2f}")


if __name__ == "__main__":
    main()
