"""Self-checks of mesh, assembly and control invariants (``dbcontrol check``)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import LAPLACE, assemble_mass, assemble_stiffness
from .control import (ControlProblem, apply_T, build_context, gradient, harmonic_extend,
                      objective, solve_kkt_monolithic, solve_reduced, solve_state)
from .geometry import make_lshape
from .mesh import BOUNDARY_TOL, TriMesh, build_mesh, edge_table
from .problems import setup_example1, setup_example2
from .quadrature import GAUSS7


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


# mesh measurements ------------------------------------------------------------

def edge_incidence_ok(mesh: TriMesh) -> bool:
    """Every edge belongs to one (boundary) or two (interior) triangles."""
    _, edge_verts, counts = edge_table(mesh.tris, mesh.n_nodes)
    if np.any((counts < 1) | (counts > 2)):
        return False
    mid = 0.5 * (mesh.coords[edge_verts[:, 0]] + mesh.coords[edge_verts[:, 1]])
    on_bdry = mesh.spec.boundary_distance(mid) <= BOUNDARY_TOL
    return bool(np.array_equal(counts == 1, on_bdry))


def no_hanging_nodes(mesh: TriMesh) -> bool:
    """No node lies in the interior of an edge it is not an endpoint of."""
    _, edge_verts, _ = edge_table(mesh.tris, mesh.n_nodes)
    mid = 0.5 * (mesh.coords[edge_verts[:, 0]] + mesh.coords[edge_verts[:, 1]])
    # bisection only ever creates midpoints, so a hanging node would sit on an edge midpoint
    lookup = {tuple(p) for p in mesh.coords.round(14).tolist()}
    return not any(tuple(p) in lookup for p in mid.round(14).tolist())


def is_nested(coarse: TriMesh, fine: TriMesh) -> bool:
    n = coarse.n_nodes
    return fine.n_nodes >= n and bool(np.array_equal(fine.coords[:n], coarse.coords))


def grading_ratio(mesh: TriMesh) -> float:
    """``max_T diam(T) / (h max(r_T, h^(1/mu))^(1-mu))`` over graded corners,
    with ``r_T`` the nearest-vertex distance; 0 when nothing is graded."""
    h = mesh.h
    diam = mesh.diameters()
    p = mesh.coords[mesh.tris]
    worst = 0.0
    for _, c, mu in mesh.spec.graded_corners():
        r = np.linalg.norm(p - c, axis=2).min(axis=1)
        bound = h * np.maximum(r, h ** (1.0 / mu)) ** (1.0 - mu)
        worst = max(worst, float(np.max(diam / bound)))
    return worst


def boundary_classification_ok(mesh: TriMesh) -> bool:
    d = mesh.spec.boundary_distance(mesh.coords)
    return bool(np.all(d[mesh.boundary] <= BOUNDARY_TOL) and np.all(d[mesh.interior] > BOUNDARY_TOL))


def mesh_suite(mus=(0.5, 2.0 / 3.0, 1.0), max_level: int = 5, min_angle_deg: float = 20.0,
               grading_from: int = 3):
    """Conformity, areas, nesting, classification, angles and grading."""
    out = []
    for mu in mus:
        hier = build_mesh(make_lshape(mu), max_level).hierarchy()
        tag = f"mu={mu:.4g}"
        out.append(CheckResult(f"mesh conformity {tag}",
                               all(edge_incidence_ok(m) and no_hanging_nodes(m) for m in hier)))
        amin = min(float(m.areas().min()) for m in hier)
        out.append(CheckResult(f"mesh positive areas {tag}", amin > 0, f"min area {amin:.3e}"))
        out.append(CheckResult(f"mesh nesting {tag}",
                               all(is_nested(a, b) for a, b in zip(hier[:-1], hier[1:]))))
        out.append(CheckResult(f"mesh boundary classification {tag}",
                               all(boundary_classification_ok(m) for m in hier)))
        ang = min(float(np.degrees(m.min_angles().min())) for m in hier)
        out.append(CheckResult(f"mesh min angle {tag}", ang >= min_angle_deg, f"{ang:.2f} deg"))
        if mu < 1:
            ratios = [grading_ratio(m) for m in hier[min(grading_from, max_level):]]
            c = ratios[0]
            ok = all(r <= c * (1 + 1e-12) for r in ratios) and c <= 4.0
            out.append(CheckResult(f"mesh grading bound {tag}", ok,
                                   "C=" + ", ".join(f"{r:.3f}" for r in ratios)))
        else:
            hmax = [float(m.diameters().max()) / m.h for m in hier[1:]]
            out.append(CheckResult(f"mesh uniform diameter {tag}",
                                   all(abs(r - 1) <= 1e-12 for r in hmax)))
    return out


# assembly / control -----------------------------------------------------------

def quadrature_exactness(tol: float = 1e-13) -> CheckResult:
    """Monomials ``x^a y^b`` with ``a + b <= 5`` on the reference triangle."""
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    x = GAUSS7.map_points(coords, np.array([[0, 1, 2]]))[0]
    worst = 0.0
    for a in range(6):
        for b in range(6 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            approx = 0.5 * float(GAUSS7.weights @ (x[:, 0] ** a * x[:, 1] ** b))
            worst = max(worst, abs(approx - exact) / exact)
    return CheckResult("quadrature degree 5", worst <= tol, f"max rel err {worst:.1e}")


def _affine(x):
    return 2.0 * x[..., 0] - x[..., 1] + 0.5


def patch_test(levels=(1, 2, 3, 4), mu: float = 0.5) -> CheckResult:
    worst = 0.0
    mesh = build_mesh(make_lshape(mu), max(levels))
    for m in mesh.hierarchy():
        if m.level not in levels:
            continue
        prob = ControlProblem(mesh=m, coeffs=LAPLACE, y_d=_affine, u_d=_affine)
        ctx = build_context(prob)
        y = solve_state(ctx, _affine(m.coords[m.boundary]))
        worst = max(worst, float(np.max(np.abs(y - _affine(m.coords)))))
    return CheckResult("patch test (affine state)", worst <= 1e-12, f"max err {worst:.1e}")


def operator_checks(ctx, rng, n: int = 10, label: str = ""):
    out = []
    nb = len(ctx.B)
    sym, pos = 0.0, math.inf
    for _ in range(n):
        u, v = rng.standard_normal(nb), rng.standard_normal(nb)
        tu, tv = apply_T(ctx, u), apply_T(ctx, v)
        sym = max(sym, abs(tu @ v - tv @ u) / (np.linalg.norm(tu) * np.linalg.norm(v)))
        pos = min(pos, float(tu @ u))
    out.append(CheckResult(f"T symmetric{label}", sym <= 1e-10, f"{sym:.1e}"))
    out.append(CheckResult(f"T positive{label}", pos > 0, f"min <Tu,u> {pos:.3e}"))
    m = ctx.mesh
    z1 = harmonic_extend(ctx, np.ones(nb))
    za = harmonic_extend(ctx, _affine(m.coords[ctx.B]))
    err = max(float(np.max(np.abs(z1 - 1))), float(np.max(np.abs(za - _affine(m.coords)))))
    out.append(CheckResult(f"harmonic extension reproduces affine{label}", err <= 1e-12, f"{err:.1e}"))
    return out


def gradient_check(ctx, rng, n: int = 5, eps: float = 1e-5, label: str = "") -> CheckResult:
    nb = len(ctx.B)
    u = rng.standard_normal(nb)
    g = gradient(ctx, u)
    worst = 0.0
    for _ in range(n):
        v = rng.standard_normal(nb)
        fd = (objective(ctx, u + eps * v) - objective(ctx, u - eps * v)) / (2 * eps)
        gv = float(g @ v)
        worst = max(worst, abs(fd - gv) / (1 + abs(gv)))
    return CheckResult(f"gradient vs central differences{label}", worst <= 1e-6, f"{worst:.1e}")


def kkt_agreement(ctx, label: str = "") -> CheckResult:
    a = solve_reduced(ctx)
    b = solve_kkt_monolithic(ctx)
    d = float(np.max(np.abs(a.u - b.u)))
    dj = abs(a.objective - b.objective)
    return CheckResult(f"reduced vs monolithic{label}", d <= 1e-8 and dj <= 1e-9,
                       f"|du|={d:.1e}, |dJ|={dj:.1e}")


def run_checks(max_level: int = 4, seed: int = 0):
    """Run every check; returns a list of :class:`CheckResult`."""
    rng = np.random.default_rng(seed)
    results = mesh_suite(max_level=max_level)
    results.append(quadrature_exactness())
    m = build_mesh(make_lshape(0.5), 3)
    M, K = assemble_mass(m), assemble_stiffness(m)
    results.append(CheckResult("mass matrix total = |domain|", abs(M.sum() - 3.0) <= 1e-12))
    results.append(CheckResult("stiffness row sums vanish",
                               float(np.max(np.abs(K.sum(axis=1)))) <= 1e-12))
    results.append(patch_test(levels=tuple(range(1, max_level + 1))))
    for name, ctx in (("ex1", build_context(setup_example1(0.5, mesh=m)[0])),
                      ("ex2", build_context(setup_example2(0.5, mesh=m)))):
        label = f" [{name}, j=3]"
        results.extend(operator_checks(ctx, rng, label=label))
        results.append(gradient_check(ctx, rng, label=label))
        results.append(kkt_agreement(ctx, label=label))
    return results
