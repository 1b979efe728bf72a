import math

import numpy as np
import pytest
import sympy

from conftest import lshape_hierarchy
from dbcontrol.assembly import assemble_mass, assemble_stiffness
from dbcontrol.control import ControlSolution, build_context, harmonic_extend, solve_reduced
from dbcontrol.error_analysis import (consecutive_error, discrete_h1_norm, eoc, eoc_sequence,
                                      exact_error, h1_error, h12_control_error)
from dbcontrol.exceptions import AssemblyError, HierarchyError, ParameterError
from dbcontrol.mesh import prolong_nodal
from dbcontrol.problems import (EX1_EXACT, bump, bump_grad, corner_singular, corner_singular_grad,
                                ex1_adjoint_operator_of_bump, ex1_yd, polar_angle, setup_example1,
                                setup_example2)

#: ||r^(2/3) sin(2 theta/3)||_{H^1} on the L-shape.  Derived independently in
#: polar coordinates around the corner: with R(theta) = 1/max(|cos|, |sin|),
#: |grad|^2 term = 1/3 int R^(4/3), L2 term = 3/10 int sin^2(2 theta/3) R^(10/3),
#: both over [0, 3 pi/2] with scipy.integrate.quad split at multiples of pi/4.
Y_BAR_H1_NORM = 1.7090004373825225


def _affine(x):
    return 0.7 * x[..., 0] + 1.3 * x[..., 1] - 0.2


def _affine_grad(x):
    return np.broadcast_to([0.7, 1.3], x.shape).copy()


def _ctx1(level, mu=0.5):
    return build_context(setup_example1(mu, mesh=lshape_hierarchy(mu, max(level, 3))[level])[0])


# -- h1_error -------------------------------------------------------------------

def test_affine_interpolant_exact(mesh3):
    assert h1_error(mesh3, _affine(mesh3.coords), _affine, _affine_grad) <= 1e-12


def test_norm_of_exact_state_against_polar_oracle():
    m = lshape_hierarchy(0.5, 5)[5]
    val = h1_error(m, np.zeros(m.n_nodes), corner_singular, corner_singular_grad)
    assert val == pytest.approx(Y_BAR_H1_NORM, rel=2e-6)


def test_interpolation_error_rate():
    hier = lshape_hierarchy(0.5, 7)
    errs = [h1_error(m, corner_singular(m.coords), corner_singular, corner_singular_grad) for m in hier[4:]]
    rates = [eoc(a, b) for a, b in zip(errs[:-1], errs[1:])]
    assert all(abs(s - 1.0) <= 0.1 for s in rates)


def test_quadrature_matches_matrices(mesh3, rng):
    M, K = assemble_mass(mesh3), assemble_stiffness(mesh3)
    for _ in range(5):
        v = rng.standard_normal(mesh3.n_nodes)
        assert h1_error(mesh3, v) ** 2 == pytest.approx(v @ (M @ v) + v @ (K @ v), rel=1e-12)
        assert h1_error(mesh3, v, seminorm=True) ** 2 == pytest.approx(v @ (K @ v), rel=1e-12)
        assert discrete_h1_norm(M, K, v) == pytest.approx(h1_error(mesh3, v), rel=1e-12)


def test_norm_axioms(mesh2, rng):
    for _ in range(10):
        a, b = rng.standard_normal((2, mesh2.n_nodes))
        c = rng.standard_normal() * 3
        assert h1_error(mesh2, a + b) <= h1_error(mesh2, a) + h1_error(mesh2, b) + 1e-14
        assert h1_error(mesh2, c * a) == pytest.approx(abs(c) * h1_error(mesh2, a), rel=1e-13)
        # error is a function of the difference only
        assert h1_error(mesh2, a, _affine, _affine_grad) == pytest.approx(
            h1_error(mesh2, a - _affine(mesh2.coords)), rel=1e-12)


def test_exact_evaluation_failure_names_element(mesh2):
    def bad(x):
        out = np.zeros(x.shape[:-1])
        out[5] = np.nan
        return out

    with pytest.raises(AssemblyError) as info:
        h1_error(mesh2, np.zeros(mesh2.n_nodes), bad, None)
    assert info.value.element == 5


# -- control error --------------------------------------------------------------

def test_control_error_affine_is_zero():
    c = _ctx1(3)
    u = _affine(c.mesh.coords[c.B])
    assert h12_control_error(c, u, (_affine, _affine_grad)) <= 1e-12


def test_control_error_of_interpolant_halves():
    errs = []
    for level in (5, 6):
        c = _ctx1(level)
        errs.append(h12_control_error(c, corner_singular(c.mesh.coords[c.B]), EX1_EXACT.harmonic_of_u))
    assert errs[1] > 0
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)


def test_composite_error_level5():
    c = _ctx1(5)
    e = exact_error(c, solve_reduced(c), EX1_EXACT)
    assert set(e) == {"y", "u", "phi", "total"}
    assert e["total"] == pytest.approx(e["y"] + e["u"] + e["phi"])
    assert e["total"] == pytest.approx(4.28e-2, rel=0.15)


# -- consecutive errors ---------------------------------------------------------

def _solution(y, phi, ctx):
    return ControlSolution(u=y[ctx.B], y=y, phi=phi, z=harmonic_extend(ctx, y[ctx.B]),
                           objective=0.0, pcg=None)


def test_consecutive_identical_is_zero():
    hier = lshape_hierarchy(0.5, 3)
    c2, c3 = _ctx1(2), _ctx1(3)
    y = np.random.default_rng(0).standard_normal(hier[2].n_nodes)
    phi = np.where(c2.mesh.is_boundary, 0.0, 1.0)
    s2 = _solution(y, phi, c2)
    yf, phif = prolong_nodal(hier[2], hier[3], y), prolong_nodal(hier[2], hier[3], phi)
    s3 = _solution(yf, phif, c3)
    e = consecutive_error(hier[2], s2, c3, s3)
    assert e["total"] <= 1e-13


def test_consecutive_bumps_match_brute_force():
    """Fine field = prolongation + h^2 perturbations at new nodes."""
    hier = lshape_hierarchy(0.5, 4)
    coarse, fine = hier[3], hier[4]
    cf = _ctx1(4)
    rng = np.random.default_rng(5)
    y = rng.standard_normal(coarse.n_nodes)
    bump_vals = np.zeros(fine.n_nodes)
    new = np.arange(coarse.n_nodes, fine.n_nodes)
    bump_vals[new] = fine.h ** 2 * rng.standard_normal(len(new))
    bump_vals[fine.boundary] = 0.0     # keep u equal so only y and phi differ
    yf = prolong_nodal(coarse, fine, y) + bump_vals
    phi_c = np.zeros(coarse.n_nodes)
    phi_f = bump_vals.copy()
    sc = ControlSolution(u=y[coarse.boundary], y=y, phi=phi_c, z=None, objective=0.0, pcg=None)
    sf = ControlSolution(u=yf[fine.boundary], y=yf, phi=phi_f, z=None, objective=0.0, pcg=None)
    e = consecutive_error(coarse, sc, cf, sf)
    assert e["u"] <= 1e-14
    # brute force by element quadrature on the fine mesh
    assert e["y"] == pytest.approx(h1_error(fine, bump_vals), rel=1e-12)
    assert e["phi"] == pytest.approx(h1_error(fine, bump_vals, seminorm=True), rel=1e-12)


def test_consecutive_requires_nesting():
    c3 = _ctx1(3)
    other = lshape_hierarchy(2 / 3, 2)[2]
    s = ControlSolution(u=None, y=np.zeros(other.n_nodes), phi=np.zeros(other.n_nodes), z=None,
                        objective=0.0, pcg=None)
    with pytest.raises(HierarchyError):
        consecutive_error(other, s, c3, s)


def test_example2_consecutive_error_level5():
    hier = lshape_hierarchy(0.5, 6)
    c5 = build_context(setup_example2(0.5, mesh=hier[5]))
    c6 = build_context(setup_example2(0.5, mesh=hier[6]))
    e = consecutive_error(hier[5], solve_reduced(c5), c6, solve_reduced(c6))
    assert e["total"] == pytest.approx(7.32e-2, rel=0.15)


def test_synthetic_consecutive_eoc():
    """Nested P1 fields h_j^s g with g = 0 on the boundary: EOC equals s."""
    hier = lshape_hierarchy(0.5, 5)
    base = hier[1]
    g = np.random.default_rng(2).standard_normal(base.n_nodes) * ~base.is_boundary
    ctxs = {j: build_context(setup_example1(0.5, mesh=hier[j])[0]) for j in range(1, 6)}
    for s_true in (0.5, 1.0, 2.0):
        sols = []
        for j in range(1, 6):
            y = hier[j].h ** s_true * prolong_nodal(base, hier[j], g)
            sols.append(ControlSolution(u=y[hier[j].boundary], y=y, phi=y,
                                        z=None, objective=0.0, pcg=None))
        errs = [consecutive_error(hier[j], sols[j - 1], ctxs[j + 1], sols[j])["total"] for j in range(1, 5)]
        for s in eoc_sequence(errs)[1:]:
            assert s == pytest.approx(s_true, abs=1e-10)


# -- EOC ------------------------------------------------------------------------

def test_eoc_basic():
    assert eoc(0.8, 0.4) == 1.0
    assert eoc_sequence([1.0, 0.5, 0.125]) == [None, 1.0, 2.0]
    with pytest.raises(ParameterError):
        eoc(0.0, 0.1)
    with pytest.raises(ParameterError):
        eoc(0.1, -1.0)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
def test_eoc_of_power_sequence(s):
    errs = [(2.0 ** -j * math.sqrt(2)) ** s for j in range(1, 10)]
    for val in eoc_sequence(errs)[1:]:
        assert val == pytest.approx(s, abs=1e-13)


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("sign", [1, -1])
def test_consecutive_vs_true_eoc(s, sign):
    h = [2.0 ** -j * math.sqrt(2) for j in range(0, 8)]
    z = [sign ** j * hj ** s for j, hj in enumerate(h)]
    diffs = [abs(a - b) for a, b in zip(z[:-1], z[1:])]
    assert abs(eoc_sequence(diffs)[6] - s) <= 0.02


# -- exact data of the first example --------------------------------------------

def test_theta_branch_zero_on_corner_edges():
    t = np.linspace(0, 1, 100)
    east = np.column_stack([t, np.zeros_like(t)])      # theta = 0
    south = np.column_stack([np.zeros_like(t), -t])    # theta = 3 pi / 2
    assert np.abs(corner_singular(east)).max() <= 1e-14
    assert np.abs(corner_singular(south)).max() <= 1e-14
    assert polar_angle(np.array([[0.0, -1.0]]))[0] == pytest.approx(1.5 * np.pi)


def test_exact_state_plugin():
    x = np.array([[math.cos(0.75 * math.pi), math.sin(0.75 * math.pi)]])
    assert corner_singular(x)[0] == pytest.approx(1.0, abs=1e-15)


def test_bump_vanishes_on_boundary():
    t = np.linspace(-1, 1, 50)
    pts = np.concatenate([np.column_stack([t, np.full_like(t, 1.0)]), np.column_stack([np.full_like(t, -1.0), t]),
                          np.column_stack([0.5 * (t + 1), np.zeros_like(t)]),
                          np.column_stack([np.zeros_like(t), -0.5 * (t + 1)])])
    assert np.abs(bump(pts)).max() <= 1e-14
    assert np.abs(bump_grad(pts)).max() <= 1e-14


def _interior_points(n, rng):
    pts = []
    while len(pts) < n:
        p = rng.uniform(-0.95, 0.95, 2)
        if not (p[0] > -0.05 and p[1] < 0.05):
            pts.append(p)
    return np.array(pts)


def test_gradients_match_central_differences(rng):
    pts = _interior_points(50, rng)
    eps = 1e-6
    for f, g in (EX1_EXACT.y, EX1_EXACT.phi):
        fd = np.column_stack([(f(pts + eps * e) - f(pts - eps * e)) / (2 * eps) for e in np.eye(2)])
        np.testing.assert_allclose(g(pts), fd, atol=1e-6)


def test_desired_state_symbolic_oracle(rng):
    x1, x2 = sympy.symbols("x1 x2")
    phi = x1 ** 2 * (1 - x1 ** 2) ** 2 * x2 ** 2 * (1 - x2 ** 2) ** 2
    b = (-2 * x1, -2 * x2)
    op = (-(sympy.diff(phi, x1, 2) + sympy.diff(phi, x2, 2))
          - (sympy.diff(b[0] * phi, x1) + sympy.diff(b[1] * phi, x2))
          + sympy.Rational(4, 3) * phi)
    f = sympy.lambdify((x1, x2), sympy.expand(op), "numpy")
    pts = _interior_points(100, rng)
    np.testing.assert_allclose(ex1_adjoint_operator_of_bump(pts), f(pts[:, 0], pts[:, 1]), atol=1e-12)
    np.testing.assert_allclose(ex1_yd(pts), corner_singular(pts) - f(pts[:, 0], pts[:, 1]), atol=1e-12)


def test_desired_state_finite_differences(rng):
    pts = _interior_points(100, rng)
    eps = 1e-4

    def lap(f, x):
        return sum((f(x + eps * e) - 2 * f(x) + f(x - eps * e)) / eps ** 2 for e in np.eye(2))

    def div_b_phi(x):
        return sum((bump(x + eps * e) * (-2 * (x + eps * e) @ e) - bump(x - eps * e) * (-2 * (x - eps * e) @ e))
                   / (2 * eps) for e in np.eye(2))

    ref = -lap(bump, pts) - div_b_phi(pts) + (4 / 3) * bump(pts)
    np.testing.assert_allclose(ex1_adjoint_operator_of_bump(pts), ref, atol=1e-6)
