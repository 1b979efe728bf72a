import numpy as np
import pytest

from conftest import lshape_hierarchy
from dbcontrol.assembly import LAPLACE
from dbcontrol.control import (ControlProblem, apply_T, build_context, gradient, harmonic_extend,
                               kkt_system, objective, preconditioner, solve_kkt_monolithic,
                               solve_reduced, solve_state, tracking_term)
from dbcontrol.error_analysis import h1_error
from dbcontrol.exceptions import ParameterError, SolverError
from dbcontrol.problems import (EX1_COEFFS, corner_singular, corner_singular_grad, setup_example1,
                                setup_example2)


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


def _affine(x):
    return 1.5 * x[..., 0] - 0.5 * x[..., 1] + 0.25


def _ctx(example, level, mu=0.5, **kw):
    mesh = lshape_hierarchy(mu, max(level, 3))[level]
    if example == 1:
        return build_context(setup_example1(mu, mesh=mesh, **kw)[0])
    return build_context(setup_example2(mu, mesh=mesh, **kw))


@pytest.fixture(scope="module")
def ctx1():
    return _ctx(1, 3)


@pytest.fixture(scope="module")
def ctx2():
    return _ctx(2, 3)


@pytest.fixture(params=[1, 2], ids=["ex1", "ex2"])
def ctx(request, ctx1, ctx2):
    return ctx1 if request.param == 1 else ctx2


# -- problem validation ---------------------------------------------------------

def test_problem_validation(mesh2):
    with pytest.raises(ParameterError):
        ControlProblem(mesh2, LAPLACE, _zero, _zero, kappa=0.0)
    with pytest.raises(ParameterError):
        ControlProblem(mesh2, LAPLACE, _zero, lambda x: np.full(len(x), np.nan))
    with pytest.raises(ParameterError):
        ControlProblem(mesh2, LAPLACE, _zero, _zero, tracking="projected")
    level0 = lshape_hierarchy(0.5, 1)[0]
    with pytest.raises(ParameterError):
        build_context(ControlProblem(level0, LAPLACE, _zero, _zero))


# -- context --------------------------------------------------------------------

def test_context_sizes():
    c = _ctx(1, 2)
    assert c.mesh.n_nodes == 81
    # boundary count from geometry: nodes on the six boundary segments
    on_boundary = c.mesh.spec.boundary_distance(c.mesh.coords) <= 1e-12
    assert len(c.B) == int(on_boundary.sum()) == 34
    assert len(c.I) == 47
    assert c.n_solves == 0


def test_zero_data_gives_zero_w(mesh3):
    c = build_context(ControlProblem(mesh3, EX1_COEFFS, _zero, _zero))
    np.testing.assert_array_equal(c.w, 0.0)
    sol = solve_reduced(c)
    np.testing.assert_array_equal(sol.u, 0.0)
    assert sol.objective == 0.0
    mono = solve_kkt_monolithic(c)
    assert np.abs(mono.u).max() == 0.0 and np.abs(mono.y).max() == 0.0


def test_constant_ud_has_no_kappa_term(mesh3):
    c = build_context(ControlProblem(mesh3, EX1_COEFFS, corner_singular, lambda x: np.full(len(x), 2.5)))
    np.testing.assert_allclose(c.ztilde, 2.5, atol=1e-13)
    np.testing.assert_allclose(c.blocks["K_B:"] @ c.ztilde, 0.0, atol=1e-12)
    np.testing.assert_allclose(c.w, c.blocks["AtBI"] @ c.phitilde_I + c.ytilde[c.B], atol=1e-12)


def test_ztilde_boundary_exact(ctx1):
    np.testing.assert_array_equal(ctx1.ztilde[ctx1.B], corner_singular(ctx1.mesh.coords[ctx1.B]))


def test_kappa_term_sign_of_w(mesh3):
    """With y_d = 0 the data vector is ``+kappa K_B: z~``, the negative
    derivative of J_h at u = 0."""
    kappa = 0.1
    c = build_context(ControlProblem(mesh3, EX1_COEFFS, _zero, _affine, kappa=kappa))
    np.testing.assert_allclose(c.w, kappa * (c.blocks["K_B:"] @ c.ztilde), atol=1e-14)
    v = np.random.default_rng(1).standard_normal(len(c.B))
    eps = 1e-6
    fd = (objective(c, eps * v) - objective(c, -eps * v)) / (2 * eps)
    assert fd == pytest.approx(-(c.w @ v), rel=1e-7)


# -- harmonic extension ---------------------------------------------------------

def test_harmonic_extension_constants_and_affine(ctx1):
    m = ctx1.mesh
    np.testing.assert_allclose(harmonic_extend(ctx1, np.ones(len(ctx1.B))), 1.0, atol=1e-12)
    z = harmonic_extend(ctx1, _affine(m.coords[ctx1.B]))
    np.testing.assert_allclose(z, _affine(m.coords), atol=1e-12)


def test_harmonic_extension_minimizes_energy(rng):
    c = _ctx(1, 2)
    u = rng.standard_normal(len(c.B))
    z = harmonic_extend(c, u)
    ez = z @ (c.K @ z)
    for _ in range(100):
        w = z.copy()
        w[c.I] += rng.standard_normal(len(c.I)) * rng.choice([1e-3, 1e-1, 1.0])
        assert ez <= w @ (c.K @ w)


def test_harmonic_extension_max_principle(ctx1, rng):
    for _ in range(5):
        z = harmonic_extend(ctx1, rng.random(len(ctx1.B)))
        assert z.min() >= -1e-12 and z.max() <= 1 + 1e-12


# -- state ----------------------------------------------------------------------

def test_state_of_zero(ctx):
    np.testing.assert_array_equal(solve_state(ctx, np.zeros(len(ctx.B))), 0.0)


@pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
def test_patch_test(level):
    m = lshape_hierarchy(0.5, 5)[level]
    c = build_context(ControlProblem(m, LAPLACE, _affine, _affine))
    y = solve_state(c, _affine(m.coords[c.B]))
    np.testing.assert_allclose(y, _affine(m.coords), atol=1e-12)


def test_state_of_exact_trace_converges():
    hier = lshape_hierarchy(0.5, 6)
    errs = []
    for m in hier[3:]:
        c = build_context(setup_example1(0.5, mesh=m)[0])
        y = solve_state(c, corner_singular(m.coords[c.B]))
        errs.append(h1_error(m, y, corner_singular, corner_singular_grad))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.diff(errs) < 0)
    assert abs(rates[-1] - 1.0) < 0.15


def test_state_adjoint_identity(ctx, rng):
    """<S u, g> = <u, S^T g> with S u = -A_II^-1 A_IB u."""
    b = ctx.blocks
    for _ in range(3):
        u = rng.standard_normal(len(ctx.B))
        g = rng.standard_normal(len(ctx.I))
        Su = ctx.lu_A.solve(-(b["AIB"] @ u))
        Stg = -(b["AtBI"] @ ctx.lu_A.solve_transpose(g))
        assert Su @ g == pytest.approx(u @ Stg, rel=1e-10)


# -- T --------------------------------------------------------------------------

def test_T_of_zero(ctx):
    np.testing.assert_array_equal(apply_T(ctx, np.zeros(len(ctx.B))), 0.0)


def test_T_symmetric_positive(ctx, rng):
    for _ in range(10):
        u, v = rng.standard_normal((2, len(ctx.B)))
        tu, tv = apply_T(ctx, u), apply_T(ctx, v)
        assert abs(tu @ v - tv @ u) <= 1e-10 * np.linalg.norm(tu) * np.linalg.norm(v)
        assert tu @ u > 0


def test_T_matches_explicit_operator(ctx1):
    """T = S^T M S + kappa H^T K H built densely on the full node space."""
    c = _ctx(1, 2)
    nB, n = len(c.B), c.mesh.n_nodes
    M, K = c.M.toarray(), c.K.toarray()
    A = c.A.toarray()
    I, B = c.I, c.B
    S = np.zeros((n, nB))
    S[B] = np.eye(nB)
    S[I] = -np.linalg.solve(A[np.ix_(I, I)], A[np.ix_(I, B)])
    H = np.zeros((n, nB))
    H[B] = np.eye(nB)
    H[I] = -np.linalg.solve(K[np.ix_(I, I)], K[np.ix_(I, B)])
    T = S.T @ M @ S + c.kappa * H.T @ K @ H
    Tm = np.column_stack([apply_T(c, e) for e in np.eye(nB)])
    np.testing.assert_allclose(Tm, T, atol=1e-12 * np.abs(T).max())


def test_six_solve_budget(ctx, rng):
    counts = (ctx.lu_A.n_solves, ctx.chol_K.n_solves, ctx.lu_Abb.n_solves)
    apply_T(ctx, rng.standard_normal(len(ctx.B)))
    after = (ctx.lu_A.n_solves, ctx.chol_K.n_solves, ctx.lu_Abb.n_solves)
    # state and adjoint with A_II, harmonic extension with K_II
    assert tuple(a - b for a, b in zip(after, counts)) == (2, 1, 0)


def test_preconditioner_two_solves(ctx1, rng):
    before = ctx1.lu_Abb.n_solves
    r = rng.standard_normal(len(ctx1.B))
    z = preconditioner(ctx1)(r)
    assert ctx1.lu_Abb.n_solves - before == 2
    Abb = ctx1.blocks["ABB"]
    np.testing.assert_allclose(Abb @ (Abb.T @ z), r, atol=1e-10 * np.abs(r).max())


# -- objective and gradient -----------------------------------------------------

@pytest.mark.parametrize("tracking", ["interpolant", "pointwise"])
def test_objective_zero_at_consistent_data(mesh3, tracking):
    c = build_context(ControlProblem(mesh3, LAPLACE, _affine, _affine, tracking=tracking))
    u = _affine(mesh3.coords[c.B])
    assert objective(c, u) == pytest.approx(0.0, abs=1e-24)


def test_gradient_finite_differences(ctx, rng):
    u = rng.standard_normal(len(ctx.B))
    g = gradient(ctx, u)
    eps = 1e-5
    for _ in range(5):
        v = rng.standard_normal(len(ctx.B))
        fd = (objective(ctx, u + eps * v) - objective(ctx, u - eps * v)) / (2 * eps)
        assert abs(fd - g @ v) <= 1e-6 * (1 + abs(g @ v))


def test_gradient_linearity(ctx, rng):
    u1, u2 = rng.standard_normal((2, len(ctx.B)))
    lhs = gradient(ctx, u1 + u2) + ctx.w
    rhs = (gradient(ctx, u1) + ctx.w) + (gradient(ctx, u2) + ctx.w)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(lhs).max())


def test_objective_is_quadratic_in_T(ctx, rng):
    """J(u) - J(0) = 1/2 u.Tu - w.u."""
    u = rng.standard_normal(len(ctx.B))
    lhs = objective(ctx, u) - objective(ctx, np.zeros(len(ctx.B)))
    assert lhs == pytest.approx(0.5 * u @ apply_T(ctx, u) - ctx.w @ u, rel=1e-10)


def test_descent_along_negative_gradient(ctx, rng):
    u = rng.standard_normal(len(ctx.B))
    g = gradient(ctx, u)
    j0 = objective(ctx, u)
    for t in (1e-1, 1e-2, 1e-3):
        assert objective(ctx, u - t * g / np.linalg.norm(g)) < j0


def test_pointwise_tracking_close_to_interpolant():
    m = lshape_hierarchy(0.5, 4)[4]
    a = solve_reduced(build_context(setup_example1(0.5, mesh=m)[0]))
    prob = ControlProblem(m, EX1_COEFFS, setup_example1(0.5, mesh=m)[0].y_d, corner_singular,
                          tracking="pointwise")
    b = solve_reduced(build_context(prob))
    assert abs(a.objective - b.objective) < 2e-2
    assert a.objective != b.objective


# -- solvers --------------------------------------------------------------------

def test_solution_fields(ctx):
    sol = solve_reduced(ctx)
    np.testing.assert_array_equal(sol.y[ctx.B], sol.u)
    np.testing.assert_array_equal(sol.phi[ctx.B], 0.0)
    np.testing.assert_array_equal(sol.z[ctx.B], sol.u)
    assert sol.pcg.converged
    assert np.linalg.norm(gradient(ctx, sol.u)) <= 1e-10 * np.linalg.norm(ctx.w)
    assert sol.objective == pytest.approx(objective(ctx, sol.u), rel=1e-14)
    assert tracking_term(ctx, sol.y) <= sol.objective


def test_adjoint_equation(ctx):
    """A_II^T phi_I = M_I: y - y~_I for the optimal pair."""
    sol = solve_reduced(ctx)
    b = ctx.blocks
    lhs = b["AII"].T @ sol.phi[ctx.I]
    rhs = (ctx.M @ sol.y)[ctx.I] - ctx.ytilde[ctx.I]
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())


def test_unpreconditioned_same_limit(ctx):
    a = solve_reduced(ctx)
    b = solve_reduced(ctx, precondition=False)
    np.testing.assert_allclose(a.u, b.u, atol=1e-8)


def test_pcg_failure_raises(ctx1):
    with pytest.raises(SolverError) as info:
        solve_reduced(ctx1, maxit=1)
    assert info.value.report is not None and not info.value.report.converged


@pytest.mark.parametrize("example", [1, 2])
@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_reduced_matches_monolithic(example, level):
    c = _ctx(example, level)
    a = solve_reduced(c)
    b = solve_kkt_monolithic(c)
    assert np.abs(a.u - b.u).max() <= 1e-8
    assert abs(a.objective - b.objective) <= 1e-9
    np.testing.assert_allclose(a.phi, b.phi, atol=1e-8)


def test_kkt_system_shape(ctx1):
    mat, rhs = kkt_system(ctx1)
    n = 3 * len(ctx1.I) + len(ctx1.B)
    assert mat.shape == (n, n) and rhs.shape == (n,)


# -- paper values ---------------------------------------------------------------

def test_example1_objective_level3():
    assert solve_reduced(_ctx(1, 3)).objective == pytest.approx(0.19746119, abs=5e-4)


def test_example2_objective_level4():
    assert solve_reduced(_ctx(2, 4)).objective == pytest.approx(0.01365082, abs=5e-4)
