import numpy as np
import pytest

from brokenpde.coefficients import CoefficientModel
from brokenpde.errors import NoConvergence
from brokenpde.grid import GridSpec, ScalarField, sample
from brokenpde.oracles import harmonic_inversion_exact
from brokenpde.solver import BrokenProblem, assemble, harmonic_mean, nonlinear_residual, picard_solve, solve_linear

LAPLACE = CoefficientModel(s=0, a_plus="1", a_minus="1")


def test_problem_validation():
    g = GridSpec.square(9)
    with pytest.raises(ValueError):
        BrokenProblem(g, LAPLACE, tol_picard=0)
    with pytest.raises(ValueError):
        BrokenProblem(g, LAPLACE, theta=0)
    with pytest.raises(ValueError):
        BrokenProblem(g, LAPLACE, theta=1.5)


def test_assemble_laplacian_stencil():
    g = GridSpec.square(9)
    sys_ = assemble(BrokenProblem(g, LAPLACE), sample("0", g))
    op = sys_.operator.toarray()
    # the operator discretises -Laplace: +4/h^2 centre, -1/h^2 neighbours
    np.testing.assert_allclose(np.diag(op), 4 / g.h**2)
    off = op - np.diag(np.diag(op))
    assert set(np.unique(np.round(off * g.h**2, 12))) <= {-1.0, 0.0}
    assert np.all((off != 0).sum(axis=1) <= 4)
    np.testing.assert_allclose(op, op.T)


def test_edge_conductivities_1d():
    g = GridSpec.interval(9)
    m = CoefficientModel(s=0, a_plus="2", a_minus="1")
    u = ScalarField(g, np.array([-1.0, -0.5, 0.5, 1, 1, 1, 1, 1, 1]))
    (ke,) = assemble(BrokenProblem(g, m), u).edge_conductivities
    assert ke[0] == 1.0
    assert ke[1] == pytest.approx(4 / 3) == harmonic_mean(1.0, 2.0)
    assert ke[2] == 2.0


def test_rhs_is_divergence_of_forcing():
    g = GridSpec.square(17)
    flat = CoefficientModel(s=0, a_plus="1", a_minus="1", f_x="1", f_y="0")
    assert np.all(assemble(BrokenProblem(g, flat), sample("0", g)).rhs == 0)
    m = CoefficientModel(s=0, a_plus="1", a_minus="1", f_x="x^2", f_y="y")
    rhs = assemble(BrokenProblem(g, m), sample("0", g)).rhs.reshape(15, 15) / g.h**2
    X, Y = g.mesh()
    # -div f, centered differences are exact on quadratics
    np.testing.assert_allclose(rhs, -(2 * X[1:-1, 1:-1] + 1), atol=1e-10)


@pytest.mark.parametrize("g_expr, tol", [("x", 1e-10), ("x^2-y^2", 1e-9), ("0", 0.0)])
def test_linear_solve_harmonic(g_expr, tol):
    g = GridSpec.square(33)
    sys_ = assemble(BrokenProblem(g, LAPLACE, g_expr), sample("0", g))
    u = solve_linear(sys_)
    assert np.max(np.abs(u.values - sample(g_expr, g).values)) <= tol


def test_linear_solve_reports_non_convergence():
    g = GridSpec.square(33)
    sys_ = assemble(BrokenProblem(g, LAPLACE, "x^2-y^2"), sample("0", g))
    with pytest.raises(NoConvergence) as info:
        solve_linear(sys_, tol=1e-12, maxiter=2)
    assert info.value.iterations >= 2


def test_picard_laplacian_one_step():
    g = GridSpec.square(33)
    rep = picard_solve(BrokenProblem(g, LAPLACE, "x"))
    assert rep.converged and rep.picard_iterations <= 2
    np.testing.assert_allclose(rep.u.values, sample("x", g).values, atol=1e-10)


@pytest.mark.parametrize("fixture", ["broken_s0", "broken_s1"])
def test_fixed_point_residual(fixture, request):
    m, rep = request.getfixturevalue(fixture)
    assert rep.converged
    assert rep.final_nonlinear_residual <= 10 * 1e-10 * rep.u.sup()
    prob = BrokenProblem(rep.u.grid, m, "x")
    assert nonlinear_residual(prob, rep.u) == pytest.approx(rep.final_nonlinear_residual)


@pytest.mark.parametrize(
    "model, g_expr",
    [
        (dict(s=0, a_plus="2", a_minus="1"), "x"),
        (dict(s=0, a_plus="2+0.2*x^2", a_minus="1+0.1*y^2"), "x^2-y^2"),
        (dict(s=1, a="1", b="1"), "sin(3*x)*cos(2*y)"),
    ],
)
def test_discrete_maximum_principle(model, g_expr):
    g = GridSpec.square(33)
    rep = picard_solve(BrokenProblem(g, CoefficientModel(**model), g_expr))
    gb = sample(g_expr, g).values[g.boundary_mask()]
    assert rep.u.values.min() >= gb.min() - 1e-12
    assert rep.u.values.max() <= gb.max() + 1e-12


@pytest.mark.parametrize(
    "a_plus, a_minus, g_expr",
    [("2", "1", "x+0.3*y"), ("2", "1", "x+1e-3"), ("2+0.2*x^2", "1+0.1*y^2", "x+0.4*y^2")],
)
def test_sign_equivariance(a_plus, a_minus, g_expr):
    g = GridSpec.square(33)
    m = CoefficientModel(s=0, a_plus=a_plus, a_minus=a_minus)
    u = picard_solve(BrokenProblem(g, m, g_expr)).u.values
    assert not np.any(u == 0)
    v = picard_solve(BrokenProblem(g, m.swapped(), f"-({g_expr})")).u.values
    assert np.max(np.abs(u + v)) <= 1e-8


def test_sign_equivariance_breaks_only_at_exact_zeros():
    # g = x vanishes exactly at two boundary nodes; H(0) = 0 gives them the minus
    # phase in both problems, so the swap is not a pure relabelling there
    g = GridSpec.square(33)
    m = CoefficientModel(s=0, a_plus="2", a_minus="1")
    u = picard_solve(BrokenProblem(g, m, "x")).u.values
    v = picard_solve(BrokenProblem(g, m.swapped(), "-x")).u.values
    assert np.count_nonzero(u == 0) == 2
    assert 1e-8 < np.max(np.abs(u + v)) < 2 * g.h


@pytest.mark.parametrize("model", [dict(s=0, a_plus="2", a_minus="1"), dict(s=1, a="1", b="1")])
def test_mesh_convergence_against_oracle(model):
    m = CoefficientModel(**model)
    errs = []
    for n in (65, 129):
        g = GridSpec.square(n)
        u = picard_solve(BrokenProblem(g, m, "x")).u
        ref = harmonic_inversion_exact(m, "x", g).metadata["nodal"]
        errs.append(np.max(np.abs(u.values - ref.values)))
    assert errs[0] / errs[1] >= 1.7


def test_forced_non_convergence_is_reported():
    g = GridSpec.square(33)
    rep = picard_solve(BrokenProblem(g, CoefficientModel(s=0, a_plus="2", a_minus="1"), "x^2-y^2", max_picard=1))
    assert not rep.converged and rep.picard_iterations == 1
    assert rep.to_dict()["converged"] is False


def test_damping_floor():
    g = GridSpec.square(17)
    rep = picard_solve(BrokenProblem(g, CoefficientModel(s=0, a_plus="2", a_minus="1"), "x", theta=0.5))
    assert rep.converged
    assert min(rep.theta_history) >= 1 / 16
