import numpy as np
import pytest

from afem_ocp.fem import DEGREE5, P1Space, assemble_stiffness, l2_norm_error
from afem_ocp.harness.problems import example1, example2, smoke
from afem_ocp.mesh import make_initial_mesh, refine_uniform
from afem_ocp.ocp import (OcpConvergenceError, OcpProblem, SolverOptions, kkt_check,
                          project_control, reduced_functional, reduced_gradient, solve_ocp)


def zero(x):
    return np.zeros(len(x))


def test_projection_examples():
    assert project_control(-0.05, 0.1, -0.3, 1.0) == pytest.approx(0.5)
    assert project_control(1e6, 0.1, -0.3, 1.0) == -0.3
    assert project_control(-0.1 * 1.0, 0.1, -0.3, 1.0) == 1.0
    assert np.array_equal(project_control(np.array([0.5, -0.5]), 1.0, -0.2, 0.2), [-0.2, 0.2])
    with pytest.raises(ValueError):
        project_control(0.0, 0.0, -1, 1)


def test_problem_validation():
    with pytest.raises(ValueError):
        OcpProblem(0.0, -1, 1, zero)
    with pytest.raises(ValueError):
        OcpProblem(1.0, 1, 1, zero)


def test_zero_data_zero_solution():
    space = P1Space(refine_uniform(make_initial_mesh("square2"), 1))
    sol = solve_ocp(space, OcpProblem(0.5, -1.0, 2.0, zero))
    assert not sol.y.any() and not sol.p.any()
    assert not sol.control_at().any()


def test_inactive_bounds_match_monolithic_oracle():
    base = smoke().prob
    prob = OcpProblem(base.alpha, -1e6, 1e6, base.y_d, base.f_extra)
    space = P1Space(refine_uniform(make_initial_mesh("unit-square"), 2))
    sol = solve_ocp(space, prob, SolverOptions(tol=1e-13, linear_tol=1e-13))

    # u = -p / alpha at the quadrature points closes the linear system
    K = assemble_stiffness(space).toarray()
    qp = space.quadrature(DEGREE5)
    E = space.free_evaluation(DEGREE5).toarray()
    M = E.T @ (qp.weights[:, None] * E)
    n = space.n_dofs
    system = np.block([[K, M / prob.alpha], [-M, K]])
    rhs = np.concatenate([E.T @ (qp.weights * prob.f_extra(qp.points)),
                          -E.T @ (qp.weights * prob.y_d(qp.points))])
    oracle = np.linalg.solve(system, rhs)
    assert np.allclose(sol.y, oracle[:n], atol=1e-8, rtol=0)
    assert np.allclose(sol.p, oracle[n:], atol=1e-8, rtol=0)


def test_example1_descent_and_control_convergence():
    ex = example1()
    errs = []
    for level in (1, 2, 3):
        space = P1Space(refine_uniform(ex.initial_mesh(), level))
        sol = solve_ocp(space, ex.prob)
        hist = np.array(sol.functional_history)
        assert np.all(np.diff(hist) <= 1e-14 * np.abs(hist[:-1]))
        assert np.max(np.abs(sol.control_at() - project_control(
            space.values_at(sol.p), ex.prob.alpha, ex.prob.a, ex.prob.b))) == 0.0
        errs.append(l2_norm_error(space, sol.control_at(), ex.prob.exact.u))
    # mesh size halves per level; second order would give ratio 1/4
    assert errs[2] / errs[1] < 0.35
    assert errs[2] < 5e-3


def test_small_alpha_descends_monotonically():
    ex = example2()
    space = P1Space(ex.initial_mesh())
    sol = solve_ocp(space, ex.prob)
    hist = np.array(sol.functional_history)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))
    assert sol.kkt_residual <= 1e-10 * max(1.0, np.sqrt(space.quadrature().integrate(
        sol.control_at() ** 2)))


def test_non_convergence_carries_iterate():
    ex = example2()
    space = P1Space(ex.initial_mesh())
    with pytest.raises(OcpConvergenceError) as info:
        solve_ocp(space, ex.prob, SolverOptions(max_outer=2))
    err = info.value
    assert err.solution is not None and err.solution.outer_iterations == 2
    assert len(err.history) == 3


def test_invalid_tolerance():
    space = P1Space(make_initial_mesh("square2"))
    with pytest.raises(ValueError):
        solve_ocp(space, example2().prob, SolverOptions(tol=0.0))


def test_reduced_functional_trivial_values():
    space = P1Space(refine_uniform(make_initial_mesh("unit-square"), 2))
    n = len(space.quadrature().weights)
    assert reduced_functional(space, OcpProblem(1.0, -1, 1, zero), np.zeros(n)) == 0.0
    one = OcpProblem(1.0, -1, 1, lambda x: np.ones(len(x)))
    assert reduced_functional(space, one, np.zeros(n)) == pytest.approx(0.5, abs=1e-14)


def test_reduced_functional_directional_derivative():
    ex = smoke()
    space = P1Space(refine_uniform(ex.initial_mesh(), 1))
    qp = space.quadrature()
    rng = np.random.default_rng(5)
    u = rng.uniform(ex.prob.a, ex.prob.b, len(qp.weights))
    grad = reduced_gradient(space, ex.prob, u)
    eps = 1e-5
    for _ in range(3):
        du = rng.normal(size=u.shape)
        fd = (reduced_functional(space, ex.prob, u + eps * du)
              - reduced_functional(space, ex.prob, u - eps * du)) / (2 * eps)
        assert fd == pytest.approx(qp.integrate(grad * du), rel=1e-5)


def test_reduced_functional_accepts_solution_and_callable():
    ex = smoke()
    space = P1Space(ex.initial_mesh())
    sol = solve_ocp(space, ex.prob)
    a = reduced_functional(space, ex.prob, sol)
    b = reduced_functional(space, ex.prob, sol.control_at())
    assert a == pytest.approx(b, rel=1e-13)
    assert a == pytest.approx(sol.functional_history[-1], rel=1e-9)
    c = reduced_functional(space, ex.prob, ex.prob.exact.u)
    assert c >= a - 1e-12


def test_kkt_check_on_solution():
    ex = example1()
    space = P1Space(refine_uniform(ex.initial_mesh(), 1))
    sol = solve_ocp(space, ex.prob)
    check = kkt_check(sol, rng=0)
    assert check.vi_min >= -1e-8
    assert check.grad_rel_err <= 1e-4
    assert check.n_samples == 8
