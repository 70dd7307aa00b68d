"""Single-level reference discretizations on a global mesh."""

import numpy as np
import pytest

from mhmelast import (BrennerProblem, LinearProblem, MaterialField,
                      compute_errors, solve_galerkin_dirichlet,
                      solve_gals_dirichlet, unit_square_mesh)


def _zero(x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1] + (2,))


def test_zero_data_gives_zero_solution():
    mesh = unit_square_mesh(4)
    mat = MaterialField(1.0, 0.3)
    for sol in (solve_galerkin_dirichlet(mesh, mat, 1, _zero),
                solve_gals_dirichlet(mesh, mat, 1, _zero)):
        assert np.abs(sol.u).max() < 1e-13
        if sol.p is not None:
            assert np.abs(sol.p).max() < 1e-13


@pytest.mark.parametrize("k", [1, 2])
def test_linear_patch_exactness(k):
    problem = LinearProblem([[0.3, 0.1], [-0.2, 0.4]], [0.05, -0.02], nu=0.3)
    mesh = unit_square_mesh(4)
    for solver in (solve_galerkin_dirichlet, solve_gals_dirichlet):
        sol = solver(mesh, problem.material, k, problem.f,
                     u_dirichlet=problem.u)
        rec = compute_errors(sol, problem)
        assert rec.l2_u < 1e-11
        assert rec.h1_u < 1e-10
        assert rec.l2_sigma < 1e-9
        assert rec.l2_p < 1e-9


def test_solution_kinds_and_pressure():
    mesh = unit_square_mesh(2)
    mat = MaterialField(1.0, 0.3)
    ga = solve_galerkin_dirichlet(mesh, mat, 1, _zero)
    gl = solve_gals_dirichlet(mesh, mat, 1, _zero)
    assert ga.kind == "galerkin" and ga.p is None
    assert gl.kind == "gals" and gl.p is not None
    assert gl.p.shape == (gl.dofh.n_dofs,)


def test_boundary_values_interpolate_data():
    problem = BrennerProblem(0.3)
    mesh = unit_square_mesh(4)
    sol = solve_gals_dirichlet(mesh, problem.material, 2, problem.f,
                               u_dirichlet=problem.u)
    bdofs = sol.dofh.boundary_scalar_dofs()
    got = np.column_stack([sol.u[2 * bdofs], sol.u[2 * bdofs + 1]])
    want = problem.u(sol.dofh.dof_coords[bdofs])
    assert np.abs(got - want).max() < 1e-12


def test_methods_agree_away_from_incompressibility():
    # at a moderate Poisson ratio both discretizations resolve the benchmark
    # comparably well
    problem = BrennerProblem(0.2)
    mesh = unit_square_mesh(16)
    e = []
    for solver in (solve_galerkin_dirichlet, solve_gals_dirichlet):
        sol = solver(mesh, problem.material, 1, problem.f,
                     u_dirichlet=problem.u)
        e.append(compute_errors(sol, problem).h1_u)
    assert 0.5 < e[0] / e[1] < 2.0
